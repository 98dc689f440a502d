/*
 * Copyright 2026 The graphfuse Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef GRAPHFUSE_ERRORS_HPP_
#define GRAPHFUSE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace graphfuse {

// Shapes that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values, zero norms, empty softmax slices.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: out-of-range epoch, missing gradient, bad ids.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid ModelConfig or hyperparameter.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad labels, targets, or vocabulary lookups.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Corrupt or version-mismatched corpus/checkpoint bytes.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Scene or question generation could not satisfy its constraints.
class GeneratorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint that does not belong to the requested configuration.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace graphfuse

#endif  // GRAPHFUSE_ERRORS_HPP_
