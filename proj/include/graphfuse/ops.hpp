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

// Differentiable operations on Tensor. Matrices are rank 2, vectors rank 1;
// a rank-1 tensor reads as a single row where a matrix is expected.

#ifndef GRAPHFUSE_OPS_HPP_
#define GRAPHFUSE_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "graphfuse/errors.hpp"
#include "graphfuse/random.hpp"
#include "graphfuse/tensor.hpp"

namespace graphfuse {

/// Boolean tensor stored flat; same element order as the tensor it masks.
using Mask = std::vector<std::uint8_t>;

namespace ops {

namespace detail {

using graphfuse::detail::make_result;
using graphfuse::detail::Node;
using graphfuse::detail::parent_grad;

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_str(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

inline void require_finite(std::span<const double> v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite input");
    }
  }
}

// outer x n x inner decomposition of a reduction along `axis`.
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
  std::size_t index(std::size_t o, std::size_t j, std::size_t i) const {
    return (o * n + j) * inner + i;
  }
};

inline AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape));
  }
  AxisView v;
  for (std::size_t d = 0; d < axis; ++d) v.outer *= shape[d];
  v.n = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) v.inner *= shape[d];
  return v;
}

inline void softmax_backward(const AxisView& v, std::span<const double> y,
                             std::span<const double> g, std::span<double> dx) {
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < v.n; ++j) {
        const std::size_t k = v.index(o, j, i);
        dot += g[k] * y[k];
      }
      for (std::size_t j = 0; j < v.n; ++j) {
        const std::size_t k = v.index(o, j, i);
        dx[k] += y[k] * (g[k] - dot);
      }
    }
  }
}

}  // namespace detail

/// a[m x k] * b[k x n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dims differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* c = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  return detail::make_result({m, n}, std::move(out), {a, b},
                             [m, k, n](detail::Node& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    const auto& G = self.grad;
    if (auto dA = detail::parent_grad(self, 0); !dA.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = G.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B.data() + p * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[j] * brow[j];
          dA[i * k + p] += s;
        }
      }
    }
    if (auto dB = detail::parent_grad(self, 1); !dB.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = G.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          double* db = dB.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) db[j] += av * g[j];
        }
      }
    }
  });
}

/// a[m x k] * b[n x k]^T; the row-major friendly form of x W^T.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() > 2 || b.rank() != 2) {
    throw DimensionError("matmul_nt: expected matrices, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dims differ, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                         "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = B.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out[i * n + j] = s;
    }
  }
  return detail::make_result({m, n}, std::move(out), {a, b},
                             [m, k, n](detail::Node& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    const auto& G = self.grad;
    auto dA = detail::parent_grad(self, 0);
    auto dB = detail::parent_grad(self, 1);
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = A.data() + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double g = G[i * n + j];
        if (g == 0.0) continue;
        const double* brow = B.data() + j * k;
        if (!dA.empty()) {
          double* da = dA.data() + i * k;
          for (std::size_t p = 0; p < k; ++p) da[p] += g * brow[p];
        }
        if (!dB.empty()) {
          double* db = dB.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) db[p] += g * arow[p];
        }
      }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return detail::make_result({n, m}, std::move(out), {a},
                             [m, n](detail::Node& self) {
    auto dA = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dA[i * n + j] += self.grad[j * m + i];
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " +
                         shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return detail::make_result(std::move(shape), std::move(out), {a},
                             [](detail::Node& self) {
    auto dA = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += self.grad[i];
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b},
                             [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto d = detail::parent_grad(self, p);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b},
                             [](detail::Node& self) {
    auto da = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i];
    auto db = detail::parent_grad(self, 1);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] -= self.grad[i];
  });
}

/// Elementwise (Hadamard) product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b},
                             [](detail::Node& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    auto da = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i] * B[i];
    auto db = detail::parent_grad(self, 1);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] += self.grad[i] * A[i];
  });
}

/// x[m x n] + b[n] broadcast over rows.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (b.rank() != 1 || b.numel() != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) +
                         " does not match " + shape_str(x.shape()));
  }
  const std::size_t n = x.cols();
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
  return detail::make_result(x.shape(), std::move(out), {x, b},
                             [n](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
    auto db = detail::parent_grad(self, 1);
    if (!db.empty()) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        db[i % n] += self.grad[i];
    }
  });
}

inline Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
  return detail::make_result(x.shape(), std::move(out), {x},
                             [c](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += c * self.grad[i];
  });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return detail::make_result(x.shape(), std::move(out), {x},
                             [](detail::Node& self) {
    const auto& X = self.parents[0]->value;
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (X[i] > 0.0) dx[i] += self.grad[i];
  });
}

inline Tensor square(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * x[i];
  return detail::make_result(x.shape(), std::move(out), {x},
                             [](detail::Node& self) {
    const auto& X = self.parents[0]->value;
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i)
      dx[i] += 2.0 * X[i] * self.grad[i];
  });
}

/// max(x, lo); the gradient is cut where the clamp is active.
inline Tensor clamp_min(const Tensor& x, double lo) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(x[i], lo);
  return detail::make_result(x.shape(), std::move(out), {x},
                             [lo](detail::Node& self) {
    const auto& X = self.parents[0]->value;
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (X[i] > lo) dx[i] += self.grad[i];
  });
}

/// Sum of all elements, shape [1].
inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result({1}, {s}, {x}, [](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    for (double& d : dx) d += self.grad[0];
  });
}

/// Numerically stable softmax along `axis`.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  detail::require_finite(x.data(), "softmax");
  const detail::AxisView v = detail::axis_view(x.shape(), axis);
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < v.n; ++j) mx = std::max(mx, x[v.index(o, j, i)]);
      double z = 0.0;
      for (std::size_t j = 0; j < v.n; ++j) {
        const std::size_t k = v.index(o, j, i);
        out[k] = std::exp(x[k] - mx);
        z += out[k];
      }
      for (std::size_t j = 0; j < v.n; ++j) out[v.index(o, j, i)] /= z;
    }
  }
  return detail::make_result(x.shape(), std::move(out), {x},
                             [v](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    detail::softmax_backward(v, self.value, self.grad, dx);
  });
}

/// Softmax along `axis` restricted to mask-true entries; masked entries are
/// exactly zero.
inline Tensor masked_softmax(const Tensor& x, const Mask& mask,
                             std::size_t axis) {
  if (mask.size() != x.numel()) {
    throw DimensionError("masked_softmax: mask has " +
                         std::to_string(mask.size()) + " entries, tensor " +
                         shape_str(x.shape()));
  }
  detail::require_finite(x.data(), "masked_softmax");
  const detail::AxisView v = detail::axis_view(x.shape(), axis);
  std::vector<double> out(x.numel(), 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      bool any = false;
      for (std::size_t j = 0; j < v.n; ++j) {
        const std::size_t k = v.index(o, j, i);
        if (mask[k]) {
          mx = std::max(mx, x[k]);
          any = true;
        }
      }
      if (!any) throw NumericError("masked_softmax: slice with no true entry");
      double z = 0.0;
      for (std::size_t j = 0; j < v.n; ++j) {
        const std::size_t k = v.index(o, j, i);
        if (mask[k]) {
          out[k] = std::exp(x[k] - mx);
          z += out[k];
        }
      }
      for (std::size_t j = 0; j < v.n; ++j) out[v.index(o, j, i)] /= z;
    }
  }
  return detail::make_result(x.shape(), std::move(out), {x},
                             [v](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    detail::softmax_backward(v, self.value, self.grad, dx);
  });
}

/// One softmax over every mask-true entry of the tensor.
inline Tensor masked_softmax_all(const Tensor& x, const Mask& mask) {
  if (mask.size() != x.numel()) {
    throw DimensionError("masked_softmax_all: mask/tensor size mismatch");
  }
  const Tensor flat = reshape(x, {x.numel()});
  Tensor y = masked_softmax(flat, mask, 0);
  return reshape(y, x.shape());
}

/// Divides each row by its sum. Rows must have a positive sum.
inline Tensor row_normalize(const Tensor& x) {
  detail::require_matrix(x, "row_normalize");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.numel());
  std::vector<double> sums(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) sums[i] += x[i * n + j];
    if (!(sums[i] > 0.0)) throw NumericError("row_normalize: non-positive row sum");
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] / sums[i];
  }
  return detail::make_result(x.shape(), std::move(out), {x},
                             [m, n, sums](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        dot += self.grad[i * n + j] * self.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        dx[i * n + j] += (self.grad[i * n + j] - dot) / sums[i];
    }
  });
}

/// Mean over the rows flagged valid; x is [n x d], result [d].
inline Tensor mean_pool(const Tensor& x, const Mask& valid) {
  const std::size_t n = x.rows(), d = x.cols();
  if (valid.size() != n) {
    throw DimensionError("mean_pool: " + std::to_string(valid.size()) +
                         " flags for " + std::to_string(n) + " rows");
  }
  std::size_t count = 0;
  for (auto f : valid) count += f ? 1 : 0;
  if (count == 0) throw NumericError("mean_pool: no valid rows");
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    if (!valid[r]) continue;
    for (std::size_t c = 0; c < d; ++c) out[c] += x[r * d + c];
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (double& o : out) o *= inv;
  return detail::make_result({d}, std::move(out), {x},
                             [valid, n, d, inv](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t r = 0; r < n; ++r) {
      if (!valid[r]) continue;
      for (std::size_t c = 0; c < d; ++c) dx[r * d + c] += self.grad[c] * inv;
    }
  });
}

/// Column sums of a matrix: [m x n] -> [n].
inline Tensor column_sum(const Tensor& x) {
  detail::require_matrix(x, "column_sum");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
  return detail::make_result({n}, std::move(out), {x},
                             [m, n](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += self.grad[j];
  });
}

/// x / sum(x). The sum must be nonzero.
inline Tensor normalize_sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  if (s == 0.0 || !std::isfinite(s)) {
    throw NumericError("normalize_sum: degenerate sum");
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / s;
  return detail::make_result(x.shape(), std::move(out), {x},
                             [s](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    double dot = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      dot += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += (self.grad[i] - dot) / s;
  });
}

/// Cosine similarity of two equal-length vectors, shape [1].
inline Tensor cosine(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("cosine: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw NumericError("cosine: zero-norm vector");
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const double c = ab / (na * nb);
  return detail::make_result({1}, {c}, {a, b},
                             [na, nb, c](detail::Node& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    const double g = self.grad[0];
    auto da = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < da.size(); ++i)
      da[i] += g * (B[i] / (na * nb) - c * A[i] / (na * na));
    auto db = detail::parent_grad(self, 1);
    for (std::size_t i = 0; i < db.size(); ++i)
      db[i] += g * (A[i] / (na * nb) - c * B[i] / (nb * nb));
  });
}

/// Packs single-element tensors into a vector.
inline Tensor stack(const std::vector<Tensor>& scalars) {
  std::vector<double> out;
  out.reserve(scalars.size());
  for (const Tensor& s : scalars) {
    if (s.numel() != 1) throw DimensionError("stack: expects scalars");
    out.push_back(s[0]);
  }
  const std::size_t k = out.size();
  return detail::make_result({k}, std::move(out), scalars,
                             [k](detail::Node& self) {
    for (std::size_t i = 0; i < k; ++i) {
      auto d = detail::parent_grad(self, i);
      if (!d.empty()) d[0] += self.grad[i];
    }
  });
}

/// Element `i` of a tensor as shape [1].
inline Tensor element(const Tensor& x, std::size_t i) {
  if (i >= x.numel()) throw DimensionError("element: index out of range");
  return detail::make_result({1}, {x[i]}, {x}, [i](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    if (!dx.empty()) dx[i] += self.grad[0];
  });
}

/// sum_k w[k] * xs[k] for equally shaped xs.
inline Tensor weighted_sum(const Tensor& w, const std::vector<Tensor>& xs) {
  if (w.numel() != xs.size() || xs.empty()) {
    throw DimensionError("weighted_sum: weight count mismatch");
  }
  for (const Tensor& x : xs) detail::require_same_shape(xs[0], x, "weighted_sum");
  const std::size_t k = xs.size(), n = xs[0].numel();
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t i = 0; i < n; ++i) out[i] += w[t] * xs[t][i];
  std::vector<Tensor> parents{w};
  parents.insert(parents.end(), xs.begin(), xs.end());
  return detail::make_result(xs[0].shape(), std::move(out), parents,
                             [k, n](detail::Node& self) {
    const auto& W = self.parents[0]->value;
    auto dw = detail::parent_grad(self, 0);
    for (std::size_t t = 0; t < k; ++t) {
      const auto& X = self.parents[t + 1]->value;
      if (!dw.empty()) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += self.grad[i] * X[i];
        dw[t] += s;
      }
      auto dx = detail::parent_grad(self, t + 1);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += W[t] * self.grad[i];
    }
  });
}

/// Elementwise mean of equally shaped tensors.
inline Tensor average(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw DimensionError("average: no inputs");
  for (const Tensor& x : xs) detail::require_same_shape(xs[0], x, "average");
  const std::size_t n = xs[0].numel();
  const double inv = 1.0 / static_cast<double>(xs.size());
  std::vector<double> out(n, 0.0);
  for (const Tensor& x : xs)
    for (std::size_t i = 0; i < n; ++i) out[i] += x[i];
  for (double& o : out) o *= inv;
  return detail::make_result(xs[0].shape(), std::move(out), xs,
                             [inv](detail::Node& self) {
    for (std::size_t t = 0; t < self.parents.size(); ++t) {
      auto dx = detail::parent_grad(self, t);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += inv * self.grad[i];
    }
  });
}

/// Horizontal concatenation of matrices with equal row counts.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t t = 0; t < parts.size(); ++t) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[t]; ++j)
        out[i * total + off + j] = parts[t][i * widths[t] + j];
    off += widths[t];
  }
  return detail::make_result({m, total}, std::move(out), parts,
                             [m, total, widths](detail::Node& self) {
    std::size_t off = 0;
    for (std::size_t t = 0; t < widths.size(); ++t) {
      auto dp = detail::parent_grad(self, t);
      if (!dp.empty()) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[t]; ++j)
            dp[i * widths[t] + j] += self.grad[i * total + off + j];
      }
      off += widths[t];
    }
  });
}

/// Columns [start, start + len) of a matrix.
inline Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
  detail::require_matrix(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (start + len > n || len == 0) {
    throw DimensionError("slice_cols: range out of bounds for " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(m * len);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < len; ++j) out[i * len + j] = x[i * n + start + j];
  return detail::make_result({m, len}, std::move(out), {x},
                             [m, n, start, len](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < len; ++j)
        dx[i * n + start + j] += self.grad[i * len + j];
  });
}

/// Selected rows, in the given order.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  const std::size_t m = x.rows(), d = x.cols();
  if (idx.empty()) throw DimensionError("gather_rows: empty index set");
  for (std::size_t r : idx) {
    if (r >= m) throw DimensionError("gather_rows: row index out of range");
  }
  std::vector<double> out(idx.size() * d);
  for (std::size_t t = 0; t < idx.size(); ++t)
    std::copy_n(x.data().begin() + idx[t] * d, d, out.begin() + t * d);
  return detail::make_result({idx.size(), d}, std::move(out), {x},
                             [idx, d](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t t = 0; t < idx.size(); ++t)
      for (std::size_t c = 0; c < d; ++c) dx[idx[t] * d + c] += self.grad[t * d + c];
  });
}

/// x[idx, idx] of a square matrix.
inline Tensor gather_submatrix(const Tensor& x,
                               const std::vector<std::size_t>& idx) {
  detail::require_matrix(x, "gather_submatrix");
  const std::size_t n = x.cols();
  const std::size_t p = idx.size();
  if (p == 0) throw DimensionError("gather_submatrix: empty index set");
  for (std::size_t r : idx) {
    if (r >= x.rows() || r >= n) {
      throw DimensionError("gather_submatrix: index out of range");
    }
  }
  std::vector<double> out(p * p);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) out[a * p + b] = x[idx[a] * n + idx[b]];
  return detail::make_result({p, p}, std::move(out), {x},
                             [idx, n, p](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b)
        dx[idx[a] * n + idx[b]] += self.grad[a * p + b];
  });
}

/// Rows of `table` selected by id; rows with valid == false are zero and
/// receive no gradient.
inline Tensor embedding(const Tensor& table, const std::vector<std::uint32_t>& ids,
                        const Mask& valid) {
  detail::require_matrix(table, "embedding");
  if (ids.size() != valid.size() || ids.empty()) {
    throw DimensionError("embedding: ids/mask length mismatch");
  }
  const std::size_t vocab = table.rows(), d = table.cols(), n = ids.size();
  std::vector<double> out(n * d, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    if (!valid[t]) continue;
    if (ids[t] >= vocab) {
      throw DataError("embedding: token id " + std::to_string(ids[t]) +
                      " outside table of " + std::to_string(vocab));
    }
    std::copy_n(table.data().begin() + ids[t] * d, d, out.begin() + t * d);
  }
  return detail::make_result({n, d}, std::move(out), {table},
                             [ids, valid, d](detail::Node& self) {
    auto dt = detail::parent_grad(self, 0);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (!valid[t]) continue;
      for (std::size_t c = 0; c < d; ++c) dt[ids[t] * d + c] += self.grad[t * d + c];
    }
  });
}

/// Per-row layer normalization with learned gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  const std::size_t m = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: parameter width mismatch");
  }
  std::vector<double> xhat(m * d), out(m * d), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += x[i * d + c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double z = x[i * d + c] - mu;
      var += z * z;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[i * d + c] = (x[i * d + c] - mu) * inv_std[i];
      out[i * d + c] = gain[c] * xhat[i * d + c] + bias[c];
    }
  }
  return detail::make_result(x.shape(), std::move(out), {x, gain, bias},
                             [m, d, xhat = std::move(xhat),
                              inv_std = std::move(inv_std)](detail::Node& self) {
    const auto& G = self.parents[1]->value;
    auto dx = detail::parent_grad(self, 0);
    auto dg = detail::parent_grad(self, 1);
    auto db = detail::parent_grad(self, 2);
    const double invd = 1.0 / static_cast<double>(d);
    for (std::size_t i = 0; i < m; ++i) {
      const double* g = self.grad.data() + i * d;
      const double* xh = xhat.data() + i * d;
      if (!dg.empty())
        for (std::size_t c = 0; c < d; ++c) dg[c] += g[c] * xh[c];
      if (!db.empty())
        for (std::size_t c = 0; c < d; ++c) db[c] += g[c];
      if (!dx.empty()) {
        double mean_g = 0.0, mean_gx = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double gh = g[c] * G[c];
          mean_g += gh;
          mean_gx += gh * xh[c];
        }
        mean_g *= invd;
        mean_gx *= invd;
        for (std::size_t c = 0; c < d; ++c)
          dx[i * d + c] += inv_std[i] * (g[c] * G[c] - mean_g - xh[c] * mean_gx);
      }
    }
  });
}

/// Inverted dropout: survivors scaled by 1/(1-p) in training, identity in
/// eval mode.
inline Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] = x[i] * mask[i];
  }
  return detail::make_result(x.shape(), std::move(out), {x},
                             [mask = std::move(mask)](detail::Node& self) {
    auto dx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += mask[i] * self.grad[i];
  });
}

/// Effective weight g_r * v_r / ||v_r|| for every output row r.
inline Tensor weight_norm(const Tensor& direction, const Tensor& gain) {
  detail::require_matrix(direction, "weight_norm");
  const std::size_t out_dim = direction.rows(), in_dim = direction.cols();
  if (gain.numel() != out_dim) {
    throw DimensionError("weight_norm: gain " + shape_str(gain.shape()) +
                         " for direction " + shape_str(direction.shape()));
  }
  std::vector<double> norms(out_dim);
  std::vector<double> out(out_dim * in_dim);
  for (std::size_t r = 0; r < out_dim; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < in_dim; ++c) {
      const double v = direction[r * in_dim + c];
      s += v * v;
    }
    if (s == 0.0) throw NumericError("weight_norm: zero-norm direction row");
    norms[r] = std::sqrt(s);
    const double f = gain[r] / norms[r];
    for (std::size_t c = 0; c < in_dim; ++c)
      out[r * in_dim + c] = f * direction[r * in_dim + c];
  }
  return detail::make_result({out_dim, in_dim}, std::move(out), {direction, gain},
                             [out_dim, in_dim, norms = std::move(norms)](
                                 detail::Node& self) {
    const auto& V = self.parents[0]->value;
    const auto& Gn = self.parents[1]->value;
    auto dv = detail::parent_grad(self, 0);
    auto dg = detail::parent_grad(self, 1);
    for (std::size_t r = 0; r < out_dim; ++r) {
      const double* g = self.grad.data() + r * in_dim;
      const double* v = V.data() + r * in_dim;
      double gu = 0.0;
      for (std::size_t c = 0; c < in_dim; ++c) gu += g[c] * v[c];
      gu /= norms[r];
      if (!dg.empty()) dg[r] += gu;
      if (!dv.empty()) {
        const double f = Gn[r] / norms[r];
        for (std::size_t c = 0; c < in_dim; ++c)
          dv[r * in_dim + c] += f * (g[c] - gu * v[c] / norms[r]);
      }
    }
  });
}

/// x W^T + b.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_bias(matmul_nt(x, weight), bias);
}

/// Mean binary cross entropy on logits, in the stable
/// max(z,0) - z*y + log(1 + exp(-|z|)) form.
inline Tensor bce_with_logits(const Tensor& logits,
                              const std::vector<double>& targets) {
  if (targets.size() != logits.numel()) {
    throw DimensionError("bce_with_logits: target count mismatch");
  }
  for (double y : targets) {
    if (!(y >= 0.0 && y <= 1.0)) {
      throw DataError("bce_with_logits: target outside [0, 1]");
    }
  }
  const std::size_t n = targets.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits[i];
    total += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const double inv = 1.0 / static_cast<double>(n);
  return detail::make_result({1}, {total * inv}, {logits},
                             [targets, inv](detail::Node& self) {
    const auto& Z = self.parents[0]->value;
    auto dz = detail::parent_grad(self, 0);
    const double g = self.grad[0] * inv;
    for (std::size_t i = 0; i < dz.size(); ++i) {
      const double z = Z[i];
      const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                  : std::exp(z) / (1.0 + std::exp(z));
      dz[i] += g * (sig - targets[i]);
    }
  });
}

/// Per-pair bias matrix: out[i][j] = table[head][labels[i*m + j]].
inline Tensor label_bias(const Tensor& table,
                         const std::vector<std::uint16_t>& labels,
                         std::size_t m, std::size_t head) {
  detail::require_matrix(table, "label_bias");
  if (labels.size() != m * m) {
    throw DimensionError("label_bias: label matrix is not m x m");
  }
  if (head >= table.rows()) throw DimensionError("label_bias: head out of range");
  const std::size_t nl = table.cols();
  std::vector<double> out(m * m);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] >= nl) {
      throw DataError("label id " + std::to_string(labels[k]) +
                      " outside bias table of " + std::to_string(nl));
    }
    out[k] = table[head * nl + labels[k]];
  }
  return detail::make_result({m, m}, std::move(out), {table},
                             [labels, head, nl](detail::Node& self) {
    auto dt = detail::parent_grad(self, 0);
    for (std::size_t k = 0; k < labels.size(); ++k)
      dt[head * nl + labels[k]] += self.grad[k];
  });
}

}  // namespace ops
}  // namespace graphfuse

#endif  // GRAPHFUSE_OPS_HPP_
