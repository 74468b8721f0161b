#pragma once

// Dense row-major tensors in double precision and the handful of kernels the
// enhancement stage needs. Every kernel sums in a fixed sequential order so
// results are reproducible bit-for-bit on one platform.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dualview/error.hpp"
#include "dualview/rng.hpp"

namespace dualview {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw Error(ErrorCode::ShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                                " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(m * n);
    for (const auto& row : rows) {
      if (row.size() != n) throw Error(ErrorCode::ShapeMismatch, "ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({m, n}, std::move(data));
  }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double& operator()(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * shape_[1] + x) * shape_[2] + c];
  }
  double operator()(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * shape_[1] + x) * shape_[2] + c];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw Error(ErrorCode::ShapeMismatch,
                  "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline void require_finite(const Tensor& t, const char* where) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, std::string("non-finite value in ") + where);
  }
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* where) {
  if (t.rank() != rank) {
    throw Error(ErrorCode::ShapeMismatch, std::string(where) + ": expected rank " + std::to_string(rank) +
                                              ", got " + shape_string(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(where) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// ---------------------------------------------------------------------------
// Matrix kernels (rank-2 operands)

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw Error(ErrorCode::ShapeMismatch,
                "matmul inner extents " + shape_string(a.shape()) + " . " + shape_string(b.shape()));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
      out(i, j) = acc;
    }
  }
  require_finite(out, "matmul");
  return out;
}

// a . b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw Error(ErrorCode::ShapeMismatch,
                "matmul_nt inner extents " + shape_string(a.shape()) + " . " + shape_string(b.shape()) + "^T");
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(j, p);
      out(i, j) = acc;
    }
  }
  require_finite(out, "matmul_nt");
  return out;
}

// a^T . b
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_tn");
  require_rank(b, 2, "matmul_tn");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw Error(ErrorCode::ShapeMismatch,
                "matmul_tn inner extents " + shape_string(a.shape()) + "^T . " + shape_string(b.shape()));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a(p, i) * b(p, j);
      out(i, j) = acc;
    }
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  Tensor out({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out(j, i) = a(i, j);
  return out;
}

// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  require_finite(x, "softmax_rows input");
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) peak = std::max(peak, x(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = std::exp(x(i, j) - peak);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= total;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise

template <class Fn>
Tensor zip_with(const Tensor& a, const Tensor& b, const char* where, Fn fn) {
  require_same_shape(a, b, where);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i], b[i]);
  require_finite(out, where);
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return zip_with(a, b, "add", [](double x, double y) { return x + y; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return zip_with(a, b, "mul", [](double x, double y) { return x * y; });
}
inline Tensor maximum(const Tensor& a, const Tensor& b) {
  return zip_with(a, b, "maximum", [](double x, double y) { return std::max(x, y); });
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

inline double sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return acc;
}

// Channel-wise concatenation of two matrices with equal row counts.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  if (a.dim(0) != b.dim(0)) throw Error(ErrorCode::ShapeMismatch, "concat_cols row counts differ");
  const std::size_t m = a.dim(0), na = a.dim(1), nb = b.dim(1);
  Tensor out({m, na + nb});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < na; ++j) out(i, j) = a(i, j);
    for (std::size_t j = 0; j < nb; ++j) out(i, na + j) = b(i, j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spatial kernels on h x w x d tensors

inline Tensor avg_pool(const Tensor& x, std::size_t kh, std::size_t kw) {
  require_rank(x, 3, "avg_pool");
  const std::size_t h = x.dim(0), w = x.dim(1), d = x.dim(2);
  if (kh == 0 || kw == 0 || h % kh != 0 || w % kw != 0) {
    throw Error(ErrorCode::NotDivisible, "avg_pool window " + std::to_string(kh) + "x" + std::to_string(kw) +
                                             " does not tile " + shape_string(x.shape()));
  }
  const std::size_t oh = h / kh, ow = w / kw;
  const double inv = 1.0 / static_cast<double>(kh * kw);
  Tensor out({oh, ow, d});
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < kh; ++dy)
          for (std::size_t dx = 0; dx < kw; ++dx) acc += x(oy * kh + dy, ox * kw + dx, c);
        out(oy, ox, c) = acc * inv;
      }
  require_finite(out, "avg_pool");
  return out;
}

// Same-padded 3x3 convolution. weight is [3, 3, c_in, c_out], bias [c_out].
inline Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 3, "conv3x3");
  require_rank(weight, 4, "conv3x3 weight");
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  if (weight.dim(0) != 3 || weight.dim(1) != 3 || weight.dim(2) != cin) {
    throw Error(ErrorCode::ShapeMismatch, "conv3x3 weight " + shape_string(weight.shape()) +
                                              " incompatible with input " + shape_string(x.shape()));
  }
  const std::size_t cout = weight.dim(3);
  if (bias.size() != cout) throw Error(ErrorCode::ShapeMismatch, "conv3x3 bias length");
  Tensor out({h, w, cout});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx)
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = bias[o];
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - 1;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            for (std::size_t i = 0; i < cin; ++i) {
              acc += x(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), i) *
                     weight[((ky * 3 + kx) * cin + i) * cout + o];
            }
          }
        }
        out(y, xx, o) = acc;
      }
  require_finite(out, "conv3x3");
  return out;
}

// ---------------------------------------------------------------------------
// Linear layers

struct LinearParams {
  Tensor weight;  // d_in x d_out
  std::optional<Tensor> bias;

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }

  static LinearParams identity(std::size_t n) { return {Tensor::identity(n), std::nullopt}; }
  static LinearParams zeros(std::size_t in, std::size_t out, bool with_bias = false) {
    LinearParams p{Tensor({in, out}), std::nullopt};
    if (with_bias) p.bias = Tensor({out});
    return p;
  }

  bool operator==(const LinearParams&) const = default;
};

inline void validate(const LinearParams& p) {
  require_rank(p.weight, 2, "linear weight");
  require_finite(p.weight, "linear weight");
  if (p.bias) {
    if (p.bias->rank() != 1 || p.bias->dim(0) != p.out_dim()) {
      throw Error(ErrorCode::ShapeMismatch, "linear bias " + shape_string(p.bias->shape()) +
                                                " does not match weight " + shape_string(p.weight.shape()));
    }
    require_finite(*p.bias, "linear bias");
  }
}

inline Tensor linear(const Tensor& x, const LinearParams& p) {
  validate(p);
  Tensor out = matmul(x, p.weight);
  if (p.bias) {
    for (std::size_t i = 0; i < out.dim(0); ++i)
      for (std::size_t j = 0; j < out.dim(1); ++j) out(i, j) += (*p.bias)[j];
    require_finite(out, "linear");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seeded initialization. Draws are rounded through float so parameters
// survive the single-precision file format unchanged.

inline Tensor random_normal(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = static_cast<double>(static_cast<float>(rng.normal(0.0, stddev)));
  return t;
}

inline Tensor random_uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline LinearParams random_linear(std::size_t in, std::size_t out, Rng& rng, double stddev,
                                  bool with_bias = false) {
  LinearParams p{random_normal({in, out}, rng, stddev), std::nullopt};
  if (with_bias) p.bias = Tensor({out});
  return p;
}

}  // namespace dualview
