#pragma once

// Reverse-mode differentiation over the fixed set of ops used by the
// enhancement stage. A Tape records each op's value together with a closure
// that pushes the output gradient back to its inputs. Backward runs in strict
// reverse record order, so gradient accumulation is deterministic.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dualview/tensor.hpp"

namespace dualview::autodiff {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Var leaf(Tensor value) {
    require_finite(value, "tape leaf");
    return push(std::move(value), nullptr);
  }

  Var push(Tensor value, Backward backward) {
    nodes_.push_back(Node{std::move(value), std::nullopt, std::move(backward)});
    return Var{nodes_.size() - 1};
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }

  // Zero tensor of the right shape when nothing flowed into v.
  Tensor grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.grad ? *n.grad : Tensor(n.value.shape());
  }

  void accumulate(Var v, const Tensor& g) {
    Node& n = nodes_.at(v.id);
    if (!n.grad) n.grad.emplace(n.value.shape());
    require_same_shape(*n.grad, g, "gradient accumulation");
    for (std::size_t i = 0; i < g.size(); ++i) (*n.grad)[i] += g[i];
  }

  // Seeds d(out)/d(out) = 1 for a single-element output and sweeps backwards.
  void backward(Var out) {
    if (value(out).size() != 1) {
      throw Error(ErrorCode::ShapeMismatch, "backward requires a scalar output, got " +
                                                shape_string(value(out).shape()));
    }
    for (Node& n : nodes_) n.grad.reset();
    accumulate(out, Tensor(value(out).shape(), 1.0));
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || !n.grad) continue;
      const Tensor g = *n.grad;
      n.backward(*this, g);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Ops. Matrices are rank 2; spatial ops treat an (h*w) x d matrix as an
// h x w x d grid stored row-major.

inline Var matmul(Tape& t, Var a, Var b) {
  return t.push(dualview::matmul(t.value(a), t.value(b)), [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, dualview::matmul_nt(g, tp.value(b)));
    tp.accumulate(b, dualview::matmul_tn(tp.value(a), g));
  });
}

// a . b^T
inline Var matmul_nt(Tape& t, Var a, Var b) {
  return t.push(dualview::matmul_nt(t.value(a), t.value(b)), [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, dualview::matmul(g, tp.value(b)));
    tp.accumulate(b, dualview::matmul_tn(g, tp.value(a)));
  });
}

inline Var scale(Tape& t, Var a, double s) {
  return t.push(dualview::scale(t.value(a), s),
                [a, s](Tape& tp, const Tensor& g) { tp.accumulate(a, dualview::scale(g, s)); });
}

inline Var softmax_rows(Tape& t, Var x) {
  Tensor y = dualview::softmax_rows(t.value(x));
  const std::size_t self = t.size();
  return t.push(std::move(y), [x, self](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(Var{self});
    Tensor dx(y.shape());
    for (std::size_t i = 0; i < y.dim(0); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.dim(1); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.dim(1); ++j) dx(i, j) = y(i, j) * (g(i, j) - dot);
    }
    tp.accumulate(x, dx);
  });
}

inline Var add(Tape& t, Var a, Var b) {
  return t.push(dualview::add(t.value(a), t.value(b)), [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

inline Var mul(Tape& t, Var a, Var b) {
  return t.push(dualview::mul(t.value(a), t.value(b)), [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, dualview::mul(g, tp.value(b)));
    tp.accumulate(b, dualview::mul(g, tp.value(a)));
  });
}

// Ties route the gradient to the first operand.
inline Var maximum(Tape& t, Var a, Var b) {
  return t.push(dualview::maximum(t.value(a), t.value(b)), [a, b](Tape& tp, const Tensor& g) {
    const Tensor& va = tp.value(a);
    const Tensor& vb = tp.value(b);
    Tensor ga(g.shape()), gb(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) (va[i] >= vb[i] ? ga[i] : gb[i]) = g[i];
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

// weights[k] * x, where weights is any tensor and k indexes into it.
inline Var scale_by_entry(Tape& t, Var x, Var weights, std::size_t k) {
  const double s = t.value(weights).values()[k];
  return t.push(dualview::scale(t.value(x), s), [x, weights, k](Tape& tp, const Tensor& g) {
    const double s = tp.value(weights).values()[k];
    tp.accumulate(x, dualview::scale(g, s));
    Tensor gw(tp.value(weights).shape());
    double dot = 0.0;
    const Tensor& vx = tp.value(x);
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * vx[i];
    gw[k] = dot;
    tp.accumulate(weights, gw);
  });
}

inline Var sum(Tape& t, Var x) {
  return t.push(Tensor({1}, std::vector<double>{dualview::sum(t.value(x))}), [x](Tape& tp, const Tensor& g) {
    tp.accumulate(x, Tensor(tp.value(x).shape(), g[0]));
  });
}

inline Var concat_cols(Tape& t, Var a, Var b) {
  return t.push(dualview::concat_cols(t.value(a), t.value(b)), [a, b](Tape& tp, const Tensor& g) {
    const std::size_t m = g.dim(0), na = tp.value(a).dim(1), nb = tp.value(b).dim(1);
    Tensor ga({m, na}), gb({m, nb});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < na; ++j) ga(i, j) = g(i, j);
      for (std::size_t j = 0; j < nb; ++j) gb(i, j) = g(i, na + j);
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

// out row r = x row rows[r]. The backward pass scatter-adds.
inline Var gather_rows(Tape& t, Var x, std::vector<std::size_t> rows) {
  const Tensor& vx = t.value(x);
  require_rank(vx, 2, "gather_rows");
  const std::size_t n = vx.dim(1);
  Tensor out({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= vx.dim(0)) throw Error(ErrorCode::OutOfRange, "gather_rows index");
    for (std::size_t j = 0; j < n; ++j) out(r, j) = vx(rows[r], j);
  }
  return t.push(std::move(out), [x, rows = std::move(rows)](Tape& tp, const Tensor& g) {
    Tensor gx(tp.value(x).shape());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < g.dim(1); ++j) gx(rows[r], j) += g(r, j);
    tp.accumulate(x, gx);
  });
}

inline Var slice_rows(Tape& t, Var x, std::size_t begin, std::size_t count) {
  std::vector<std::size_t> rows(count);
  std::iota(rows.begin(), rows.end(), begin);
  return gather_rows(t, x, std::move(rows));
}

inline Var concat_rows(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "concat_rows of nothing");
  const std::size_t n = t.value(parts[0]).dim(1);
  std::size_t m = 0;
  for (Var p : parts) {
    require_rank(t.value(p), 2, "concat_rows");
    if (t.value(p).dim(1) != n) throw Error(ErrorCode::ShapeMismatch, "concat_rows column counts differ");
    m += t.value(p).dim(0);
  }
  Tensor out({m, n});
  std::size_t row = 0;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(row * n));
    row += v.dim(0);
  }
  return t.push(std::move(out), [parts = std::vector<Var>(parts.begin(), parts.end())](Tape& tp,
                                                                                       const Tensor& g) {
    std::size_t row = 0;
    const std::size_t n = g.dim(1);
    for (Var p : parts) {
      const std::size_t m = tp.value(p).dim(0);
      Tensor gp({m, n});
      std::copy_n(g.values().begin() + static_cast<std::ptrdiff_t>(row * n), m * n, gp.values().begin());
      tp.accumulate(p, gp);
      row += m;
    }
  });
}

// Adds a length-n bias to every row of an m x n matrix.
inline Var add_row_bias(Tape& t, Var x, Var bias) {
  Tensor out = t.value(x);
  const Tensor& b = t.value(bias);
  if (b.size() != out.dim(1)) throw Error(ErrorCode::ShapeMismatch, "row bias length");
  for (std::size_t i = 0; i < out.dim(0); ++i)
    for (std::size_t j = 0; j < out.dim(1); ++j) out(i, j) += b[j];
  return t.push(std::move(out), [x, bias](Tape& tp, const Tensor& g) {
    tp.accumulate(x, g);
    Tensor gb(tp.value(bias).shape());
    for (std::size_t i = 0; i < g.dim(0); ++i)
      for (std::size_t j = 0; j < g.dim(1); ++j) gb[j] += g(i, j);
    tp.accumulate(bias, gb);
  });
}

// Average pooling of an (h*w) x d matrix viewed as an h x w x d grid.
inline Var avg_pool(Tape& t, Var x, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw) {
  const Tensor& vx = t.value(x);
  if (vx.rank() != 2 || vx.dim(0) != h * w) throw Error(ErrorCode::ShapeMismatch, "avg_pool grid extent");
  const std::size_t d = vx.dim(1);
  Tensor pooled = dualview::avg_pool(vx.reshaped({h, w, d}), kh, kw);
  const std::size_t oh = pooled.dim(0), ow = pooled.dim(1);
  return t.push(pooled.reshaped({oh * ow, d}), [x, h, w, d, kh, kw, ow](Tape& tp, const Tensor& g) {
    const double inv = 1.0 / static_cast<double>(kh * kw);
    Tensor gx({h * w, d});
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        for (std::size_t c = 0; c < d; ++c) gx(y * w + xx, c) = g((y / kh) * ow + xx / kw, c) * inv;
    tp.accumulate(x, gx);
  });
}

// Same-padded 3x3 convolution of an (h*w) x c_in matrix viewed as a grid.
inline Var conv3x3(Tape& t, Var x, std::size_t h, std::size_t w, Var weight, Var bias) {
  const Tensor& vx = t.value(x);
  if (vx.rank() != 2 || vx.dim(0) != h * w) throw Error(ErrorCode::ShapeMismatch, "conv3x3 grid extent");
  const std::size_t cin = vx.dim(1);
  Tensor out = dualview::conv3x3(vx.reshaped({h, w, cin}), t.value(weight), t.value(bias));
  const std::size_t cout = out.dim(2);
  return t.push(out.reshaped({h * w, cout}), [x, h, w, cin, cout, weight, bias](Tape& tp, const Tensor& g) {
    const Tensor& vx = tp.value(x);
    const Tensor& wt = tp.value(weight);
    Tensor gx(vx.shape()), gw(wt.shape()), gb(tp.value(bias).shape());
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        for (std::size_t o = 0; o < cout; ++o) {
          const double go = g(y * w + xx, o);
          gb[o] += go;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - 1;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t src = static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx);
              for (std::size_t i = 0; i < cin; ++i) {
                const std::size_t widx = ((ky * 3 + kx) * cin + i) * cout + o;
                gx(src, i) += go * wt[widx];
                gw[widx] += go * vx(src, i);
              }
            }
          }
        }
    tp.accumulate(x, gx);
    tp.accumulate(weight, gw);
    tp.accumulate(bias, gb);
  });
}

}  // namespace dualview::autodiff
