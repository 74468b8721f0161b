#pragma once

// Reference implementations used only for verification. They are written
// directly from the defining formulas, entry by entry, and share no code path
// with the production kernels beyond the container types.

#include <cmath>
#include <cstddef>
#include <vector>

#include "dualview/dem.hpp"
#include "dualview/encoder.hpp"
#include "dualview/geometry.hpp"
#include "dualview/tensor.hpp"

namespace dualview::verify {

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.dim(1); ++p) acc += a[i * a.dim(1) + p] * b[p * b.dim(1) + j];
      out[i * b.dim(1) + j] = acc;
    }
  return out;
}

inline Tensor naive_linear(const Tensor& x, const LinearParams& p) {
  Tensor out = naive_matmul(x, p.weight);
  if (p.bias)
    for (std::size_t i = 0; i < out.dim(0); ++i)
      for (std::size_t j = 0; j < out.dim(1); ++j) out[i * out.dim(1) + j] += (*p.bias)[j];
  return out;
}

// Windowed means over non-overlapping kh x kw blocks of an h x w x d tensor.
inline Tensor naive_avg_pool(const Tensor& x, std::size_t kh, std::size_t kw) {
  const std::size_t h = x.dim(0), w = x.dim(1), d = x.dim(2);
  Tensor out({h / kh, w / kw, d});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx)
      for (std::size_t c = 0; c < d; ++c) out(y / kh, xx / kw, c) += x(y, xx, c);
  for (double& v : out.values()) v /= static_cast<double>(kh * kw);
  return out;
}

struct Cell {
  std::size_t x, y;
};

// The global-view index set of sub-image (i, j): x = j + m * n_w, y = i + n * n_h
// for 0 <= m < img_w / n_w, 0 <= n < img_h / n_h, listed n-major.
inline std::vector<Cell> global_index_set(const GridSpec& g, std::size_t i, std::size_t j) {
  std::vector<Cell> out;
  for (std::size_t n = 0; n < g.img_h / g.n_h; ++n)
    for (std::size_t m = 0; m < g.img_w / g.n_w; ++m) out.push_back({j + m * g.n_w, i + n * g.n_h});
  return out;
}

// The local-view bounding box of sub-image s, listed row-major.
inline std::vector<Cell> local_index_set(const GridSpec& g, std::size_t s) {
  const std::size_t row = s / g.n_w, col = s % g.n_w;
  std::vector<Cell> out;
  for (std::size_t y = row * g.enc_h; y < (row + 1) * g.enc_h; ++y)
    for (std::size_t x = col * g.enc_w; x < (col + 1) * g.enc_w; ++x) out.push_back({x, y});
  return out;
}

inline std::vector<Cell> index_set(const GridSpec& g, Perspective p, std::size_t s) {
  return p == Perspective::local ? local_index_set(g, s) : global_index_set(g, s / g.n_w, s % g.n_w);
}

// Cross-attention built entry by entry. Every attention logit is formed from
// explicit dot products of projected query and key rows; outputs are written
// straight to their source cells.
inline FeatureGrid naive_cross_attention(const FeatureGrid& query_src, const FeatureGrid& context_src,
                                         const GridSpec& cells, Perspective perspective, const AttentionParams& w,
                                         std::vector<Tensor>* maps = nullptr) {
  const std::size_t d = query_src.dim();
  auto project = [&](const FeatureGrid& f, const Cell& c, const LinearParams& l, std::size_t out_c) {
    double acc = l.bias ? (*l.bias)[out_c] : 0.0;
    for (std::size_t e = 0; e < d; ++e) acc += f.at(c.y, c.x, e) * l.weight(e, out_c);
    return acc;
  };
  FeatureGrid out(query_src.height(), query_src.width(), d);
  for (std::size_t s = 0; s < cells.count(); ++s) {
    const std::vector<Cell> set = index_set(cells, perspective, s);
    const std::size_t n = set.size();
    Tensor attn({n, n});
    for (std::size_t a = 0; a < n; ++a) {
      std::vector<double> logits(n);
      for (std::size_t b = 0; b < n; ++b) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c)
          dot += project(query_src, set[a], w.q, c) * project(context_src, set[b], w.k, c);
        logits[b] = dot / std::sqrt(static_cast<double>(d));
      }
      double z = 0.0;
      for (double l : logits) z += std::exp(l);
      for (std::size_t b = 0; b < n; ++b) attn(a, b) = std::exp(logits[b]) / z;
    }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t b = 0; b < n; ++b) acc += attn(a, b) * project(context_src, set[b], w.v, c);
        out.at(set[a].y, set[a].x, c) = acc;
      }
    if (maps) maps->push_back(attn);
  }
  return out;
}

inline FeatureGrid naive_global_enhance(const FeatureGrid& f_glo, const FeatureGrid& f_loc, const GridSpec& cells,
                                        const DemParams& p) {
  return naive_cross_attention(f_glo, f_loc, cells, Perspective::global, p.glo);
}

inline FeatureGrid naive_local_enhance(const FeatureGrid& f_glo, const FeatureGrid& f_loc, const GridSpec& cells,
                                       const DemParams& p) {
  return naive_cross_attention(f_loc, f_glo, cells, Perspective::local, p.local_branch());
}

}  // namespace dualview::verify
