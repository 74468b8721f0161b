#pragma once

// Dual-perspective enhancement.
//
// Given recombined global-view features G and local-view features L (both
// h_h x w_h x d), the global branch re-crops both with the global crop and, per
// sub-grid i, computes
//
//   A_i = softmax((G_i Wq)(L_i Wk)^T / sqrt(d)),   V_i = A_i (L_i Wv)
//
// then global-recombines the V_i. The local branch does the same with the
// local crop and the roles of G and L swapped. No residual path and no
// normalization. The two enhanced grids are fused (six variants), average
// pooled by (n_h, n_w) back to one sub-image's token grid, and optionally added
// to a low-resolution feature grid.
//
// Everything is built on an autodiff::Tape so the same code path yields
// parameter gradients for verification.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualview/autodiff.hpp"
#include "dualview/encoder.hpp"
#include "dualview/geometry.hpp"
#include "dualview/grad_check.hpp"
#include "dualview/tensor.hpp"

namespace dualview {

enum class FusionVariant { linear_concat, addition, weighted_addition, multiplication, maxpool, conv3x3 };

inline constexpr FusionVariant kAllFusionVariants[] = {
    FusionVariant::linear_concat,  FusionVariant::addition, FusionVariant::weighted_addition,
    FusionVariant::multiplication, FusionVariant::maxpool,  FusionVariant::conv3x3,
};

inline const char* to_string(FusionVariant f) {
  switch (f) {
    case FusionVariant::linear_concat: return "linear_concat";
    case FusionVariant::addition: return "addition";
    case FusionVariant::weighted_addition: return "weighted_addition";
    case FusionVariant::multiplication: return "multiplication";
    case FusionVariant::maxpool: return "maxpool";
    case FusionVariant::conv3x3: return "conv3x3";
  }
  return "unknown";
}

inline FusionVariant parse_fusion(const std::string& s) {
  for (FusionVariant f : kAllFusionVariants)
    if (s == to_string(f)) return f;
  throw Error(ErrorCode::UnknownVariant, "unknown fusion variant '" + s + "'");
}

struct AttentionParams {
  LinearParams q, k, v;
  bool operator==(const AttentionParams&) const = default;
};

struct DemParams {
  std::size_t dim = 0;
  FusionVariant fusion = FusionVariant::linear_concat;
  bool shared_branches = false;  // local branch reuses the global branch's q/k/v

  AttentionParams glo;
  AttentionParams loc;
  LinearParams fuse_glo;  // d x d/2
  LinearParams fuse_loc;  // d x d/2
  Tensor mix_logits;      // 1 x 2, softmax-normalized weights for weighted_addition
  Tensor conv_weight;     // 3 x 3 x 2d x d
  Tensor conv_bias;       // d

  const AttentionParams& local_branch() const { return shared_branches ? glo : loc; }

  bool operator==(const DemParams&) const = default;
};

// Projections are N(0, 1/sqrt(d)); biases and mixing logits start at zero.
// All tensors are drawn regardless of the variant so the draw order is fixed.
inline DemParams init_dem_params(std::size_t dim, FusionVariant fusion, Rng& rng, bool shared_branches = false) {
  if (dim == 0 || dim % 2 != 0) throw Error(ErrorCode::InvalidArgument, "DEM dim must be positive and even");
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  DemParams p;
  p.dim = dim;
  p.fusion = fusion;
  p.shared_branches = shared_branches;
  for (AttentionParams* branch : {&p.glo, &p.loc}) {
    branch->q = random_linear(dim, dim, rng, sd);
    branch->k = random_linear(dim, dim, rng, sd);
    branch->v = random_linear(dim, dim, rng, sd);
  }
  p.fuse_glo = random_linear(dim, dim / 2, rng, sd);
  p.fuse_loc = random_linear(dim, dim / 2, rng, sd);
  p.mix_logits = Tensor({1, 2});
  p.conv_weight = random_normal({3, 3, 2 * dim, dim}, rng, 1.0 / std::sqrt(static_cast<double>(9 * 2 * dim)));
  p.conv_bias = Tensor({dim});
  return p;
}

inline void validate(const DemParams& p) {
  if (p.dim == 0 || p.dim % 2 != 0) throw Error(ErrorCode::InvalidArgument, "DEM dim must be positive and even");
  const std::size_t d = p.dim;
  auto check = [&](const LinearParams& l, std::size_t out, const char* name) {
    validate(l);
    if (l.in_dim() != d || l.out_dim() != out) {
      throw Error(ErrorCode::ShapeMismatch, std::string(name) + " is " + shape_string(l.weight.shape()));
    }
  };
  for (const AttentionParams* b : {&p.glo, &p.local_branch()}) {
    check(b->q, d, "W_q");
    check(b->k, d, "W_k");
    check(b->v, d, "W_v");
  }
  switch (p.fusion) {
    case FusionVariant::linear_concat:
      check(p.fuse_glo, d / 2, "W_glo");
      check(p.fuse_loc, d / 2, "W_loc");
      break;
    case FusionVariant::weighted_addition:
      if (p.mix_logits.shape() != Shape{1, 2}) throw Error(ErrorCode::ShapeMismatch, "mix logits must be 1x2");
      require_finite(p.mix_logits, "mix logits");
      break;
    case FusionVariant::conv3x3:
      if (p.conv_weight.shape() != Shape{3, 3, 2 * d, d} || p.conv_bias.shape() != Shape{d}) {
        throw Error(ErrorCode::ShapeMismatch, "conv3x3 parameters do not match dim");
      }
      require_finite(p.conv_weight, "conv weight");
      require_finite(p.conv_bias, "conv bias");
      break;
    default:
      break;
  }
}

struct EnhancedFeatures {
  FeatureGrid v_glo;
  FeatureGrid v_loc;
  FeatureGrid v_dual;
  FeatureGrid f_dual;
};

// Attention maps recorded during a forward pass, one per sub-grid.
struct AttentionTrace {
  std::vector<Tensor> global_maps;
  std::vector<Tensor> local_maps;
};

// ---------------------------------------------------------------------------
// Graph construction

namespace dem {

using autodiff::Tape;
using autodiff::Var;

struct LinearVars {
  Var weight;
  std::optional<Var> bias;
};

struct AttentionVars {
  LinearVars q, k, v;
};

struct DemVars {
  AttentionVars glo;
  AttentionVars loc;
  LinearVars fuse_glo;
  LinearVars fuse_loc;
  Var mix_logits;
  Var conv_weight;
  Var conv_bias;
};

// Visits every trainable tensor for the configured variant together with its
// slot in `vars`, in a fixed canonical order.
template <class Params, class Fn>
void zip_trainable(Params& p, DemVars& vars, Fn&& fn) {
  auto lin = [&](auto& l, LinearVars& lv) {
    fn(l.weight, lv.weight);
    if (l.bias) {
      lv.bias.emplace();
      fn(*l.bias, *lv.bias);
    }
  };
  auto branch = [&](auto& b, AttentionVars& bv) {
    lin(b.q, bv.q);
    lin(b.k, bv.k);
    lin(b.v, bv.v);
  };
  branch(p.glo, vars.glo);
  if (p.shared_branches) {
    vars.loc = vars.glo;
  } else {
    branch(p.loc, vars.loc);
  }
  switch (p.fusion) {
    case FusionVariant::linear_concat:
      lin(p.fuse_glo, vars.fuse_glo);
      lin(p.fuse_loc, vars.fuse_loc);
      break;
    case FusionVariant::weighted_addition:
      fn(p.mix_logits, vars.mix_logits);
      break;
    case FusionVariant::conv3x3:
      fn(p.conv_weight, vars.conv_weight);
      fn(p.conv_bias, vars.conv_bias);
      break;
    default:
      break;
  }
}

inline std::vector<Tensor*> trainable_tensors(DemParams& p) {
  std::vector<Tensor*> out;
  DemVars scratch;
  zip_trainable(p, scratch, [&](Tensor& t, Var&) { out.push_back(&t); });
  return out;
}

// Binds leaves created in trainable_tensors() order.
inline DemVars bind(const DemParams& p, std::span<const Var> leaves) {
  DemVars vars;
  std::size_t next = 0;
  zip_trainable(p, vars, [&](const Tensor&, Var& slot) {
    if (next >= leaves.size()) throw Error(ErrorCode::ShapeMismatch, "too few parameter leaves");
    slot = leaves[next++];
  });
  if (next != leaves.size()) throw Error(ErrorCode::ShapeMismatch, "too many parameter leaves");
  return vars;
}

inline DemVars bind(const DemParams& p, Tape& tape) {
  DemVars vars;
  zip_trainable(p, vars, [&](const Tensor& t, Var& slot) { slot = tape.leaf(t); });
  return vars;
}

inline Var linear(Tape& t, Var x, const LinearVars& l) {
  Var y = autodiff::matmul(t, x, l.weight);
  return l.bias ? autodiff::add_row_bias(t, y, *l.bias) : y;
}

// Paired cross-attention over the sub-grids of `perspective`. Queries come
// from `query_src`, keys and values from `context_src`; both are (h*w) x d
// matrices laid out on `cells` (a feature-level grid). Returns the
// recombined (h*w) x d result.
inline Var cross_enhance(Tape& t, Var query_src, Var context_src, const GridSpec& cells, Perspective perspective,
                         const AttentionVars& w, std::vector<Tensor>* maps) {
  const std::vector<std::size_t> perm = crop_permutation(cells, perspective);
  const std::size_t tokens = cells.enc_w * cells.enc_h;
  const std::size_t d = t.value(query_src).dim(1);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  const Var queries = autodiff::gather_rows(t, query_src, perm);
  const Var context = autodiff::gather_rows(t, context_src, perm);

  std::vector<Var> outputs;
  outputs.reserve(cells.count());
  for (std::size_t i = 0; i < cells.count(); ++i) {
    const Var qi = autodiff::slice_rows(t, queries, i * tokens, tokens);
    const Var ci = autodiff::slice_rows(t, context, i * tokens, tokens);
    const Var q = linear(t, qi, w.q);
    const Var k = linear(t, ci, w.k);
    const Var v = linear(t, ci, w.v);
    const Var attn = autodiff::softmax_rows(t, autodiff::scale(t, autodiff::matmul_nt(t, q, k), inv_sqrt_d));
    if (maps) maps->push_back(t.value(attn));
    outputs.push_back(autodiff::matmul(t, attn, v));
  }
  const Var stacked = autodiff::concat_rows(t, outputs);
  return autodiff::gather_rows(t, stacked, invert_permutation(perm));
}

inline Var fuse(Tape& t, Var v_glo, Var v_loc, std::size_t h, std::size_t w, FusionVariant variant,
                const DemVars& p) {
  switch (variant) {
    case FusionVariant::linear_concat:
      return autodiff::concat_cols(t, linear(t, v_glo, p.fuse_glo), linear(t, v_loc, p.fuse_loc));
    case FusionVariant::addition:
      return autodiff::add(t, v_glo, v_loc);
    case FusionVariant::weighted_addition: {
      const Var weights = autodiff::softmax_rows(t, p.mix_logits);
      return autodiff::add(t, autodiff::scale_by_entry(t, v_glo, weights, 0),
                           autodiff::scale_by_entry(t, v_loc, weights, 1));
    }
    case FusionVariant::multiplication:
      return autodiff::mul(t, v_glo, v_loc);
    case FusionVariant::maxpool:
      return autodiff::maximum(t, v_glo, v_loc);
    case FusionVariant::conv3x3:
      return autodiff::conv3x3(t, autodiff::concat_cols(t, v_glo, v_loc), h, w, p.conv_weight, p.conv_bias);
  }
  throw Error(ErrorCode::UnknownVariant, "unhandled fusion variant");
}

struct DemNodes {
  Var v_glo, v_loc, v_dual, f_dual;
};

// Full forward graph on (h*w) x d inputs laid out on the feature-level grid.
inline DemNodes forward(Tape& t, Var f_glo, Var f_loc, const GridSpec& cells, FusionVariant variant,
                        const DemVars& p, AttentionTrace* trace) {
  DemNodes n;
  n.v_glo = cross_enhance(t, f_glo, f_loc, cells, Perspective::global, p.glo, trace ? &trace->global_maps : nullptr);
  n.v_loc = cross_enhance(t, f_loc, f_glo, cells, Perspective::local, p.loc, trace ? &trace->local_maps : nullptr);
  n.v_dual = fuse(t, n.v_glo, n.v_loc, cells.img_h, cells.img_w, variant, p);
  n.f_dual = autodiff::avg_pool(t, n.v_dual, cells.img_h, cells.img_w, cells.n_h, cells.n_w);
  return n;
}

}  // namespace dem

// ---------------------------------------------------------------------------
// Tensor-level API

// Feature-level grid for an h_h x w_h map split n_h x n_w ways.
inline GridSpec feature_cells(const FeatureGrid& f, const GridSpec& grid) {
  if (grid.n_w == 0 || grid.n_h == 0 || f.width() % grid.n_w != 0 || f.height() % grid.n_h != 0) {
    throw Error(ErrorCode::ShapeMismatch, "feature grid " + std::to_string(f.height()) + "x" +
                                              std::to_string(f.width()) + " does not split into " +
                                              std::to_string(grid.n_h) + "x" + std::to_string(grid.n_w));
  }
  return grid.with_tile(f.width() / grid.n_w, f.height() / grid.n_h);
}

namespace detail {

inline GridSpec check_pair(const FeatureGrid& a, const FeatureGrid& b, const GridSpec& grid, const DemParams& p) {
  validate(p);
  if (a.tensor().shape() != b.tensor().shape()) {
    throw Error(ErrorCode::ShapeMismatch, "global and local feature grids differ in shape: " +
                                              shape_string(a.tensor().shape()) + " vs " +
                                              shape_string(b.tensor().shape()));
  }
  if (a.dim() != p.dim) {
    throw Error(ErrorCode::ShapeMismatch, "feature dim " + std::to_string(a.dim()) + " does not match DEM dim " +
                                              std::to_string(p.dim));
  }
  return feature_cells(a, grid);
}

}  // namespace detail

// V^glo: queries from the global-view features, context from the local view,
// paired under the global crop.
inline FeatureGrid global_enhance(const FeatureGrid& f_glo, const FeatureGrid& f_loc, const GridSpec& grid,
                                  const DemParams& p, std::vector<Tensor>* maps = nullptr) {
  const GridSpec cells = detail::check_pair(f_glo, f_loc, grid, p);
  dem::Tape t;
  const dem::DemVars vars = dem::bind(p, t);
  const auto out = dem::cross_enhance(t, t.leaf(f_glo.as_matrix()), t.leaf(f_loc.as_matrix()), cells,
                                      Perspective::global, vars.glo, maps);
  return FeatureGrid::from_matrix(t.value(out), f_glo.height(), f_glo.width());
}

// V^loc: queries from the local-view features, context from the global view,
// paired under the local crop.
inline FeatureGrid local_enhance(const FeatureGrid& f_glo, const FeatureGrid& f_loc, const GridSpec& grid,
                                 const DemParams& p, std::vector<Tensor>* maps = nullptr) {
  const GridSpec cells = detail::check_pair(f_glo, f_loc, grid, p);
  dem::Tape t;
  const dem::DemVars vars = dem::bind(p, t);
  const auto out = dem::cross_enhance(t, t.leaf(f_loc.as_matrix()), t.leaf(f_glo.as_matrix()), cells,
                                      Perspective::local, vars.loc, maps);
  return FeatureGrid::from_matrix(t.value(out), f_loc.height(), f_loc.width());
}

inline FeatureGrid fuse(const FeatureGrid& v_glo, const FeatureGrid& v_loc, const DemParams& p) {
  validate(p);
  if (v_glo.tensor().shape() != v_loc.tensor().shape()) {
    throw Error(ErrorCode::ShapeMismatch, "fuse operands differ in shape");
  }
  if (v_glo.dim() != p.dim) throw Error(ErrorCode::ShapeMismatch, "fuse operand dim does not match params");
  dem::Tape t;
  const dem::DemVars vars = dem::bind(p, t);
  const auto out = dem::fuse(t, t.leaf(v_glo.as_matrix()), t.leaf(v_loc.as_matrix()), v_glo.height(),
                             v_glo.width(), p.fusion, vars);
  return FeatureGrid::from_matrix(t.value(out), v_glo.height(), v_glo.width());
}

// Average pool with kernel (n_h, n_w): h_h x w_h x d -> h_l x w_l x d.
inline FeatureGrid dual_pool(const FeatureGrid& v_dual, const GridSpec& grid) {
  return FeatureGrid(avg_pool(v_dual.tensor(), grid.n_h, grid.n_w));
}

inline FeatureGrid multires_combine(const FeatureGrid& f_low, const FeatureGrid& f_dual) {
  return FeatureGrid(add(f_low.tensor(), f_dual.tensor()));
}

inline EnhancedFeatures enhance(const FeatureGrid& f_glo, const FeatureGrid& f_loc, const GridSpec& grid,
                                const DemParams& p, AttentionTrace* trace = nullptr) {
  const GridSpec cells = detail::check_pair(f_glo, f_loc, grid, p);
  dem::Tape t;
  const dem::DemVars vars = dem::bind(p, t);
  const auto n = dem::forward(t, t.leaf(f_glo.as_matrix()), t.leaf(f_loc.as_matrix()), cells, p.fusion, vars, trace);
  const std::size_t h = f_glo.height(), w = f_glo.width();
  return EnhancedFeatures{
      FeatureGrid::from_matrix(t.value(n.v_glo), h, w),
      FeatureGrid::from_matrix(t.value(n.v_loc), h, w),
      FeatureGrid::from_matrix(t.value(n.v_dual), h, w),
      FeatureGrid::from_matrix(t.value(n.f_dual), cells.enc_h, cells.enc_w),
  };
}

// Central-difference check of d(sum F^dual)/d(theta) for every trainable
// tensor of `p` (copied; the caller's params are untouched).
inline GradCheckReport check_dem_gradients(const FeatureGrid& f_glo, const FeatureGrid& f_loc, const GridSpec& grid,
                                           DemParams p, double h) {
  const GridSpec cells = detail::check_pair(f_glo, f_loc, grid, p);
  const Tensor glo = f_glo.as_matrix();
  const Tensor loc = f_loc.as_matrix();
  std::vector<Tensor*> params = dem::trainable_tensors(p);
  auto loss = [&](dem::Tape& t, std::span<const dem::Var> leaves) {
    const dem::DemVars vars = dem::bind(p, leaves);
    const auto n = dem::forward(t, t.leaf(glo), t.leaf(loc), cells, p.fusion, vars, nullptr);
    return autodiff::sum(t, n.f_dual);
  };
  return grad_check(loss, std::span<Tensor* const>(params), h);
}

}  // namespace dualview
