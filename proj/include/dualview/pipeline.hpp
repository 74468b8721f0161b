#pragma once

// End-to-end visual path: crop both ways -> encode every sub-image ->
// recombine -> dual enhancement -> pool -> optional low-resolution addition ->
// linear projector -> row-major token sequence.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dualview/dem.hpp"
#include "dualview/encoder.hpp"
#include "dualview/geometry.hpp"
#include "dualview/tensor.hpp"

namespace dualview {

// Module ablations:
//   full             both crops, both enhancements
//   dcm_local_only   local crop only; the local features feed both branches
//   dcm_global_only  global crop only; the global features feed both branches
//   dcm_add          both crops, no enhancement; F^loc + F^glo is pooled directly
enum class AblationMode { full, dcm_local_only, dcm_global_only, dcm_add };

inline constexpr AblationMode kAllAblationModes[] = {AblationMode::full, AblationMode::dcm_local_only,
                                                     AblationMode::dcm_global_only, AblationMode::dcm_add};

inline const char* to_string(AblationMode m) {
  switch (m) {
    case AblationMode::full: return "full";
    case AblationMode::dcm_local_only: return "dcm_local_only";
    case AblationMode::dcm_global_only: return "dcm_global_only";
    case AblationMode::dcm_add: return "dcm_add";
  }
  return "unknown";
}

inline AblationMode parse_ablation(const std::string& s) {
  for (AblationMode m : kAllAblationModes)
    if (s == to_string(m)) return m;
  throw Error(ErrorCode::UnknownVariant, "unknown ablation mode '" + s + "'");
}

struct PipelineConfig {
  VisionEncoderSpec encoder{8, 8, 4, 8, 3};
  FusionVariant fusion = FusionVariant::linear_concat;
  AblationMode ablation = AblationMode::full;
  bool shared_branches = false;
  // Adds the encoding of a box-downsampled copy of the whole image to F^dual,
  // before the projector. The low-resolution size must equal the encoder input.
  bool multires = false;
  std::size_t low_res_w = 0;  // 0 means encoder input width
  std::size_t low_res_h = 0;
  std::uint64_t seed = 0;
  std::size_t projector_out = 8;

  bool operator==(const PipelineConfig&) const = default;
};

inline void validate(const PipelineConfig& c) {
  validate(c.encoder);
  if (c.projector_out == 0) throw Error(ErrorCode::InvalidArgument, "projector_out must be at least 1");
  if (c.multires) {
    const std::size_t lw = c.low_res_w ? c.low_res_w : c.encoder.input_w;
    const std::size_t lh = c.low_res_h ? c.low_res_h : c.encoder.input_h;
    if (lw != c.encoder.input_w || lh != c.encoder.input_h) {
      throw Error(ErrorCode::ShapeMismatch, "low-resolution size must equal the encoder input size");
    }
  }
}

struct PipelineParams {
  EncoderParams encoder;
  DemParams dem;
  LinearParams projector;  // d x projector_out, with bias

  bool operator==(const PipelineParams&) const = default;
};

// Draw order: encoder, enhancement, projector.
inline PipelineParams init_pipeline_params(const PipelineConfig& c, std::uint64_t seed) {
  validate(c);
  Rng rng(seed);
  PipelineParams p;
  p.encoder = init_encoder_params(c.encoder, rng);
  p.dem = init_dem_params(c.encoder.dim, c.fusion, rng, c.shared_branches);
  p.projector = random_linear(c.encoder.dim, c.projector_out, rng,
                              1.0 / std::sqrt(static_cast<double>(c.encoder.dim)), true);
  return p;
}

struct TokenSequence {
  Tensor tokens;                       // n x projector_out
  std::vector<PixelCoord> provenance;  // pooled-grid cell each token came from
  std::size_t size() const { return provenance.size(); }
};

// Intermediate values of one run, for inspection and tests.
struct PipelineTrace {
  GridSpec grid;
  std::size_t encoder_calls = 0;
  std::vector<FeatureGrid> local_features;
  std::vector<FeatureGrid> global_features;
  std::optional<FeatureGrid> f_loc;
  std::optional<FeatureGrid> f_glo;
  std::optional<EnhancedFeatures> enhanced;
  AttentionTrace attention;
  FeatureGrid pooled;
  std::optional<FeatureGrid> f_low;
  FeatureGrid combined;
};

// Box-filter downsample by integer factors.
inline ImageTensor downsample_area(const ImageTensor& img, std::size_t fy, std::size_t fx) {
  if (fy == 0 || fx == 0 || img.height() % fy != 0 || img.width() % fx != 0) {
    throw Error(ErrorCode::NotDivisible, "downsample factors do not divide image");
  }
  const std::size_t h = img.height() / fy, w = img.width() / fx, c = img.channels();
  const double inv = 1.0 / static_cast<double>(fy * fx);
  ImageTensor out(h, w, c);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < fy; ++dy)
          for (std::size_t dx = 0; dx < fx; ++dx) acc += img.at(y * fy + dy, x * fx + dx, k);
        out.at(y, x, k) = acc * inv;
      }
  return out;
}

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, PipelineParams params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    validate(cfg_);
    validate(params_.dem);
    validate(params_.projector);
    if (params_.dem.dim != cfg_.encoder.dim || params_.projector.in_dim() != cfg_.encoder.dim ||
        params_.projector.out_dim() != cfg_.projector_out || params_.dem.fusion != cfg_.fusion) {
      throw Error(ErrorCode::ShapeMismatch, "pipeline parameters do not match configuration");
    }
  }

  const PipelineConfig& config() const { return cfg_; }
  const PipelineParams& params() const { return params_; }

  TokenSequence run(const ImageTensor& img, PipelineTrace* trace = nullptr) const {
    PipelineTrace local_trace;
    PipelineTrace& tr = trace ? *trace : local_trace;
    const VisionEncoderSpec& enc = cfg_.encoder;
    if (img.channels() != enc.channels) {
      throw Error(ErrorCode::ShapeMismatch, "image has " + std::to_string(img.channels()) + " channels, encoder expects " +
                                                std::to_string(enc.channels));
    }
    const GridSpec grid = compute_grid(img.width(), img.height(), enc.input_w, enc.input_h);
    const GridSpec cells = grid.with_tile(enc.tokens_w(), enc.tokens_h());
    tr.grid = grid;
    tr.encoder_calls = 0;

    const PatchEmbedEncoder encoder(enc, params_.encoder);
    auto encode_all = [&](const SubImageSet<ImageTensor>& subs) {
      std::vector<FeatureGrid> feats;
      feats.reserve(subs.items.size());
      for (const ImageTensor& s : subs.items) {
        feats.push_back(encoder.encode(s));
        ++tr.encoder_calls;
      }
      return feats;
    };

    const bool want_local = cfg_.ablation != AblationMode::dcm_global_only;
    const bool want_global = cfg_.ablation != AblationMode::dcm_local_only;
    if (want_local) {
      tr.local_features = encode_all(local_crop(img, grid));
      tr.f_loc = local_recombine(tr.local_features, cells);
    }
    if (want_global) {
      tr.global_features = encode_all(global_crop(img, grid));
      tr.f_glo = global_recombine(tr.global_features, cells);
    }

    switch (cfg_.ablation) {
      case AblationMode::full:
        tr.enhanced = enhance(*tr.f_glo, *tr.f_loc, grid, params_.dem, &tr.attention);
        tr.pooled = tr.enhanced->f_dual;
        break;
      case AblationMode::dcm_local_only:
        tr.enhanced = enhance(*tr.f_loc, *tr.f_loc, grid, params_.dem, &tr.attention);
        tr.pooled = tr.enhanced->f_dual;
        break;
      case AblationMode::dcm_global_only:
        tr.enhanced = enhance(*tr.f_glo, *tr.f_glo, grid, params_.dem, &tr.attention);
        tr.pooled = tr.enhanced->f_dual;
        break;
      case AblationMode::dcm_add:
        tr.pooled = dual_pool(multires_combine(*tr.f_loc, *tr.f_glo), grid);
        break;
    }

    tr.combined = tr.pooled;
    if (cfg_.multires) {
      tr.f_low = encoder.encode(downsample_area(img, grid.n_h, grid.n_w));
      ++tr.encoder_calls;
      tr.combined = multires_combine(*tr.f_low, tr.pooled);
    }

    TokenSequence out;
    out.tokens = linear(tr.combined.as_matrix(), params_.projector);
    out.provenance.reserve(tr.combined.height() * tr.combined.width());
    for (std::size_t y = 0; y < tr.combined.height(); ++y)
      for (std::size_t x = 0; x < tr.combined.width(); ++x) out.provenance.push_back({x, y});
    return out;
  }

 private:
  PipelineConfig cfg_;
  PipelineParams params_;
};

inline TokenSequence run(const ImageTensor& img, const PipelineConfig& cfg, const PipelineParams& params,
                         PipelineTrace* trace = nullptr) {
  return Pipeline(cfg, params).run(img, trace);
}

struct BudgetReport {
  std::size_t n_sub_images = 0;
  std::size_t encoder_calls = 0;
  std::size_t tokens_before_pool = 0;
  std::size_t tokens_final = 0;
  // Multiply-adds counted as 2 flops; QK^T plus AV per sub-grid pair.
  std::uint64_t attention_flops_global = 0;
  std::uint64_t attention_flops_local = 0;
  std::uint64_t attention_flops_total = 0;
};

inline BudgetReport budget(std::size_t img_w, std::size_t img_h, const PipelineConfig& cfg) {
  validate_geometry(cfg.encoder);
  const GridSpec grid = compute_grid(img_w, img_h, cfg.encoder.input_w, cfg.encoder.input_h);
  const std::uint64_t n = grid.count();
  const std::uint64_t t = token_count(cfg.encoder);
  const std::uint64_t d = cfg.encoder.dim;

  BudgetReport r;
  const bool both = cfg.ablation == AblationMode::full || cfg.ablation == AblationMode::dcm_add;
  r.n_sub_images = static_cast<std::size_t>((both ? 2 : 1) * n);
  r.encoder_calls = r.n_sub_images + (cfg.multires ? 1 : 0);
  r.tokens_before_pool = static_cast<std::size_t>(n * t);
  r.tokens_final = static_cast<std::size_t>(t);
  if (cfg.ablation != AblationMode::dcm_add) {
    const std::uint64_t per_direction = 2 * n * t * t * d * 2;
    r.attention_flops_global = per_direction;
    r.attention_flops_local = per_direction;
  }
  r.attention_flops_total = r.attention_flops_global + r.attention_flops_local;
  return r;
}

}  // namespace dualview
