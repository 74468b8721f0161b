#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace dualview;
using dualview::testing::random_image;

namespace {

PipelineConfig toy_config(FusionVariant fusion = FusionVariant::linear_concat) {
  PipelineConfig c;
  c.encoder = {8, 8, 4, 8, 3};
  c.fusion = fusion;
  c.seed = 17;
  return c;
}

PipelineParams zero_params(const PipelineConfig& c) {
  PipelineParams p = init_pipeline_params(c, c.seed);
  auto zero = [](Tensor& t) { t = Tensor(t.shape()); };
  zero(p.encoder.patch_proj.weight);
  zero(*p.encoder.patch_proj.bias);
  zero(p.encoder.position);
  zero(p.projector.weight);
  zero(*p.projector.bias);
  return p;
}

}  // namespace

TEST(Run, TokenBudgetIsResolutionIndependent) {
  for (FusionVariant v : kAllFusionVariants) {
    const PipelineConfig c = toy_config(v);
    const PipelineParams p = init_pipeline_params(c, c.seed);
    Rng rng(1);
    for (std::size_t k : {1u, 2u, 3u}) {
      const ImageTensor img = random_image(8 * k, 8 * k, 3, rng);
      PipelineTrace tr;
      const TokenSequence t = run(img, c, p, &tr);
      EXPECT_EQ(t.size(), 4u) << to_string(v) << " scale " << k;
      EXPECT_EQ(t.tokens.shape(), (Shape{4, c.projector_out}));
      EXPECT_EQ(t.size(), budget(8 * k, 8 * k, c).tokens_final);
      EXPECT_EQ(tr.encoder_calls, budget(8 * k, 8 * k, c).encoder_calls);
    }
  }
}

TEST(Run, NineByNineComposition) {
  const PipelineConfig c = toy_config();
  const PipelineParams p = init_pipeline_params(c, c.seed);
  Rng rng(2);
  PipelineTrace tr;
  const TokenSequence t = run(random_image(24, 24, 3, rng), c, p, &tr);
  EXPECT_EQ(tr.grid.count(), 9u);
  EXPECT_EQ(tr.local_features.size(), 9u);
  EXPECT_EQ(tr.global_features.size(), 9u);
  EXPECT_EQ(tr.encoder_calls, 18u);
  EXPECT_EQ(tr.f_loc->tensor().shape(), (Shape{6, 6, 8}));
  EXPECT_EQ(tr.f_glo->tensor().shape(), (Shape{6, 6, 8}));
  EXPECT_EQ(t.size(), 4u);
}

// Real encoder geometry with a narrow feature dim to keep it quick.
TEST(Run, RealGeometryNineSubImages) {
  PipelineConfig c;
  c.encoder = {336, 336, 14, 2, 3};
  c.projector_out = 2;
  const PipelineParams p = init_pipeline_params(c, 3);
  Rng rng(3);
  PipelineTrace tr;
  const TokenSequence t = run(random_image(1008, 1008, 3, rng), c, p, &tr);
  EXPECT_EQ(tr.encoder_calls, 18u);
  EXPECT_EQ(tr.f_loc->height(), 72u);
  EXPECT_EQ(tr.f_glo->width(), 72u);
  EXPECT_EQ(t.size(), 576u);
  const BudgetReport b = budget(1008, 1008, c);
  EXPECT_EQ(b.encoder_calls, tr.encoder_calls);
  EXPECT_EQ(b.tokens_final, t.size());
}

TEST(Run, DegenerateGridUsesSelfPair) {
  const PipelineConfig c = toy_config();
  const PipelineParams p = init_pipeline_params(c, c.seed);
  Rng rng(4);
  const ImageTensor img = random_image(8, 8, 3, rng);
  PipelineTrace tr;
  run(img, c, p, &tr);
  EXPECT_EQ(tr.grid.count(), 1u);
  EXPECT_EQ(tr.encoder_calls, 2u);
  EXPECT_EQ(*tr.f_loc, *tr.f_glo);
  EXPECT_EQ(tr.pooled, tr.enhanced->v_dual);
}

TEST(Run, ZeroImageZeroParams) {
  const PipelineConfig c = toy_config();
  Rng rng(5);
  const TokenSequence t = run(ImageTensor(16, 16, 3), c, zero_params(c));
  EXPECT_EQ(t.size(), 4u);
  for (double v : t.tokens.values()) EXPECT_EQ(v, 0.0);
}

TEST(Run, Deterministic) {
  const PipelineConfig c = toy_config(FusionVariant::conv3x3);
  Rng rng(6);
  const ImageTensor img = random_image(16, 24, 3, rng);
  const TokenSequence a = run(img, c, init_pipeline_params(c, 99));
  const TokenSequence b = run(img, c, init_pipeline_params(c, 99));
  EXPECT_EQ(a.tokens, b.tokens);
  const TokenSequence other = run(img, c, init_pipeline_params(c, 100));
  EXPECT_NE(a.tokens, other.tokens);
}

TEST(Run, ProvenanceIsRowMajor) {
  const PipelineConfig c = toy_config();
  Rng rng(7);
  const TokenSequence t = run(random_image(16, 16, 3, rng), c, init_pipeline_params(c, 1));
  const std::vector<PixelCoord> want{{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  EXPECT_EQ(t.provenance, want);
}

TEST(Run, TracedStagesCompose) {
  const PipelineConfig c = toy_config(FusionVariant::weighted_addition);
  const PipelineParams p = init_pipeline_params(c, 8);
  Rng rng(8);
  const ImageTensor img = random_image(16, 24, 3, rng);
  PipelineTrace tr;
  const TokenSequence t = run(img, c, p, &tr);
  const GridSpec g = compute_grid(24, 16, 8, 8);
  const GridSpec cells = g.with_tile(2, 2);
  std::vector<FeatureGrid> loc, glo;
  for (const auto& s : local_crop(img, g).items) loc.push_back(encode(s, c.encoder, p.encoder));
  for (const auto& s : global_crop(img, g).items) glo.push_back(encode(s, c.encoder, p.encoder));
  const FeatureGrid f_loc = local_recombine(loc, cells), f_glo = global_recombine(glo, cells);
  EXPECT_EQ(f_loc, *tr.f_loc);
  EXPECT_EQ(f_glo, *tr.f_glo);
  const EnhancedFeatures e = enhance(f_glo, f_loc, g, p.dem);
  EXPECT_EQ(e.f_dual, tr.pooled);
  EXPECT_EQ(linear(e.f_dual.as_matrix(), p.projector), t.tokens);
}

TEST(Ablation, ModesAreDistinct) {
  PipelineConfig c = toy_config();
  const PipelineParams p = init_pipeline_params(c, 9);
  Rng rng(9);
  const ImageTensor img = random_image(16, 16, 3, rng);
  std::vector<Tensor> outs;
  for (AblationMode m : kAllAblationModes) {
    c.ablation = m;
    PipelineTrace tr;
    outs.push_back(run(img, c, p, &tr).tokens);
    EXPECT_EQ(tr.encoder_calls, budget(16, 16, c).encoder_calls) << to_string(m);
  }
  for (std::size_t i = 0; i < outs.size(); ++i)
    for (std::size_t j = i + 1; j < outs.size(); ++j)
      EXPECT_GT(max_abs_diff(outs[i], outs[j]), 1e-6) << i << " vs " << j;
}

TEST(Ablation, AddModeIsPooledSum) {
  PipelineConfig c = toy_config();
  c.ablation = AblationMode::dcm_add;
  const PipelineParams p = init_pipeline_params(c, 10);
  Rng rng(10);
  const ImageTensor img = random_image(16, 24, 3, rng);
  PipelineTrace tr;
  const TokenSequence t = run(img, c, p, &tr);
  EXPECT_FALSE(tr.enhanced.has_value());
  const FeatureGrid& fl = *tr.f_loc;
  const FeatureGrid& fg = *tr.f_glo;
  FeatureGrid sum(fl.height(), fl.width(), fl.dim());
  for (std::size_t i = 0; i < sum.values().size(); ++i) sum.values()[i] = fl.values()[i] + fg.values()[i];
  Tensor pooled({2, 2, 8});
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 6; ++x)
      for (std::size_t k = 0; k < 8; ++k) pooled(y / 2, x / 3, k) += sum.at(y, x, k) / 6.0;
  EXPECT_LE(max_abs_diff(t.tokens, linear(pooled.reshaped({4, 8}), p.projector)), 1e-14);
}

TEST(Ablation, SingleViewModesEncodeOnce) {
  PipelineConfig c = toy_config();
  const PipelineParams p = init_pipeline_params(c, 11);
  Rng rng(11);
  const ImageTensor img = random_image(16, 16, 3, rng);
  c.ablation = AblationMode::dcm_local_only;
  PipelineTrace tr;
  run(img, c, p, &tr);
  EXPECT_EQ(tr.encoder_calls, 4u);
  EXPECT_FALSE(tr.f_glo.has_value());
  c.ablation = AblationMode::dcm_global_only;
  PipelineTrace tg;
  run(img, c, p, &tg);
  EXPECT_FALSE(tg.f_loc.has_value());
  EXPECT_EQ(tg.enhanced->f_dual, enhance(*tg.f_glo, *tg.f_glo, tg.grid, p.dem).f_dual);
}

TEST(Multires, AddsLowResolutionEncoding) {
  PipelineConfig c = toy_config();
  c.multires = true;
  const PipelineParams p = init_pipeline_params(c, 12);
  Rng rng(12);
  const ImageTensor img = random_image(16, 24, 3, rng);
  PipelineTrace tr;
  const TokenSequence t = run(img, c, p, &tr);
  EXPECT_EQ(tr.encoder_calls, 13u);
  EXPECT_EQ(tr.encoder_calls, budget(24, 16, c).encoder_calls);
  const FeatureGrid low = encode(downsample_area(img, 2, 3), c.encoder, p.encoder);
  EXPECT_EQ(*tr.f_low, low);
  EXPECT_EQ(tr.combined, multires_combine(low, tr.pooled));
  EXPECT_EQ(t.tokens, linear(tr.combined.as_matrix(), p.projector));
}

TEST(Multires, RejectsMismatchedLowResolution) {
  PipelineConfig c = toy_config();
  c.multires = true;
  c.low_res_w = 16;
  EXPECT_THROW(validate(c), Error);
}

TEST(DownsampleArea, BoxMeans) {
  ImageTensor img(2, 4, 1, {1, 2, 3, 4, 5, 6, 7, 8});
  const ImageTensor d = downsample_area(img, 2, 2);
  EXPECT_EQ(d, ImageTensor(1, 2, 1, {3.5, 5.5}));
  EXPECT_THROW(downsample_area(img, 3, 1), Error);
}

TEST(Run, Errors) {
  const PipelineConfig c = toy_config();
  const PipelineParams p = init_pipeline_params(c, 13);
  auto code = [&](const ImageTensor& img) {
    try {
      run(img, c, p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  EXPECT_EQ(code(ImageTensor(12, 16, 3)), ErrorCode::NotMultiple);
  EXPECT_EQ(code(ImageTensor(4, 16, 3)), ErrorCode::TooSmall);
  EXPECT_EQ(code(ImageTensor(16, 16, 1)), ErrorCode::ShapeMismatch);
  PipelineConfig other = c;
  other.fusion = FusionVariant::maxpool;
  EXPECT_THROW(Pipeline(other, p), Error);
  other = c;
  other.projector_out = 3;
  EXPECT_THROW(Pipeline(other, p), Error);
}

TEST(Budget, RealGeometryExamples) {
  PipelineConfig c;
  c.encoder = {336, 336, 14, 1024, 3};
  const BudgetReport b672 = budget(672, 672, c);
  EXPECT_EQ(b672.n_sub_images, 8u);
  EXPECT_EQ(b672.encoder_calls, 8u);
  EXPECT_EQ(b672.tokens_before_pool, 2304u);
  EXPECT_EQ(b672.tokens_final, 576u);
  const BudgetReport b336 = budget(336, 336, c);
  EXPECT_EQ(b336.n_sub_images, 2u);
  EXPECT_EQ(b336.tokens_final, 576u);
  const BudgetReport b1008 = budget(1008, 1008, c);
  EXPECT_EQ(b1008.encoder_calls, 18u);
  EXPECT_EQ(b1008.tokens_final, 576u);
  EXPECT_GT(budget(1344, 1344, c).encoder_calls, b672.encoder_calls);
}

TEST(Budget, AttentionFlops) {
  PipelineConfig c;
  c.encoder = {336, 336, 14, 1024, 3};
  const BudgetReport b = budget(672, 672, c);
  const std::uint64_t per = 2ull * 4 * 576 * 576 * 1024 * 2;
  EXPECT_EQ(b.attention_flops_global, per);
  EXPECT_EQ(b.attention_flops_local, per);
  EXPECT_EQ(b.attention_flops_total, 2 * per);
  c.ablation = AblationMode::dcm_add;
  EXPECT_EQ(budget(672, 672, c).attention_flops_total, 0u);
}

TEST(Budget, Errors) {
  PipelineConfig c;
  c.encoder = {336, 336, 14, 1024, 3};
  try {
    budget(700, 672, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotMultiple);
  }
}

TEST(Config, AblationNames) {
  for (AblationMode m : kAllAblationModes) EXPECT_EQ(parse_ablation(to_string(m)), m);
  EXPECT_THROW(parse_ablation("dcm_sideways"), Error);
}
