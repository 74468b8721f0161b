// Builds a synthetic 16x24 image, runs the full dual-view pipeline on the toy
// encoder, and prints the token budget next to what the run produced.

#include <cmath>
#include <cstdio>

#include "dualview/dualview.hpp"

int main() {
  using namespace dualview;

  PipelineConfig cfg;
  cfg.encoder = {8, 8, 4, 8, 3};  // 8x8 input, 4x4 patches, 8 feature channels
  cfg.fusion = FusionVariant::linear_concat;
  cfg.seed = 2024;

  ImageTensor img(16, 24, 3);
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = std::sin(0.3 * static_cast<double>(x + 2 * y + c));

  const Pipeline pipeline(cfg, init_pipeline_params(cfg, cfg.seed));
  PipelineTrace trace;
  const TokenSequence tokens = pipeline.run(img, &trace);
  const BudgetReport b = budget(img.width(), img.height(), cfg);

  std::printf("grid %zux%zu, %zu encoder calls (budget says %zu)\n", trace.grid.n_w, trace.grid.n_h,
              trace.encoder_calls, b.encoder_calls);
  std::printf("high-res feature map %zux%zu, %zu tokens of width %zu\n", trace.f_glo->height(), trace.f_glo->width(),
              tokens.size(), tokens.tokens.dim(1));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::printf("token %zu (cell %zu,%zu):", i, tokens.provenance[i].x, tokens.provenance[i].y);
    for (std::size_t k = 0; k < tokens.tokens.dim(1); ++k) std::printf(" %+.4f", tokens.tokens(i, k));
    std::printf("\n");
  }
  return tokens.size() == b.tokens_final ? 0 : 1;
}
