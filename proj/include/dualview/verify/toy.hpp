#pragma once

// Small seeded problems for verification runs: d = 4 features on a 2 x 2 grid
// of 2 x 2 token sub-grids unless told otherwise.

#include <cstddef>
#include <cstdint>

#include "dualview/dem.hpp"
#include "dualview/encoder.hpp"
#include "dualview/geometry.hpp"

namespace dualview::verify {

struct ToyCase {
  GridSpec cells;  // feature-level grid
  FeatureGrid f_glo;
  FeatureGrid f_loc;
  DemParams params;
};

inline FeatureGrid random_grid(std::size_t h, std::size_t w, std::size_t d, Rng& rng) {
  FeatureGrid f(h, w, d);
  for (double& v : f.values()) v = rng.normal();
  return f;
}

inline ToyCase make_toy_case(std::uint64_t seed, FusionVariant variant, std::size_t dim = 4, std::size_t n_w = 2,
                             std::size_t n_h = 2, std::size_t tile_w = 2, std::size_t tile_h = 2) {
  Rng rng(seed);
  ToyCase tc;
  tc.cells = GridSpec{n_w * tile_w, n_h * tile_h, tile_w, tile_h, n_w, n_h};
  tc.f_glo = random_grid(tc.cells.img_h, tc.cells.img_w, dim, rng);
  tc.f_loc = random_grid(tc.cells.img_h, tc.cells.img_w, dim, rng);
  tc.params = init_dem_params(dim, variant, rng);
  // Non-trivial mixing weights and conv bias so their gradients are exercised
  // away from the symmetric starting point.
  tc.params.mix_logits = random_normal({1, 2}, rng, 1.0);
  tc.params.conv_bias = random_normal({dim}, rng, 0.1);
  return tc;
}

}  // namespace dualview::verify
