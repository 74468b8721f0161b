#pragma once

// Fast built-in verification suites behind `dualview selftest`.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dualview/dualview.hpp"
#include "dualview/verify/naive.hpp"
#include "dualview/verify/toy.hpp"

namespace dualview::tools {

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::string detail;
};

inline std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

namespace selftest_detail {

inline ImageTensor random_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  ImageTensor img(h, w, c);
  for (double& v : img.values()) v = rng.uniform(-1.0, 1.0);
  return img;
}

inline const GridSpec kGrids[] = {
    {4, 4, 4, 4, 1, 1}, {8, 8, 4, 4, 2, 2}, {9, 6, 3, 3, 3, 2}, {12, 12, 4, 4, 3, 3}};

}  // namespace selftest_detail

inline SuiteResult selftest_round_trip(std::uint64_t seed) {
  using namespace selftest_detail;
  SuiteResult r{"round_trip", true, ""};
  Rng rng(seed);
  int cases = 0;
  for (const GridSpec& g : kGrids) {
    for (int k = 0; k < 5; ++k) {
      const ImageTensor img = random_image(g.img_h, g.img_w, 3, rng);
      if (local_recombine(local_crop(img, g)) != img || global_recombine(global_crop(img, g)) != img) {
        r.passed = false;
        r.detail = "crop/recombine mismatch";
      }
      const Tensor t = io::image_to_tensor(img);
      const io::Bytes bytes = io::encode_tensor(t);
      if (io::encode_tensor(io::decode_tensor(bytes)) != bytes) {
        r.passed = false;
        r.detail = "tensor file bytes changed";
      }
      ++cases;
    }
  }
  if (r.passed) r.detail = std::to_string(cases) + " images";
  return r;
}

inline SuiteResult selftest_permutation(std::uint64_t seed) {
  using namespace selftest_detail;
  SuiteResult r{"permutation", true, ""};
  Rng rng(seed);
  for (const GridSpec& g : kGrids) {
    const ImageTensor img = random_image(g.img_h, g.img_w, 1, rng);
    std::vector<double> source(img.values().begin(), img.values().end());
    std::sort(source.begin(), source.end());
    for (Perspective p : {Perspective::local, Perspective::global}) {
      const auto subs = p == Perspective::local ? local_crop(img, g) : global_crop(img, g);
      std::vector<double> pooled;
      for (const auto& item : subs.items) pooled.insert(pooled.end(), item.values().begin(), item.values().end());
      std::sort(pooled.begin(), pooled.end());
      if (pooled != source) {
        r.passed = false;
        r.detail = std::string("multiset differs for ") + to_string(p);
      }
      std::vector<int> hits(g.img_w * g.img_h, 0);
      for (std::size_t s = 0; s < g.count(); ++s)
        for (std::size_t v = 0; v < g.enc_h; ++v)
          for (std::size_t u = 0; u < g.enc_w; ++u) {
            const PixelCoord c = map_pixel(g, p, s, u, v);
            ++hits[c.y * g.img_w + c.x];
          }
      if (std::any_of(hits.begin(), hits.end(), [](int h) { return h != 1; })) {
        r.passed = false;
        r.detail = std::string("pixel map not a bijection for ") + to_string(p);
      }
    }
  }
  if (r.passed) r.detail = "multiset and bijection hold";
  return r;
}

inline SuiteResult selftest_attention_normalization(std::uint64_t seed) {
  SuiteResult r{"attention_normalization", true, ""};
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const auto tc = verify::make_toy_case(seed + k, FusionVariant::linear_concat);
    AttentionTrace trace;
    enhance(tc.f_glo, tc.f_loc, tc.cells, tc.params, &trace);
    for (const auto* maps : {&trace.global_maps, &trace.local_maps})
      for (const Tensor& a : *maps)
        for (std::size_t i = 0; i < a.dim(0); ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < a.dim(1); ++j) s += a(i, j);
          worst = std::max(worst, std::abs(s - 1.0));
        }
  }
  r.passed = worst <= 1e-6;
  r.detail = "max |row sum - 1| = " + sci(worst);
  return r;
}

inline SuiteResult selftest_oracle_equivalence(std::uint64_t seed) {
  SuiteResult r{"oracle_equivalence", true, ""};
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const auto tc = verify::make_toy_case(seed + k, FusionVariant::linear_concat);
    worst = std::max(worst, max_abs_diff(global_enhance(tc.f_glo, tc.f_loc, tc.cells, tc.params).tensor(),
                                         verify::naive_global_enhance(tc.f_glo, tc.f_loc, tc.cells, tc.params).tensor()));
    worst = std::max(worst, max_abs_diff(local_enhance(tc.f_glo, tc.f_loc, tc.cells, tc.params).tensor(),
                                         verify::naive_local_enhance(tc.f_glo, tc.f_loc, tc.cells, tc.params).tensor()));
  }
  r.passed = worst <= 1e-10;
  r.detail = "max abs diff = " + sci(worst);
  return r;
}

inline std::vector<SuiteResult> run_selftest(std::uint64_t seed) {
  return {selftest_round_trip(seed), selftest_permutation(seed), selftest_attention_normalization(seed),
          selftest_oracle_equivalence(seed)};
}

}  // namespace dualview::tools
