#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "dualview/verify/naive.hpp"
#include "test_support.hpp"

using namespace dualview;
using dualview::testing::iota_image;
using dualview::testing::random_image;

namespace {

void expect_code(ErrorCode code, auto&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

ImageTensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t h = rows.size(), w = rows.begin()->size();
  std::vector<double> data;
  for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
  return ImageTensor(h, w, 1, std::move(data));
}

}  // namespace

TEST(ComputeGrid, CommonResolutions) {
  const GridSpec g2 = compute_grid(672, 672, 336, 336);
  EXPECT_EQ(g2.n_w, 2u);
  EXPECT_EQ(g2.n_h, 2u);
  EXPECT_EQ(g2.count(), 4u);
  EXPECT_EQ(compute_grid(336, 336, 336, 336).count(), 1u);
  const GridSpec g3 = compute_grid(1008, 1008, 336, 336);
  EXPECT_EQ(g3.n_w, 3u);
  EXPECT_EQ(g3.count(), 9u);
}

TEST(ComputeGrid, Rectangular) {
  const GridSpec g = compute_grid(12, 8, 4, 4);
  EXPECT_EQ(g.n_w, 3u);
  EXPECT_EQ(g.n_h, 2u);
}

TEST(ComputeGrid, Errors) {
  expect_code(ErrorCode::TooSmall, [] { compute_grid(300, 336, 336, 336); });
  expect_code(ErrorCode::TooSmall, [] { compute_grid(336, 10, 336, 336); });
  expect_code(ErrorCode::NotMultiple, [] { compute_grid(400, 336, 336, 336); });
  expect_code(ErrorCode::NotMultiple, [] { compute_grid(672, 700, 336, 336); });
  expect_code(ErrorCode::InvalidArgument, [] { compute_grid(0, 336, 336, 336); });
  expect_code(ErrorCode::InvalidArgument, [] { compute_grid(336, 336, 0, 336); });
}

TEST(LocalCrop, TileBounds) {
  const GridSpec g = compute_grid(672, 672, 336, 336);
  for (std::size_t v : {0u, 335u})
    for (std::size_t u : {0u, 335u}) {
      const PixelCoord c = map_pixel(g, Perspective::local, 3, u, v);
      EXPECT_EQ(c.x, 336 + u);
      EXPECT_EQ(c.y, 336 + v);
    }
  EXPECT_EQ(map_pixel(g, Perspective::local, 1, 0, 0), (PixelCoord{336, 0}));
  EXPECT_EQ(map_pixel(g, Perspective::local, 2, 0, 0), (PixelCoord{0, 336}));
}

TEST(LocalCrop, ItemOneStartsAtColumnOne) {
  Rng rng(1);
  const GridSpec g = compute_grid(8, 8, 4, 4);
  const ImageTensor img = random_image(8, 8, 3, rng);
  const auto subs = local_crop(img, g);
  ASSERT_EQ(subs.items.size(), 4u);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(subs.items[1].at(0, 0, c), img.at(0, 4, c));
}

TEST(LocalCrop, SingleTileIsIdentity) {
  Rng rng(2);
  const ImageTensor img = random_image(5, 7, 3, rng);
  const GridSpec g = compute_grid(7, 5, 7, 5);
  const auto local = local_crop(img, g);
  const auto global = global_crop(img, g);
  ASSERT_EQ(local.items.size(), 1u);
  EXPECT_EQ(local.items[0], img);
  EXPECT_EQ(global.items[0], img);
}

TEST(LocalCrop, ShapeMismatch) {
  const ImageTensor img(8, 8, 3);
  expect_code(ErrorCode::ShapeMismatch, [&] { local_crop(img, compute_grid(12, 8, 4, 4)); });
  expect_code(ErrorCode::ShapeMismatch, [&] { global_crop(img, compute_grid(12, 8, 4, 4)); });
}

TEST(GlobalCrop, MappingExamples) {
  const GridSpec g = compute_grid(4, 4, 2, 2);
  // sub (i=0, j=1) has index 1
  EXPECT_EQ(map_pixel(g, Perspective::global, 1, 1, 0), (PixelCoord{3, 0}));
  EXPECT_EQ(map_pixel(g, Perspective::global, 0, 0, 0), (PixelCoord{0, 0}));
  const GridSpec g3 = compute_grid(9, 9, 3, 3);
  // sub (i=2, j=1) has index 2 * 3 + 1
  EXPECT_EQ(map_pixel(g3, Perspective::global, 7, 0, 1), (PixelCoord{1, 5}));
}

TEST(GlobalCrop, IotaFourByFour) {
  const GridSpec g = compute_grid(4, 4, 2, 2);
  const ImageTensor img = iota_image(4, 4);
  const auto subs = global_crop(img, g);
  EXPECT_EQ(subs.items[0], from_rows({{0, 2}, {8, 10}}));
  // Cross-check every item against the index-set enumeration.
  for (std::size_t s = 0; s < g.count(); ++s) {
    const auto cells = verify::global_index_set(g, s / g.n_w, s % g.n_w);
    ASSERT_EQ(cells.size(), 4u);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      EXPECT_EQ(subs.items[s].values()[k], img.at(cells[k].y, cells[k].x, 0));
    }
  }
  EXPECT_EQ(global_recombine(subs), img);
}

TEST(GlobalCrop, MatchesIndexSetExhaustivelyOnThreeByThree) {
  const GridSpec g = compute_grid(12, 9, 4, 3);
  for (std::size_t i = 0; i < g.n_h; ++i)
    for (std::size_t j = 0; j < g.n_w; ++j) {
      const auto cells = verify::global_index_set(g, i, j);
      for (std::size_t v = 0; v < g.enc_h; ++v)
        for (std::size_t u = 0; u < g.enc_w; ++u) {
          const auto& c = cells[v * g.enc_w + u];
          EXPECT_EQ(map_pixel(g, Perspective::global, i * g.n_w + j, u, v), (PixelCoord{c.x, c.y}));
        }
    }
}

TEST(LocalRecombine, FourTiles) {
  const GridSpec g = compute_grid(4, 4, 2, 2);
  const std::vector<ImageTensor> tiles{from_rows({{0, 1}, {4, 5}}), from_rows({{2, 3}, {6, 7}}),
                                       from_rows({{8, 9}, {12, 13}}), from_rows({{10, 11}, {14, 15}})};
  EXPECT_EQ(local_recombine(tiles, g), iota_image(4, 4));
}

TEST(LocalRecombine, SingleItem) {
  Rng rng(3);
  const ImageTensor img = random_image(4, 4, 2, rng);
  EXPECT_EQ(local_recombine(std::vector<ImageTensor>{img}, compute_grid(4, 4, 4, 4)), img);
  EXPECT_EQ(global_recombine(std::vector<ImageTensor>{img}, compute_grid(4, 4, 4, 4)), img);
}

TEST(Recombine, RoundTripLargeImage) {
  Rng rng(4);
  const ImageTensor img = random_image(672, 672, 3, rng);
  const GridSpec g = compute_grid(672, 672, 336, 336);
  EXPECT_EQ(local_recombine(local_crop(img, g)), img);
  EXPECT_EQ(global_recombine(global_crop(img, g)), img);
}

TEST(Recombine, Errors) {
  const GridSpec g = compute_grid(4, 4, 2, 2);
  const auto subs = local_crop(ImageTensor(4, 4, 1), g);
  expect_code(ErrorCode::WrongPerspective, [&] { global_recombine(subs); });
  expect_code(ErrorCode::WrongPerspective, [&] { local_recombine(global_crop(ImageTensor(4, 4, 1), g)); });
  std::vector<ImageTensor> short_list(subs.items.begin(), subs.items.end() - 1);
  expect_code(ErrorCode::ShapeMismatch, [&] { local_recombine(short_list, g); });
  expect_code(ErrorCode::ShapeMismatch, [&] { local_recombine(std::vector<ImageTensor>{}, g); });
  auto bad = subs.items;
  bad[2] = ImageTensor(3, 2, 1);
  expect_code(ErrorCode::ShapeMismatch, [&] { local_recombine(bad, g); });
  bad[2] = ImageTensor(2, 2, 2);
  expect_code(ErrorCode::ShapeMismatch, [&] { global_recombine(bad, g); });
}

TEST(MapPixel, OutOfRange) {
  const GridSpec g = compute_grid(4, 4, 2, 2);
  expect_code(ErrorCode::OutOfRange, [&] { map_pixel(g, Perspective::local, 4, 0, 0); });
  expect_code(ErrorCode::OutOfRange, [&] { map_pixel(g, Perspective::global, 0, 2, 0); });
  expect_code(ErrorCode::OutOfRange, [&] { map_pixel(g, Perspective::global, 0, 0, 2); });
}

TEST(MapPixel, BijectionSixBySix) {
  const GridSpec g = compute_grid(6, 6, 3, 3);
  for (Perspective p : {Perspective::local, Perspective::global}) {
    std::set<std::pair<std::size_t, std::size_t>> hit;
    for (std::size_t s = 0; s < g.count(); ++s)
      for (std::size_t v = 0; v < 3; ++v)
        for (std::size_t u = 0; u < 3; ++u) {
          const PixelCoord c = map_pixel(g, p, s, u, v);
          ASSERT_LT(c.x, 6u);
          ASSERT_LT(c.y, 6u);
          hit.insert({c.x, c.y});
        }
    EXPECT_EQ(hit.size(), 36u) << to_string(p);
  }
}

// Exhaustive over every grid that fits in 12 x 12.
TEST(GeometryProperty, BijectionAllSmallGrids) {
  for (std::size_t ew = 1; ew <= 12; ++ew)
    for (std::size_t eh = 1; eh <= 12; ++eh)
      for (std::size_t nw = 1; nw * ew <= 12; ++nw)
        for (std::size_t nh = 1; nh * eh <= 12; ++nh) {
          const GridSpec g = compute_grid(nw * ew, nh * eh, ew, eh);
          for (Perspective p : {Perspective::local, Perspective::global}) {
            const auto perm = crop_permutation(g, p);
            std::vector<char> seen(g.img_w * g.img_h, 0);
            for (std::size_t idx : perm) {
              ASSERT_LT(idx, seen.size());
              ASSERT_FALSE(seen[idx]);
              seen[idx] = 1;
            }
            ASSERT_EQ(perm.size(), seen.size());
            const auto inv = invert_permutation(perm);
            for (std::size_t k = 0; k < perm.size(); ++k) ASSERT_EQ(inv[perm[k]], k);
          }
        }
}

TEST(GeometryProperty, PermutationAndRoundTrip) {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t ew = 1 + rng.below(5), eh = 1 + rng.below(5);
    const std::size_t nw = 1 + rng.below(3), nh = 1 + rng.below(3);
    const GridSpec g = compute_grid(nw * ew, nh * eh, ew, eh);
    const ImageTensor img = random_image(g.img_h, g.img_w, 3, rng);
    std::vector<double> source(img.values().begin(), img.values().end());
    std::sort(source.begin(), source.end());
    for (Perspective p : {Perspective::local, Perspective::global}) {
      const auto subs = p == Perspective::local ? local_crop(img, g) : global_crop(img, g);
      ASSERT_EQ(subs.items.size(), g.count());
      std::vector<double> pooled;
      for (const auto& it : subs.items) {
        EXPECT_EQ(it.width(), ew);
        EXPECT_EQ(it.height(), eh);
        pooled.insert(pooled.end(), it.values().begin(), it.values().end());
      }
      std::sort(pooled.begin(), pooled.end());
      EXPECT_EQ(pooled, source);
      EXPECT_EQ(recombine(subs), img);
    }
  }
}

TEST(GeometryProperty, PerspectivesDifferWhenGridIsNontrivial) {
  const GridSpec g = compute_grid(6, 4, 3, 2);
  const ImageTensor img = iota_image(4, 6);
  EXPECT_NE(local_crop(img, g).items[0], global_crop(img, g).items[0]);
}

TEST(GeometryProperty, FeatureGridsRecombineLikeImages) {
  Rng rng(6);
  const GridSpec g = compute_grid(6, 4, 3, 2);
  FeatureGrid f(4, 6, 5);
  for (double& v : f.values()) v = rng.normal();
  EXPECT_EQ(local_recombine(local_crop(f, g)), f);
  EXPECT_EQ(global_recombine(global_crop(f, g)), f);
  // Same permutation as for a 5-channel image with identical values.
  ImageTensor img(4, 6, 5, std::vector<double>(f.values().begin(), f.values().end()));
  const auto fs = global_crop(f, g);
  const auto is = global_crop(img, g);
  for (std::size_t s = 0; s < g.count(); ++s)
    EXPECT_TRUE(std::ranges::equal(fs.items[s].values(), is.items[s].values()));
}

TEST(Perspective, ParseAndPrint) {
  EXPECT_EQ(parse_perspective("local"), Perspective::local);
  EXPECT_EQ(parse_perspective("global"), Perspective::global);
  EXPECT_STREQ(to_string(Perspective::global), "global");
  EXPECT_THROW(parse_perspective("diagonal"), Error);
}
