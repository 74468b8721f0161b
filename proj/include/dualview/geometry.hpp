#pragma once

// Dual-perspective cropping. An image of n_w x n_h encoder-sized tiles is cut
// two ways:
//
//   local   sub-image i is the contiguous tile at (row, col) = (i / n_w, i % n_w)
//   global  sub-image (i, j) takes every n_w-th column starting at j and every
//           n_h-th row starting at i, so each one spans the whole image
//
// Both are pure permutations of pixels; the recombine functions are their exact
// inverses. The same code handles feature grids (cells instead of pixels).

#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dualview/error.hpp"

namespace dualview {

enum class Perspective { local, global };

inline const char* to_string(Perspective p) { return p == Perspective::local ? "local" : "global"; }

inline Perspective parse_perspective(const std::string& s) {
  if (s == "local") return Perspective::local;
  if (s == "global") return Perspective::global;
  throw Error(ErrorCode::InvalidArgument, "unknown perspective '" + s + "' (expected local|global)");
}

struct GridSpec {
  std::size_t img_w = 0;
  std::size_t img_h = 0;
  std::size_t enc_w = 0;
  std::size_t enc_h = 0;
  std::size_t n_w = 0;
  std::size_t n_h = 0;

  std::size_t count() const noexcept { return n_w * n_h; }

  // Same tiling with each tile measured in `cell_w x cell_h` units, e.g. the
  // encoder's token grid instead of pixels.
  GridSpec with_tile(std::size_t cell_w, std::size_t cell_h) const {
    return GridSpec{n_w * cell_w, n_h * cell_h, cell_w, cell_h, n_w, n_h};
  }

  bool operator==(const GridSpec&) const = default;
};

inline GridSpec compute_grid(std::size_t img_w, std::size_t img_h, std::size_t enc_w, std::size_t enc_h) {
  if (img_w == 0 || img_h == 0 || enc_w == 0 || enc_h == 0) {
    throw Error(ErrorCode::InvalidArgument, "grid dimensions must be positive");
  }
  if (img_w < enc_w || img_h < enc_h) {
    throw Error(ErrorCode::TooSmall, "image " + std::to_string(img_w) + "x" + std::to_string(img_h) +
                                         " is smaller than encoder input " + std::to_string(enc_w) + "x" +
                                         std::to_string(enc_h));
  }
  GridSpec g{img_w, img_h, enc_w, enc_h, img_w / enc_w, img_h / enc_h};
  if (g.n_w * enc_w != img_w || g.n_h * enc_h != img_h) {
    throw Error(ErrorCode::NotMultiple, "image " + std::to_string(img_w) + "x" + std::to_string(img_h) +
                                            " is not an exact multiple of " + std::to_string(enc_w) + "x" +
                                            std::to_string(enc_h));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Pixel mapping

struct PixelCoord {
  std::size_t x = 0;
  std::size_t y = 0;
  bool operator==(const PixelCoord&) const = default;
};

// Source coordinate of pixel (u, v) in sub-image `sub`. For the global
// perspective, sub = i * n_w + j.
inline PixelCoord map_pixel(const GridSpec& g, Perspective p, std::size_t sub, std::size_t u, std::size_t v) {
  if (sub >= g.count() || u >= g.enc_w || v >= g.enc_h) {
    throw Error(ErrorCode::OutOfRange, "sub-image " + std::to_string(sub) + " pixel (" + std::to_string(u) +
                                           ", " + std::to_string(v) + ") outside grid");
  }
  if (p == Perspective::local) {
    const std::size_t row = sub / g.n_w;
    const std::size_t col = sub % g.n_w;
    return {col * g.enc_w + u, row * g.enc_h + v};
  }
  const std::size_t i = sub / g.n_w;
  const std::size_t j = sub % g.n_w;
  return {j + u * g.n_w, i + v * g.n_h};
}

// Flat source cell index (y * img_w + x) for every (sub, v, u) in crop order.
// Entry sub * enc_w * enc_h + v * enc_w + u.
inline std::vector<std::size_t> crop_permutation(const GridSpec& g, Perspective p) {
  std::vector<std::size_t> perm;
  perm.reserve(g.img_w * g.img_h);
  for (std::size_t s = 0; s < g.count(); ++s)
    for (std::size_t v = 0; v < g.enc_h; ++v)
      for (std::size_t u = 0; u < g.enc_w; ++u) {
        const PixelCoord c = map_pixel(g, p, s, u, v);
        perm.push_back(c.y * g.img_w + c.x);
      }
  return perm;
}

inline std::vector<std::size_t> invert_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = k;
  return inv;
}

// ---------------------------------------------------------------------------
// Grid containers

// Anything shaped height x width x channels with row-major (y, x, c) storage.
template <class G>
concept CellGrid = requires(const G& cg, G& g, std::size_t n) {
  G(n, n, n);
  { cg.height() } -> std::convertible_to<std::size_t>;
  { cg.width() } -> std::convertible_to<std::size_t>;
  { cg.channels() } -> std::convertible_to<std::size_t>;
  { cg.values() } -> std::convertible_to<std::span<const double>>;
  { g.values() } -> std::convertible_to<std::span<double>>;
};

class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels)
      : height_(height), width_(width), channels_(channels), data_(height * width * channels, 0.0) {}
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (data_.size() != height_ * width_ * channels_) {
      throw Error(ErrorCode::ShapeMismatch, "image data length does not match dimensions");
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * width_ + x) * channels_ + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * width_ + x) * channels_ + c];
  }

  bool operator==(const ImageTensor&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

template <CellGrid G>
struct SubImageSet {
  GridSpec grid;
  Perspective perspective = Perspective::local;
  std::vector<G> items;
};

namespace detail {

template <CellGrid G>
void require_source_dims(const G& img, const GridSpec& g, const char* where) {
  if (img.width() != g.img_w || img.height() != g.img_h) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(where) + ": input " + std::to_string(img.width()) + "x" +
                    std::to_string(img.height()) + " does not match grid " + std::to_string(g.img_w) + "x" +
                    std::to_string(g.img_h));
  }
}

template <CellGrid G>
SubImageSet<G> crop(const G& img, const GridSpec& g, Perspective p) {
  require_source_dims(img, g, p == Perspective::local ? "local_crop" : "global_crop");
  const std::size_t c = img.channels();
  const auto src = img.values();
  SubImageSet<G> out{g, p, {}};
  out.items.reserve(g.count());
  for (std::size_t s = 0; s < g.count(); ++s) {
    G item(g.enc_h, g.enc_w, c);
    auto dst = item.values();
    for (std::size_t v = 0; v < g.enc_h; ++v)
      for (std::size_t u = 0; u < g.enc_w; ++u) {
        const PixelCoord from = map_pixel(g, p, s, u, v);
        const std::size_t si = (from.y * g.img_w + from.x) * c;
        const std::size_t di = (v * g.enc_w + u) * c;
        for (std::size_t k = 0; k < c; ++k) dst[di + k] = src[si + k];
      }
    out.items.push_back(std::move(item));
  }
  return out;
}

template <CellGrid G>
G recombine(std::span<const G> items, const GridSpec& g, Perspective p) {
  if (items.empty() || items.size() != g.count()) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(g.count()) + " sub-images, got " +
                                              std::to_string(items.size()));
  }
  const std::size_t c = items.front().channels();
  for (const G& item : items) {
    if (item.width() != g.enc_w || item.height() != g.enc_h || item.channels() != c) {
      throw Error(ErrorCode::ShapeMismatch, "sub-image dimensions inconsistent with grid");
    }
  }
  G out(g.img_h, g.img_w, c);
  auto dst = out.values();
  for (std::size_t s = 0; s < g.count(); ++s) {
    const auto src = items[s].values();
    for (std::size_t v = 0; v < g.enc_h; ++v)
      for (std::size_t u = 0; u < g.enc_w; ++u) {
        const PixelCoord to = map_pixel(g, p, s, u, v);
        const std::size_t di = (to.y * g.img_w + to.x) * c;
        const std::size_t si = (v * g.enc_w + u) * c;
        for (std::size_t k = 0; k < c; ++k) dst[di + k] = src[si + k];
      }
  }
  return out;
}

}  // namespace detail

template <CellGrid G>
SubImageSet<G> local_crop(const G& img, const GridSpec& g) {
  return detail::crop(img, g, Perspective::local);
}

template <CellGrid G>
SubImageSet<G> global_crop(const G& img, const GridSpec& g) {
  return detail::crop(img, g, Perspective::global);
}

template <CellGrid G>
G local_recombine(const std::vector<G>& items, const GridSpec& g) {
  return detail::recombine(std::span<const G>(items), g, Perspective::local);
}

template <CellGrid G>
G global_recombine(const std::vector<G>& items, const GridSpec& g) {
  return detail::recombine(std::span<const G>(items), g, Perspective::global);
}

template <CellGrid G>
G local_recombine(const SubImageSet<G>& subs) {
  if (subs.perspective != Perspective::local) {
    throw Error(ErrorCode::WrongPerspective, "local_recombine given a global sub-image set");
  }
  return local_recombine(subs.items, subs.grid);
}

template <CellGrid G>
G global_recombine(const SubImageSet<G>& subs) {
  if (subs.perspective != Perspective::global) {
    throw Error(ErrorCode::WrongPerspective, "global_recombine given a local sub-image set");
  }
  return global_recombine(subs.items, subs.grid);
}

template <CellGrid G>
G recombine(const SubImageSet<G>& subs) {
  return subs.perspective == Perspective::local ? local_recombine(subs) : global_recombine(subs);
}

}  // namespace dualview
