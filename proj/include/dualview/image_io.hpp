#pragma once

// Binary PPM (P6, maxval 255) ingestion, normalization to [-1, 1], and
// resize-to-multiple policies.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "dualview/geometry.hpp"
#include "dualview/io.hpp"

namespace dualview::io {

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
};

inline RgbImage decode_ppm(std::span<const std::uint8_t> in) {
  std::size_t at = 0;
  auto skip_space_and_comments = [&] {
    while (at < in.size()) {
      if (in[at] == '#') {
        while (at < in.size() && in[at] != '\n') ++at;
      } else if (std::isspace(in[at])) {
        ++at;
      } else {
        break;
      }
    }
  };
  auto read_number = [&](const char* what) -> std::size_t {
    skip_space_and_comments();
    std::size_t v = 0, digits = 0;
    while (at < in.size() && std::isdigit(in[at])) {
      v = v * 10 + static_cast<std::size_t>(in[at++] - '0');
      if (++digits > 9) throw Error(ErrorCode::CorruptFile, std::string("PPM ") + what + " too large");
    }
    if (digits == 0) throw Error(ErrorCode::CorruptFile, std::string("PPM header missing ") + what);
    return v;
  };

  if (in.size() < 2 || in[0] != 'P' || in[1] != '6') {
    throw Error(ErrorCode::UnsupportedFormat, "only binary PPM (P6) images are supported");
  }
  at = 2;
  RgbImage img;
  img.width = read_number("width");
  img.height = read_number("height");
  const std::size_t maxval = read_number("maxval");
  if (maxval != 255) throw Error(ErrorCode::UnsupportedFormat, "PPM maxval must be 255 (8-bit)");
  if (img.width == 0 || img.height == 0) throw Error(ErrorCode::CorruptFile, "PPM has zero size");
  if (at >= in.size() || !std::isspace(in[at])) throw Error(ErrorCode::CorruptFile, "PPM header not terminated");
  ++at;
  const std::size_t need = img.width * img.height * 3;
  if (in.size() - at < need) throw Error(ErrorCode::CorruptFile, "PPM pixel data truncated");
  img.pixels.assign(in.begin() + static_cast<std::ptrdiff_t>(at),
                    in.begin() + static_cast<std::ptrdiff_t>(at + need));
  return img;
}

inline Bytes encode_ppm(const RgbImage& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  write_bytes_atomic(path, encode_ppm(img));
}

// u8 -> (v / 255 - 0.5) / 0.5
inline double normalize_u8(std::uint8_t v) { return (static_cast<double>(v) / 255.0 - 0.5) / 0.5; }

inline ImageTensor to_image_tensor(const RgbImage& img) {
  ImageTensor out(img.height, img.width, 3);
  auto dst = out.values();
  for (std::size_t i = 0; i < img.pixels.size(); ++i) dst[i] = normalize_u8(img.pixels[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Resizing

enum class ResizePolicy { reject, nearest, bilinear };

inline ResizePolicy parse_resize_policy(const std::string& s) {
  if (s == "reject") return ResizePolicy::reject;
  if (s == "nearest") return ResizePolicy::nearest;
  if (s == "bilinear") return ResizePolicy::bilinear;
  throw Error(ErrorCode::InvalidArgument, "unknown resize policy '" + s + "' (expected reject|nearest|bilinear)");
}

// Source index for destination index `dst` with pixel-centre alignment.
inline std::size_t nearest_source(std::size_t dst, std::size_t src_n, std::size_t dst_n) {
  return std::min(src_n - 1, ((2 * dst + 1) * src_n) / (2 * dst_n));
}

inline ImageTensor resize_nearest(const ImageTensor& img, std::size_t out_h, std::size_t out_w) {
  ImageTensor out(out_h, out_w, img.channels());
  for (std::size_t y = 0; y < out_h; ++y) {
    const std::size_t sy = nearest_source(y, img.height(), out_h);
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t sx = nearest_source(x, img.width(), out_w);
      for (std::size_t c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

inline ImageTensor resize_bilinear(const ImageTensor& img, std::size_t out_h, std::size_t out_w) {
  auto axis = [](std::size_t dst, std::size_t src_n, std::size_t dst_n) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(src_n) / static_cast<double>(dst_n) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
    const std::size_t i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, src_n - 1);
    return std::tuple{i0, i1, s - static_cast<double>(i0)};
  };
  ImageTensor out(out_h, out_w, img.channels());
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto [y0, y1, fy] = axis(y, img.height(), out_h);
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto [x0, x1, fx] = axis(x, img.width(), out_w);
      for (std::size_t c = 0; c < img.channels(); ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
        const double bottom = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
        out.at(y, x, c) = top * (1.0 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

// Closest positive multiple of `m` (ties round up).
inline std::size_t nearest_multiple(std::size_t n, std::size_t m) {
  const std::size_t k = std::max<std::size_t>(1, (n + m / 2) / m);
  return k * m;
}

inline ImageTensor load_image(const std::filesystem::path& path, ResizePolicy policy, std::size_t multiple_w,
                              std::size_t multiple_h) {
  if (multiple_w == 0 || multiple_h == 0) throw Error(ErrorCode::InvalidArgument, "resize multiple must be positive");
  const Bytes bytes = read_bytes(path);
  ImageTensor img = to_image_tensor(decode_ppm(bytes));
  const std::size_t w = img.width(), h = img.height();
  const bool ok = w >= multiple_w && h >= multiple_h && w % multiple_w == 0 && h % multiple_h == 0;
  if (ok) return img;

  if (policy == ResizePolicy::reject) {
    auto options = [](std::size_t n, std::size_t m) {
      const std::size_t lo = std::max<std::size_t>(1, n / m) * m;
      const std::size_t hi = ((n + m - 1) / m) * m;
      return lo == hi ? std::to_string(lo) : std::to_string(lo) + " and " + std::to_string(hi);
    };
    throw Error(ErrorCode::NotMultiple, path.string() + " is " + std::to_string(w) + "x" + std::to_string(h) +
                                            ", not a multiple of " + std::to_string(multiple_w) + "x" +
                                            std::to_string(multiple_h) + "; nearest valid widths: " +
                                            options(w, multiple_w) + ", heights: " + options(h, multiple_h));
  }
  const std::size_t tw = nearest_multiple(w, multiple_w);
  const std::size_t th = nearest_multiple(h, multiple_h);
  return policy == ResizePolicy::nearest ? resize_nearest(img, th, tw) : resize_bilinear(img, th, tw);
}

inline Tensor image_to_tensor(const ImageTensor& img) {
  return Tensor({img.height(), img.width(), img.channels()},
                std::vector<double>(img.values().begin(), img.values().end()));
}

inline ImageTensor tensor_to_image(const Tensor& t) {
  require_rank(t, 3, "image tensor");
  return ImageTensor(t.dim(0), t.dim(1), t.dim(2), t.storage());
}

}  // namespace dualview::io
