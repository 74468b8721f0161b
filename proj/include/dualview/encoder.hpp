#pragma once

// Vision encoder interface plus a toy patch-embedding encoder that stands in
// for a pretrained ViT: non-overlapping p x p patches are flattened, projected
// to d channels, and offset by a learned per-position embedding. No class
// token is emitted; the output is only the spatial token grid.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "dualview/geometry.hpp"
#include "dualview/tensor.hpp"

namespace dualview {

// h x w x d feature map. Satisfies CellGrid, so the cropping and
// recombination functions work on it cell by cell.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(std::size_t h, std::size_t w, std::size_t dim) : data_({h, w, dim}) {}
  explicit FeatureGrid(Tensor t) : data_(std::move(t)) { require_rank(data_, 3, "FeatureGrid"); }

  // Rows are cells in row-major (y, x) order.
  static FeatureGrid from_matrix(const Tensor& m, std::size_t h, std::size_t w) {
    require_rank(m, 2, "FeatureGrid::from_matrix");
    if (m.dim(0) != h * w) throw Error(ErrorCode::ShapeMismatch, "token count does not match grid");
    return FeatureGrid(m.reshaped({h, w, m.dim(1)}));
  }

  std::size_t height() const { return data_.dim(0); }
  std::size_t width() const { return data_.dim(1); }
  std::size_t channels() const { return data_.dim(2); }
  std::size_t dim() const { return data_.dim(2); }

  std::span<double> values() noexcept { return data_.values(); }
  std::span<const double> values() const noexcept { return data_.values(); }

  double& at(std::size_t y, std::size_t x, std::size_t c) { return data_(y, x, c); }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return data_(y, x, c); }

  const Tensor& tensor() const noexcept { return data_; }
  Tensor as_matrix() const { return data_.reshaped({height() * width(), dim()}); }

  bool operator==(const FeatureGrid&) const = default;

 private:
  Tensor data_{Shape{0, 0, 0}};
};

static_assert(CellGrid<FeatureGrid>);
static_assert(CellGrid<ImageTensor>);

struct VisionEncoderSpec {
  std::size_t input_w = 0;
  std::size_t input_h = 0;
  std::size_t patch = 0;
  std::size_t dim = 0;
  std::size_t channels = 3;

  std::size_t tokens_w() const { return input_w / patch; }
  std::size_t tokens_h() const { return input_h / patch; }

  bool operator==(const VisionEncoderSpec&) const = default;
};

inline void validate_geometry(const VisionEncoderSpec& s) {
  if (s.input_w == 0 || s.input_h == 0 || s.patch == 0) {
    throw Error(ErrorCode::InvalidArgument, "encoder input and patch size must be positive");
  }
  if (s.input_w % s.patch != 0 || s.input_h % s.patch != 0) {
    throw Error(ErrorCode::NotDivisible, "patch " + std::to_string(s.patch) + " does not divide encoder input " +
                                             std::to_string(s.input_w) + "x" + std::to_string(s.input_h));
  }
}

inline void validate(const VisionEncoderSpec& s) {
  validate_geometry(s);
  if (s.dim == 0 || s.dim % 2 != 0) {
    throw Error(ErrorCode::InvalidArgument, "feature dim must be positive and even, got " + std::to_string(s.dim));
  }
  if (s.channels == 0) throw Error(ErrorCode::InvalidArgument, "encoder channels must be positive");
}

// Tokens produced per encoded sub-image: w_l * h_l.
inline std::size_t token_count(const VisionEncoderSpec& s) {
  validate_geometry(s);
  return s.tokens_w() * s.tokens_h();
}

struct EncoderParams {
  LinearParams patch_proj;  // (p * p * channels) x d, with bias
  Tensor position;          // (h_l * w_l) x d

  bool operator==(const EncoderParams&) const = default;
};

inline EncoderParams init_encoder_params(const VisionEncoderSpec& s, Rng& rng) {
  validate_geometry(s);
  const std::size_t fan_in = s.patch * s.patch * s.channels;
  EncoderParams p;
  p.patch_proj = random_linear(fan_in, s.dim, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)), true);
  p.position = random_normal({token_count(s), s.dim}, rng, 0.02);
  return p;
}

// Patch rows in (py, px) order; within a patch, (dy, dx, c) order.
inline Tensor flatten_patches(const ImageTensor& img, std::size_t patch) {
  const std::size_t th = img.height() / patch, tw = img.width() / patch, c = img.channels();
  Tensor out({th * tw, patch * patch * c});
  for (std::size_t py = 0; py < th; ++py)
    for (std::size_t px = 0; px < tw; ++px) {
      std::size_t col = 0;
      for (std::size_t dy = 0; dy < patch; ++dy)
        for (std::size_t dx = 0; dx < patch; ++dx)
          for (std::size_t k = 0; k < c; ++k) out(py * tw + px, col++) = img.at(py * patch + dy, px * patch + dx, k);
    }
  return out;
}

// Only the geometry is checked here; the even-dim rule belongs to fusion.
inline FeatureGrid encode(const ImageTensor& img, const VisionEncoderSpec& s, const EncoderParams& p) {
  validate_geometry(s);
  if (img.width() != s.input_w || img.height() != s.input_h || img.channels() != s.channels) {
    throw Error(ErrorCode::ShapeMismatch,
                "encoder expects " + std::to_string(s.input_w) + "x" + std::to_string(s.input_h) + "x" +
                    std::to_string(s.channels) + ", got " + std::to_string(img.width()) + "x" +
                    std::to_string(img.height()) + "x" + std::to_string(img.channels()));
  }
  if (p.patch_proj.in_dim() != s.patch * s.patch * s.channels || p.patch_proj.out_dim() != s.dim ||
      p.position.shape() != Shape{token_count(s), s.dim}) {
    throw Error(ErrorCode::ShapeMismatch, "encoder parameters do not match the encoder geometry");
  }
  Tensor tokens = add(linear(flatten_patches(img, s.patch), p.patch_proj), p.position);
  return FeatureGrid::from_matrix(tokens, s.tokens_h(), s.tokens_w());
}

// Anything that maps an encoder-sized image to a token grid. A pretrained
// backend can implement this in place of the patch embedding.
class VisionEncoder {
 public:
  virtual ~VisionEncoder() = default;
  virtual const VisionEncoderSpec& spec() const = 0;
  virtual FeatureGrid encode(const ImageTensor& img) const = 0;
};

class PatchEmbedEncoder final : public VisionEncoder {
 public:
  PatchEmbedEncoder(VisionEncoderSpec spec, EncoderParams params)
      : spec_(std::move(spec)), params_(std::move(params)) {
    validate_geometry(spec_);
  }

  const VisionEncoderSpec& spec() const override { return spec_; }
  const EncoderParams& params() const { return params_; }

  FeatureGrid encode(const ImageTensor& img) const override { return dualview::encode(img, spec_, params_); }

 private:
  VisionEncoderSpec spec_;
  EncoderParams params_;
};

}  // namespace dualview
