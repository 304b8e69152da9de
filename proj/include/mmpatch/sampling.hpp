#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mmpatch/image.hpp"

namespace mmpatch {

/// A fixed linear resampling operator: each output pixel is a bilinear
/// combination of at most four source pixels, applied identically to every
/// channel. Output pixels marked invalid read as 0.
///
/// Geometry stages (TPS warp, placement, resizing) build one of these from
/// their random parameters; the operator is then linear in the pixels, so
/// the backward pass is apply_adjoint().
class SampleMap {
 public:
  SampleMap() = default;
  SampleMap(int out_height, int out_width, int src_height, int src_width);

  int out_height() const noexcept { return out_h_; }
  int out_width() const noexcept { return out_w_; }
  int src_height() const noexcept { return src_h_; }
  int src_width() const noexcept { return src_w_; }

  /// Bilinear tap at continuous source position (sy, sx) in pixel-index
  /// units; coordinates are clamped to the source (edge replication).
  void set_bilinear(int y, int x, double sy, double sx);
  void set_invalid(int y, int x);
  bool valid(int y, int x) const { return valid_[y * out_w_ + x] != 0; }

  Image apply(const Image& src) const;
  /// Transpose of apply(): scatters output gradients onto the source grid.
  Image apply_adjoint(const Image& grad_out) const;

 private:
  struct Taps {
    std::array<std::int32_t, 4> index{};
    std::array<double, 4> weight{};
  };

  int out_h_ = 0, out_w_ = 0, src_h_ = 0, src_w_ = 0;
  std::vector<Taps> taps_;
  std::vector<std::uint8_t> valid_;
};

/// Bilinear resize with half-pixel centers (align_corners = false).
SampleMap resize_map(int src_height, int src_width, int out_height, int out_width);

/// Reflect-101 border index (… c b | a b c d | c b …) for any integer i.
int reflect_index(int i, int n);

/// Normalized 1-D Gaussian of width 2*ceil(3*sigma)+1; sigma = 0 gives {1}.
std::vector<double> gaussian_kernel(double sigma);

/// Separable convolution with the same 1-D kernel along rows and columns,
/// reflect-101 borders.
Image separable_blur(const Image& img, const std::vector<double>& kernel);
Image separable_blur_adjoint(const Image& grad_out, const std::vector<double>& kernel);

}  // namespace mmpatch
