#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "mmpatch/image.hpp"
#include "mmpatch/patch.hpp"
#include "mmpatch/sampling.hpp"

namespace mmpatch {

/// Normalized box: center and size as fractions of the image dimensions.
struct BoundingBox {
  int class_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool operator==(const BoundingBox&) const = default;
};

/// Checks the label invariants (coordinates in range, positive size, box
/// inside the image up to `tolerance`). Returns an empty string when valid,
/// otherwise a description of the first violation.
std::string box_violation(const BoundingBox& box, double tolerance = 1e-6);

double iou(const BoundingBox& a, const BoundingBox& b);

struct LabeledImage {
  Image image;
  std::vector<BoundingBox> boxes;
};

struct TransformConfig {
  double rotation_range_deg = 20.0;  ///< angle ~ U[-r, r]
  double translate_range = 0.1;      ///< shift ~ U[-t, t] * box size
  double patch_scale = 0.30;         ///< patch width / box height
  int tps_grid = 5;                  ///< control points per side
  double tps_sigma = 0.05;           ///< max control offset, fraction of patch size
  double brightness_range = 0.1;     ///< brightness ~ U[-b, b]
  double contrast_min = 0.8;
  double contrast_max = 1.2;
  double noise_std = 0.02;
  double blur_gain = 1.5;            ///< pixels of sigma per unit of (1/h - 1)
  int person_class = 0;

  bool enable_tps = true;
  bool enable_blur = true;
  bool enable_perspective = true;
  bool enable_lighting = true;

  void validate() const;
};

/// Control-point displacements on a side x side grid spanning the patch,
/// in units of patch size. Row-major, {dx, dy}.
struct TpsOffsets {
  int side = 0;
  std::vector<std::array<double, 2>> offsets;

  static TpsOffsets zero(int side);
};

struct BoxDraw {
  double angle_deg = 0.0;
  double shift_x = 0.0;  ///< fraction of box width
  double shift_y = 0.0;  ///< fraction of box height
  TpsOffsets tps;        ///< side 0 disables the warp
};

/// Every random parameter of one application of the patch transform to one
/// image: lighting for the image plus one BoxDraw per person box.
struct RandomDraw {
  double contrast = 1.0;
  double brightness = 0.0;
  Image noise;  ///< image-sized additive field; empty means no noise
  std::vector<BoxDraw> boxes;

  /// All stages at identity for `box_count` boxes.
  static RandomDraw identity(std::size_t box_count);
};

/// Samples a RandomDraw. Box k's parameters depend only on
/// (seed, stream, image_index, k); lighting only on (seed, stream, image_index).
/// `stream` separates training steps or EoT samples.
RandomDraw draw_transforms(const TransformConfig& cfg, std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t image_index, const LabeledImage& sample);

/// Backward-mapping sampler of the thin-plate-spline warp that moves each
/// control point of the regular grid by its offset.
SampleMap tps_sampling_map(int height, int width, const TpsOffsets& offsets);
Patch tps_warp(const Patch& p, const TpsOffsets& offsets);

/// sigma = gain * (1/h - 1), 0 for h >= 1.
double distance_blur_sigma(double box_height_frac, double blur_gain);
Patch distance_blur(const Patch& p, double box_height_frac, double blur_gain = 1.5);

/// Placement of a patch-sized source onto an image: sampler plus binary
/// coverage mask (1 channel).
struct Placement {
  SampleMap sampler;
  Image mask;
  bool empty = true;
};

/// The patch is scaled to width patch_scale * box.h * image_height, rotated
/// by draw.angle_deg about its center (positive = clockwise on screen) and
/// centered at the box center shifted by the draw's offsets.
Placement placement_for(int patch_height, int patch_width, const BoundingBox& box,
                        int image_height, int image_width, const BoxDraw& draw,
                        double patch_scale);

/// Returns (patch layer, mask), both image-sized.
std::pair<Image, Image> place_patch(const Patch& p, const BoundingBox& box, int image_height,
                                    int image_width, const BoxDraw& draw, double patch_scale);

/// clamp(contrast * img + brightness + noise, 0, 1)
Image lighting_transform(const Image& img, const RandomDraw& draw);

/// Intermediate state of apply_patch needed for the backward pass.
struct ApplyTrace {
  struct Box {
    std::vector<double> blur_kernel;
    SampleMap tps;
    bool tps_enabled = false;
    Placement placement;
  };
  int patch_height = 0;
  int patch_width = 0;
  std::vector<Box> boxes;  ///< in compositing order
  Image pre_lighting;
  double contrast = 1.0;
  bool lighting = false;
};

LabeledImage apply_patch(const Patch& p, const LabeledImage& sample, const TransformConfig& cfg,
                         const RandomDraw& draw, ApplyTrace* trace = nullptr);

/// Gradient w.r.t. patch pixels given the gradient w.r.t. apply_patch's image.
Image apply_patch_backward(const ApplyTrace& trace, const Image& grad_image);

/// Union of all placement masks recorded in a trace (1 channel).
Image union_mask(const ApplyTrace& trace, int image_height, int image_width);

}  // namespace mmpatch
