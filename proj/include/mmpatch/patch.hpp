#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mmpatch/image.hpp"

namespace mmpatch {

/// The trainable adversarial patch: H x W x 3 intensities.
///
/// Values are expected in [0, 1]; the optimizer may push them outside
/// transiently, and clamp_patch() restores the range.
class Patch {
 public:
  /// Throws ArgumentError unless pixels is H x W x 3 with H, W >= 2.
  explicit Patch(Image pixels);

  static Patch filled(int height, int width, double value);

  int height() const noexcept { return pixels_.height(); }
  int width() const noexcept { return pixels_.width(); }
  const Image& pixels() const noexcept { return pixels_; }
  Image& pixels() noexcept { return pixels_; }

  bool in_unit_range() const noexcept;

  bool operator==(const Patch&) const = default;

 private:
  Image pixels_;
};

enum class InitMode { random_uniform, gray, from_file };

InitMode parse_init_mode(const std::string& name);
const char* to_string(InitMode mode);

/// random_uniform draws i.i.d. U[0,1) from Rng(seed) in HWC order.
/// from_file loads a PNG which must decode to exactly height x width.
Patch init_patch(int height, int width, InitMode mode, std::uint64_t seed,
                 const std::filesystem::path& file = {});

Patch clamp_patch(Patch p);

using Color = std::array<double, 3>;

/// Printable colors. Nonempty, no duplicates, every channel in [0, 1].
class PrintPalette {
 public:
  explicit PrintPalette(std::vector<Color> colors);

  const std::vector<Color>& colors() const noexcept { return colors_; }
  std::size_t size() const noexcept { return colors_.size(); }

 private:
  std::vector<Color> colors_;
};

/// Weights of the printability and smoothness terms in the total energy.
struct LossWeights {
  double alpha = 0.01;
  double beta = 0.165;

  void validate() const;
};

struct LossWithGrad {
  double value = 0.0;
  Image grad;
};

/// Sum over pixels of the Euclidean RGB distance to the nearest palette
/// color. Ties resolve to the earliest color in palette order.
double nps_loss(const Patch& p, const PrintPalette& palette);
LossWithGrad nps_loss_with_grad(const Patch& p, const PrintPalette& palette);

/// Per-channel sum of sqrt(dy^2 + dx^2) with forward differences; a
/// difference that would reach past the last row or column counts as 0.
double smoothness_loss(const Patch& p);
LossWithGrad smoothness_loss_with_grad(const Patch& p);

double total_energy(double patch_energy, double nps, double smooth, const LossWeights& w);

}  // namespace mmpatch
