#pragma once

// Shared synthetic data for unit and acceptance tests.

#include <cmath>
#include <vector>

#include "mmpatch/ensemble.hpp"
#include "mmpatch/patch.hpp"
#include "mmpatch/rng.hpp"
#include "mmpatch/toy_detector.hpp"
#include "mmpatch/transforms.hpp"

namespace fixtures {

using namespace mmpatch;

/// Graded background with one upright, roughly centered "person" (torso
/// block and a lighter head) per image, like cropped pedestrian images.
inline std::vector<LabeledImage> synthetic_people(int count, std::uint64_t seed, int size = 64) {
  std::vector<LabeledImage> out;
  for (int n = 0; n < count; ++n) {
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(n)}));
    Image img(size, size, 3);
    const double bg[3] = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    const double gy = rng.uniform(-0.3, 0.3);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c)
          img.at(y, x, c) = std::clamp(bg[c] + gy * (y / double(size) - 0.5), 0.0, 1.0);

    BoundingBox box;
    box.class_id = 0;
    box.h = rng.uniform(0.75, 0.9);
    box.w = 0.45 * box.h;
    box.cx = 0.5 + rng.uniform(-0.03, 0.03);
    box.cy = 0.5 + rng.uniform(-0.03, 0.03);
    const double body[3] = {rng.uniform(0.0, 0.4), rng.uniform(0.0, 0.4), rng.uniform(0.3, 0.7)};
    const int x0 = int((box.cx - box.w / 2) * size), x1 = int((box.cx + box.w / 2) * size);
    const int y0 = int((box.cy - box.h / 2) * size), y1 = int((box.cy + box.h / 2) * size);
    const int head = y0 + (y1 - y0) / 4;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        const bool in_head = y < head;
        if (in_head && (x < x0 + (x1 - x0) / 4 || x >= x1 - (x1 - x0) / 4)) continue;
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = in_head ? 0.85 - 0.15 * c : body[c];
      }
    out.push_back({std::move(img), {box}});
  }
  return out;
}

/// 27 colors: the 3x3x3 lattice {0.1, 0.5, 0.9}^3.
inline PrintPalette lattice_palette() {
  std::vector<Color> colors;
  for (double r : {0.1, 0.5, 0.9})
    for (double g : {0.1, 0.5, 0.9})
      for (double b : {0.1, 0.5, 0.9}) colors.push_back({r, g, b});
  return PrintPalette(colors);
}

inline AdapterSpec toy_spec(const std::string& name, std::uint64_t seed, double person_gain) {
  AdapterSpec s;
  s.name = name;
  s.kind = DetectorKind::toy;
  s.seed = seed;
  s.person_gain = person_gain;
  return s;
}

}  // namespace fixtures
