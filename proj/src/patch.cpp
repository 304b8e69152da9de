#include "mmpatch/patch.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "mmpatch/errors.hpp"
#include "mmpatch/image_io.hpp"
#include "mmpatch/rng.hpp"

namespace mmpatch {

Patch::Patch(Image pixels) : pixels_(std::move(pixels)) {
  if (pixels_.channels() != 3) throw ArgumentError("patch must have 3 channels");
  if (pixels_.height() < 2 || pixels_.width() < 2) {
    throw ArgumentError("patch must be at least 2x2");
  }
}

Patch Patch::filled(int height, int width, double value) {
  if (height < 2 || width < 2) throw ArgumentError("patch must be at least 2x2");
  return Patch(Image(height, width, 3, value));
}

bool Patch::in_unit_range() const noexcept {
  auto v = pixels_.values();
  return std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0 && x <= 1.0; });
}

InitMode parse_init_mode(const std::string& name) {
  if (name == "random-uniform") return InitMode::random_uniform;
  if (name == "gray") return InitMode::gray;
  if (name == "from-file") return InitMode::from_file;
  throw ArgumentError("unknown patch init mode: " + name);
}

const char* to_string(InitMode mode) {
  switch (mode) {
    case InitMode::random_uniform: return "random-uniform";
    case InitMode::gray: return "gray";
    case InitMode::from_file: return "from-file";
  }
  return "?";
}

Patch init_patch(int height, int width, InitMode mode, std::uint64_t seed,
                 const std::filesystem::path& file) {
  if (height < 2 || width < 2) throw ArgumentError("patch dimensions must be >= 2");
  switch (mode) {
    case InitMode::gray:
      return Patch::filled(height, width, 0.5);
    case InitMode::random_uniform: {
      Image img(height, width, 3);
      Rng rng(seed);
      for (double& v : img.values()) v = rng.uniform();
      return Patch(std::move(img));
    }
    case InitMode::from_file: {
      Image img = read_png(file);
      if (img.height() != height || img.width() != width) {
        throw InputError("patch file " + file.string() + " is " + std::to_string(img.height()) +
                         "x" + std::to_string(img.width()) + ", expected " +
                         std::to_string(height) + "x" + std::to_string(width));
      }
      return Patch(std::move(img));
    }
  }
  throw ArgumentError("bad init mode");
}

Patch clamp_patch(Patch p) {
  for (double& v : p.pixels().values()) v = std::clamp(v, 0.0, 1.0);
  return p;
}

PrintPalette::PrintPalette(std::vector<Color> colors) : colors_(std::move(colors)) {
  if (colors_.empty()) throw ArgumentError("palette must contain at least one color");
  std::set<Color> seen;
  for (const Color& c : colors_) {
    for (double ch : c) {
      if (!(ch >= 0.0 && ch <= 1.0)) throw ArgumentError("palette channel outside [0,1]");
    }
    if (!seen.insert(c).second) throw ArgumentError("duplicate palette color");
  }
}

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ArgumentError("loss weights must be >= 0");
}

namespace {

// Index of the nearest palette color and its squared distance.
std::pair<std::size_t, double> nearest(const double* px, const std::vector<Color>& colors) {
  std::size_t best = 0;
  double best_d2 = INFINITY;
  for (std::size_t k = 0; k < colors.size(); ++k) {
    const double dr = px[0] - colors[k][0];
    const double dg = px[1] - colors[k][1];
    const double db = px[2] - colors[k][2];
    const double d2 = dr * dr + dg * dg + db * db;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  return {best, best_d2};
}

}  // namespace

LossWithGrad nps_loss_with_grad(const Patch& p, const PrintPalette& palette) {
  const auto& colors = palette.colors();
  LossWithGrad out{0.0, Image(p.height(), p.width(), 3)};
  auto px = p.pixels().values();
  auto g = out.grad.values();
  for (std::size_t i = 0; i < px.size(); i += 3) {
    auto [k, d2] = nearest(&px[i], colors);
    const double d = std::sqrt(d2);
    out.value += d;
    if (d > 0.0) {
      for (int c = 0; c < 3; ++c) g[i + c] = (px[i + c] - colors[k][c]) / d;
    }
  }
  return out;
}

double nps_loss(const Patch& p, const PrintPalette& palette) {
  const auto& colors = palette.colors();
  auto px = p.pixels().values();
  double total = 0.0;
  for (std::size_t i = 0; i < px.size(); i += 3) total += std::sqrt(nearest(&px[i], colors).second);
  return total;
}

LossWithGrad smoothness_loss_with_grad(const Patch& p) {
  const Image& img = p.pixels();
  const int h = img.height();
  const int w = img.width();
  LossWithGrad out{0.0, Image(h, w, 3)};
  Image& g = out.grad;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = img.at(y, x, c);
        const double dy = y + 1 < h ? v - img.at(y + 1, x, c) : 0.0;
        const double dx = x + 1 < w ? v - img.at(y, x + 1, c) : 0.0;
        const double t = std::sqrt(dy * dy + dx * dx);
        out.value += t;
        if (t > 0.0) {
          g.at(y, x, c) += (dy + dx) / t;
          if (y + 1 < h) g.at(y + 1, x, c) -= dy / t;
          if (x + 1 < w) g.at(y, x + 1, c) -= dx / t;
        }
      }
    }
  }
  return out;
}

double smoothness_loss(const Patch& p) { return smoothness_loss_with_grad(p).value; }

double total_energy(double patch_energy, double nps, double smooth, const LossWeights& w) {
  // Neumaier summation: the result is the correctly rounded sum of the three terms.
  const double terms[] = {patch_energy, w.alpha * nps, w.beta * smooth};
  double s = 0.0;
  double comp = 0.0;
  for (double t : terms) {
    const double next = s + t;
    comp += std::abs(s) >= std::abs(t) ? (s - next) + t : (t - next) + s;
    s = next;
  }
  return s + comp;
}

}  // namespace mmpatch
