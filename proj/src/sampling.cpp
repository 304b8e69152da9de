#include "mmpatch/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "mmpatch/errors.hpp"

namespace mmpatch {

SampleMap::SampleMap(int out_height, int out_width, int src_height, int src_width)
    : out_h_(out_height), out_w_(out_width), src_h_(src_height), src_w_(src_width) {
  if (src_height < 1 || src_width < 1 || out_height < 0 || out_width < 0) {
    throw ArgumentError("invalid sample map dimensions");
  }
  taps_.resize(static_cast<std::size_t>(out_h_) * out_w_);
  valid_.assign(taps_.size(), 0);
}

void SampleMap::set_bilinear(int y, int x, double sy, double sx) {
  sy = std::clamp(sy, 0.0, static_cast<double>(src_h_ - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(src_w_ - 1));
  const int y0 = std::min(static_cast<int>(std::floor(sy)), src_h_ - 1);
  const int x0 = std::min(static_cast<int>(std::floor(sx)), src_w_ - 1);
  const int y1 = std::min(y0 + 1, src_h_ - 1);
  const int x1 = std::min(x0 + 1, src_w_ - 1);
  const double fy = sy - y0;
  const double fx = sx - x0;

  Taps& t = taps_[y * out_w_ + x];
  t.index = {y0 * src_w_ + x0, y0 * src_w_ + x1, y1 * src_w_ + x0, y1 * src_w_ + x1};
  t.weight = {(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx};
  valid_[y * out_w_ + x] = 1;
}

void SampleMap::set_invalid(int y, int x) {
  taps_[y * out_w_ + x] = Taps{};
  valid_[y * out_w_ + x] = 0;
}

Image SampleMap::apply(const Image& src) const {
  if (src.height() != src_h_ || src.width() != src_w_) {
    throw ArgumentError("sample map source shape mismatch");
  }
  const int ch = src.channels();
  Image out(out_h_, out_w_, ch);
  auto s = src.values();
  auto o = out.values();
  for (std::size_t p = 0; p < taps_.size(); ++p) {
    if (!valid_[p]) continue;
    const Taps& t = taps_[p];
    for (int c = 0; c < ch; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) {
        if (t.weight[k] != 0.0) acc += t.weight[k] * s[static_cast<std::size_t>(t.index[k]) * ch + c];
      }
      o[p * ch + c] = acc;
    }
  }
  return out;
}

Image SampleMap::apply_adjoint(const Image& grad_out) const {
  if (grad_out.height() != out_h_ || grad_out.width() != out_w_) {
    throw ArgumentError("sample map gradient shape mismatch");
  }
  const int ch = grad_out.channels();
  Image grad(src_h_, src_w_, ch);
  auto g = grad.values();
  auto go = grad_out.values();
  for (std::size_t p = 0; p < taps_.size(); ++p) {
    if (!valid_[p]) continue;
    const Taps& t = taps_[p];
    for (int k = 0; k < 4; ++k) {
      if (t.weight[k] == 0.0) continue;
      for (int c = 0; c < ch; ++c) {
        g[static_cast<std::size_t>(t.index[k]) * ch + c] += t.weight[k] * go[p * ch + c];
      }
    }
  }
  return grad;
}

SampleMap resize_map(int src_height, int src_width, int out_height, int out_width) {
  SampleMap map(out_height, out_width, src_height, src_width);
  const double sy = static_cast<double>(src_height) / out_height;
  const double sx = static_cast<double>(src_width) / out_width;
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      map.set_bilinear(y, x, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5);
    }
  }
  return map;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ArgumentError("sigma must be finite and >= 0");
  if (sigma == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

namespace {

// One 1-D pass. `vertical` selects the axis; `adjoint` scatters instead of gathers.
Image blur_pass(const Image& img, const std::vector<double>& kernel, bool vertical, bool adjoint) {
  const int h = img.height();
  const int w = img.width();
  const int ch = img.channels();
  const int radius = static_cast<int>(kernel.size() / 2);
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = -radius; k <= radius; ++k) {
        const double wk = kernel[k + radius];
        const int sy = vertical ? reflect_index(y + k, h) : y;
        const int sx = vertical ? x : reflect_index(x + k, w);
        for (int c = 0; c < ch; ++c) {
          if (adjoint) {
            out.at(sy, sx, c) += wk * img.at(y, x, c);
          } else {
            out.at(y, x, c) += wk * img.at(sy, sx, c);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

Image separable_blur(const Image& img, const std::vector<double>& kernel) {
  if (kernel.size() == 1 && kernel[0] == 1.0) return img;
  return blur_pass(blur_pass(img, kernel, false, false), kernel, true, false);
}

Image separable_blur_adjoint(const Image& grad_out, const std::vector<double>& kernel) {
  if (kernel.size() == 1 && kernel[0] == 1.0) return grad_out;
  return blur_pass(blur_pass(grad_out, kernel, true, true), kernel, false, true);
}

}  // namespace mmpatch
