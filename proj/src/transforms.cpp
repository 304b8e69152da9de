#include "mmpatch/transforms.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mmpatch/errors.hpp"
#include "mmpatch/rng.hpp"

namespace mmpatch {

std::string box_violation(const BoundingBox& b, double tol) {
  std::ostringstream msg;
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(b.cx) || !finite(b.cy) || !finite(b.w) || !finite(b.h)) return "non-finite coordinate";
  if (b.cx < 0.0 || b.cx > 1.0) return "cx outside [0,1]";
  if (b.cy < 0.0 || b.cy > 1.0) return "cy outside [0,1]";
  if (!(b.w > 0.0) || b.w > 1.0) return "w outside (0,1]";
  if (!(b.h > 0.0) || b.h > 1.0) return "h outside (0,1]";
  if (b.cx - b.w / 2 < -tol || b.cx + b.w / 2 > 1.0 + tol) return "box extends past left/right edge";
  if (b.cy - b.h / 2 < -tol || b.cy + b.h / 2 > 1.0 + tol) return "box extends past top/bottom edge";
  return {};
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2);
  const double iy = std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

void TransformConfig::validate() const {
  const double reals[] = {rotation_range_deg, translate_range, patch_scale, tps_sigma,
                          brightness_range, contrast_min, contrast_max, noise_std, blur_gain};
  for (double v : reals) {
    if (!std::isfinite(v)) throw ArgumentError("transform config values must be finite");
  }
  if (!(patch_scale > 0.0 && patch_scale <= 1.0)) throw ArgumentError("patch_scale must be in (0,1]");
  if (tps_grid < 2) throw ArgumentError("tps_grid must be >= 2");
  if (tps_sigma < 0.0 || noise_std < 0.0 || blur_gain < 0.0) {
    throw ArgumentError("tps_sigma, noise_std and blur_gain must be >= 0");
  }
  if (contrast_min > contrast_max) throw ArgumentError("contrast_min > contrast_max");
}

TpsOffsets TpsOffsets::zero(int side) {
  return TpsOffsets{side, std::vector<std::array<double, 2>>(static_cast<std::size_t>(side) * side)};
}

RandomDraw RandomDraw::identity(std::size_t box_count) {
  RandomDraw d;
  d.boxes.resize(box_count);
  return d;
}

RandomDraw draw_transforms(const TransformConfig& cfg, std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t image_index, const LabeledImage& sample) {
  // Tags keep the lighting stream and the per-box streams disjoint.
  constexpr std::uint64_t kLightingTag = 0x4C49474854ULL;
  constexpr std::uint64_t kBoxTag = 0x424F58ULL;

  RandomDraw d;
  if (cfg.enable_lighting) {
    Rng rng(derive_seed({seed, stream, image_index, kLightingTag}));
    d.contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);
    d.brightness = rng.uniform(-cfg.brightness_range, cfg.brightness_range);
    if (cfg.noise_std > 0.0) {
      d.noise = Image(sample.image.height(), sample.image.width(), sample.image.channels());
      for (double& v : d.noise.values()) v = cfg.noise_std * rng.normal();
    }
  }

  d.boxes.resize(sample.boxes.size());
  for (std::size_t k = 0; k < sample.boxes.size(); ++k) {
    Rng rng(derive_seed({seed, stream, image_index, kBoxTag, k}));
    BoxDraw& b = d.boxes[k];
    if (cfg.enable_perspective) {
      b.angle_deg = rng.uniform(-cfg.rotation_range_deg, cfg.rotation_range_deg);
      b.shift_x = rng.uniform(-cfg.translate_range, cfg.translate_range);
      b.shift_y = rng.uniform(-cfg.translate_range, cfg.translate_range);
    }
    if (cfg.enable_tps) {
      b.tps = TpsOffsets::zero(cfg.tps_grid);
      for (auto& o : b.tps.offsets) {
        const double r = cfg.tps_sigma * rng.uniform();
        const double a = 2.0 * std::numbers::pi * rng.uniform();
        o = {r * std::cos(a), r * std::sin(a)};
      }
    }
  }
  return d;
}

namespace {

double tps_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

}  // namespace

SampleMap tps_sampling_map(int height, int width, const TpsOffsets& t) {
  if (t.side < 2 || t.offsets.size() != static_cast<std::size_t>(t.side) * t.side) {
    throw ArgumentError("TPS offsets must form a side x side grid with side >= 2");
  }
  for (const auto& o : t.offsets) {
    if (!std::isfinite(o[0]) || !std::isfinite(o[1])) throw ArgumentError("non-finite TPS offset");
  }

  // Fit a displacement field d with d(target_k) = source_k - target_k; the
  // output at x then reads the input at x + d(x).
  const int n = t.side * t.side;
  Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(n + 3, n + 3);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
  std::vector<std::array<double, 2>> targets(n);
  for (int i = 0; i < t.side; ++i) {
    for (int j = 0; j < t.side; ++j) {
      const int k = i * t.side + j;
      const double gx = static_cast<double>(j) / (t.side - 1);
      const double gy = static_cast<double>(i) / (t.side - 1);
      targets[k] = {gx + t.offsets[k][0], gy + t.offsets[k][1]};
      rhs(k, 0) = -t.offsets[k][0];
      rhs(k, 1) = -t.offsets[k][1];
    }
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const double dx = targets[a][0] - targets[b][0];
      const double dy = targets[a][1] - targets[b][1];
      sys(a, b) = tps_kernel(dx * dx + dy * dy);
    }
    sys(a, n) = sys(n, a) = 1.0;
    sys(a, n + 1) = sys(n + 1, a) = targets[a][0];
    sys(a, n + 2) = sys(n + 2, a) = targets[a][1];
  }
  const Eigen::MatrixXd coef = sys.fullPivLu().solve(rhs);

  SampleMap map(height, width, height, width);
  const double sx = width > 1 ? width - 1.0 : 1.0;
  const double sy = height > 1 ? height - 1.0 : 1.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double px = x / sx;
      const double py = y / sy;
      double dx = coef(n, 0) + coef(n + 1, 0) * px + coef(n + 2, 0) * py;
      double dy = coef(n, 1) + coef(n + 1, 1) * px + coef(n + 2, 1) * py;
      for (int k = 0; k < n; ++k) {
        const double ex = px - targets[k][0];
        const double ey = py - targets[k][1];
        const double u = tps_kernel(ex * ex + ey * ey);
        dx += coef(k, 0) * u;
        dy += coef(k, 1) * u;
      }
      map.set_bilinear(y, x, y + dy * sy, x + dx * sx);
    }
  }
  return map;
}

Patch tps_warp(const Patch& p, const TpsOffsets& offsets) {
  return Patch(tps_sampling_map(p.height(), p.width(), offsets).apply(p.pixels()));
}

double distance_blur_sigma(double box_height_frac, double blur_gain) {
  if (!(box_height_frac > 0.0)) throw ArgumentError("box height fraction must be > 0");
  if (box_height_frac >= 1.0) return 0.0;
  return blur_gain * (1.0 / box_height_frac - 1.0);
}

Patch distance_blur(const Patch& p, double box_height_frac, double blur_gain) {
  const auto kernel = gaussian_kernel(distance_blur_sigma(box_height_frac, blur_gain));
  return Patch(separable_blur(p.pixels(), kernel));
}

Placement placement_for(int patch_height, int patch_width, const BoundingBox& box,
                        int image_height, int image_width, const BoxDraw& draw,
                        double patch_scale) {
  Placement out{SampleMap(image_height, image_width, patch_height, patch_width),
                Image(image_height, image_width, 1), true};
  const double box_w_px = box.w * image_width;
  const double box_h_px = box.h * image_height;
  const double sw = patch_scale * box_h_px;
  const double sh = sw * patch_height / patch_width;
  if (!(box_w_px > 0.0) || !(box_h_px > 0.0) || !(sw > 0.0)) return out;

  const double cx = box.cx * image_width + draw.shift_x * box_w_px;
  const double cy = box.cy * image_height + draw.shift_y * box_h_px;
  const double theta = draw.angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double radius = 0.5 * std::hypot(sw, sh);

  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - radius)) - 1);
  const int x_hi = std::min(image_width - 1, static_cast<int>(std::ceil(cx + radius)) + 1);
  const int y_lo = std::max(0, static_cast<int>(std::floor(cy - radius)) - 1);
  const int y_hi = std::min(image_height - 1, static_cast<int>(std::ceil(cy + radius)) + 1);

  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      // Inverse rotation back into the patch frame.
      const double lx = cs * dx + sn * dy;
      const double ly = -sn * dx + cs * dy;
      const double u = lx * patch_width / sw + patch_width / 2.0;
      const double v = ly * patch_height / sh + patch_height / 2.0;
      if (u < 0.0 || u >= patch_width || v < 0.0 || v >= patch_height) continue;
      out.sampler.set_bilinear(y, x, v - 0.5, u - 0.5);
      out.mask.at(y, x) = 1.0;
      out.empty = false;
    }
  }
  return out;
}

std::pair<Image, Image> place_patch(const Patch& p, const BoundingBox& box, int image_height,
                                    int image_width, const BoxDraw& draw, double patch_scale) {
  Placement pl = placement_for(p.height(), p.width(), box, image_height, image_width, draw, patch_scale);
  return {pl.sampler.apply(p.pixels()), std::move(pl.mask)};
}

Image lighting_transform(const Image& img, const RandomDraw& draw) {
  if (!draw.noise.empty() && !draw.noise.same_shape(img)) {
    throw ArgumentError("noise field shape does not match image");
  }
  Image out = img;
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double noise = draw.noise.empty() ? 0.0 : draw.noise.values()[i];
    o[i] = std::clamp(draw.contrast * o[i] + draw.brightness + noise, 0.0, 1.0);
  }
  return out;
}

LabeledImage apply_patch(const Patch& p, const LabeledImage& sample, const TransformConfig& cfg,
                         const RandomDraw& draw, ApplyTrace* trace) {
  if (draw.boxes.size() != sample.boxes.size()) {
    throw ArgumentError("random draw does not match the sample's box count");
  }
  LabeledImage out = sample;
  Image& img = out.image;
  const int ih = img.height();
  const int iw = img.width();
  if (trace) {
    *trace = ApplyTrace{};
    trace->patch_height = p.height();
    trace->patch_width = p.width();
  }

  for (std::size_t k = 0; k < sample.boxes.size(); ++k) {
    const BoundingBox& box = sample.boxes[k];
    if (box.class_id != cfg.person_class) continue;
    const BoxDraw& bd = draw.boxes[k];

    ApplyTrace::Box bt;
    Image warped;
    if (cfg.enable_tps && bd.tps.side >= 2) {
      bt.tps = tps_sampling_map(p.height(), p.width(), bd.tps);
      bt.tps_enabled = true;
      warped = bt.tps.apply(p.pixels());
    } else {
      warped = p.pixels();
    }

    const double sigma = cfg.enable_blur ? distance_blur_sigma(box.h, cfg.blur_gain) : 0.0;
    bt.blur_kernel = gaussian_kernel(sigma);
    const Image blurred = separable_blur(warped, bt.blur_kernel);

    const BoxDraw geometry = cfg.enable_perspective ? bd : BoxDraw{};
    bt.placement = placement_for(p.height(), p.width(), box, ih, iw, geometry, cfg.patch_scale);
    if (bt.placement.empty) continue;

    const Image layer = bt.placement.sampler.apply(blurred);
    const Image& mask = bt.placement.mask;
    for (int y = 0; y < ih; ++y) {
      for (int x = 0; x < iw; ++x) {
        if (mask.at(y, x) == 0.0) continue;
        for (int c = 0; c < img.channels(); ++c) img.at(y, x, c) = layer.at(y, x, c);
      }
    }
    if (trace) trace->boxes.push_back(std::move(bt));
  }

  if (cfg.enable_lighting) {
    if (trace) {
      trace->pre_lighting = img;
      trace->contrast = draw.contrast;
      trace->lighting = true;
    }
    img = lighting_transform(img, draw);
    if (trace) {
      // Keep only the local slope: contrast where the clamp is inactive, else 0.
      Image& slope = trace->pre_lighting;
      auto s = slope.values();
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double noise = draw.noise.empty() ? 0.0 : draw.noise.values()[i];
        const double v = draw.contrast * s[i] + draw.brightness + noise;
        s[i] = (v >= 0.0 && v <= 1.0) ? draw.contrast : 0.0;
      }
    }
  }
  return out;
}

Image apply_patch_backward(const ApplyTrace& trace, const Image& grad_image) {
  Image g = grad_image;
  if (trace.lighting) {
    auto gv = g.values();
    auto slope = trace.pre_lighting.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= slope[i];
  }

  Image grad_patch(trace.patch_height, trace.patch_width, 3);
  for (auto it = trace.boxes.rbegin(); it != trace.boxes.rend(); ++it) {
    const Image& mask = it->placement.mask;
    Image g_layer(g.height(), g.width(), g.channels());
    for (int y = 0; y < g.height(); ++y) {
      for (int x = 0; x < g.width(); ++x) {
        if (mask.at(y, x) == 0.0) continue;
        for (int c = 0; c < g.channels(); ++c) {
          g_layer.at(y, x, c) = g.at(y, x, c);
          g.at(y, x, c) = 0.0;
        }
      }
    }
    const Image g_blurred = it->placement.sampler.apply_adjoint(g_layer);
    const Image g_warped = separable_blur_adjoint(g_blurred, it->blur_kernel);
    grad_patch += it->tps_enabled ? it->tps.apply_adjoint(g_warped) : g_warped;
  }
  return grad_patch;
}

Image union_mask(const ApplyTrace& trace, int image_height, int image_width) {
  Image m(image_height, image_width, 1);
  for (const auto& b : trace.boxes) {
    auto src = b.placement.mask.values();
    auto dst = m.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
  }
  return m;
}

}  // namespace mmpatch
