#include "mmpatch/grad_cam.hpp"

#include <algorithm>
#include <cmath>

#include "mmpatch/errors.hpp"
#include "mmpatch/sampling.hpp"

namespace mmpatch {

Heatmap grad_cam(const CamModel& model, const Image& image, const CamTarget& target,
                 const std::string& layer) {
  const auto layers = model.cam_layers();
  if (std::find(layers.begin(), layers.end(), layer) == layers.end()) {
    throw ArgumentError("unknown layer: " + layer);
  }
  const LayerProbe probe = model.probe(image, target, layer);
  const Image& a = probe.activations;
  const Image& g = probe.gradient;
  if (!a.same_shape(g)) throw ArgumentError("activation/gradient shape mismatch");

  const int h = a.height();
  const int w = a.width();
  const int k = a.channels();
  std::vector<double> alpha(k, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < k; ++c) alpha[c] += g.at(y, x, c);
    }
  }
  for (double& v : alpha) v /= static_cast<double>(h) * w;

  Image cam(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int c = 0; c < k; ++c) acc += alpha[c] * a.at(y, x, c);
      cam.at(y, x) = std::max(acc, 0.0);
    }
  }

  Image up = (h == image.height() && w == image.width())
                 ? std::move(cam)
                 : resize_map(h, w, image.height(), image.width()).apply(cam);
  const double peak = max_value(up);
  if (peak > 0.0) {
    for (double& v : up.values()) v = std::clamp(v / peak, 0.0, 1.0);
  } else {
    up.fill(0.0);
  }
  return Heatmap{std::move(up)};
}

LinearCamModel::LinearCamModel(std::vector<double> channel_weights)
    : weights_(std::move(channel_weights)) {
  if (weights_.empty()) throw ArgumentError("linear CAM model needs channel weights");
}

double LinearCamModel::score(const Image& image) const {
  if (image.channels() != static_cast<int>(weights_.size())) {
    throw ArgumentError("channel count mismatch");
  }
  double s = 0.0;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) s += weights_[c] * image.at(y, x, c);
    }
  }
  return s / (static_cast<double>(image.height()) * image.width());
}

LayerProbe LinearCamModel::probe(const Image& image, const CamTarget&,
                                 const std::string& layer) const {
  if (layer != "input") throw ArgumentError("unknown layer: " + layer);
  if (image.channels() != static_cast<int>(weights_.size())) {
    throw ArgumentError("channel count mismatch");
  }
  LayerProbe p{image, Image(image.height(), image.width(), image.channels())};
  const double inv_area = 1.0 / (static_cast<double>(image.height()) * image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) p.gradient.at(y, x, c) = weights_[c] * inv_area;
    }
  }
  return p;
}

Image colorize(const Heatmap& h) {
  Image out(h.height(), h.width(), 3);
  for (int y = 0; y < h.height(); ++y) {
    for (int x = 0; x < h.width(); ++x) {
      const double v = std::clamp(h.at(y, x), 0.0, 1.0);
      out.at(y, x, 0) = std::clamp(1.5 - std::abs(4.0 * v - 3.0), 0.0, 1.0);
      out.at(y, x, 1) = std::clamp(1.5 - std::abs(4.0 * v - 2.0), 0.0, 1.0);
      out.at(y, x, 2) = std::clamp(1.5 - std::abs(4.0 * v - 1.0), 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace mmpatch
