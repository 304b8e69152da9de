#pragma once

#include <string>
#include <vector>

#include "mmpatch/image.hpp"
#include "mmpatch/transforms.hpp"

namespace mmpatch {

/// Which scalar Grad-CAM explains: objectness * class_scores[class_index]
/// of one candidate, or the sum over all candidates when candidate < 0.
struct CamTarget {
  int class_index = 0;
  int candidate = -1;
};

/// Activation maps A^k of a named layer and d(target)/dA^k, both h x w x K.
struct LayerProbe {
  Image activations;
  Image gradient;
};

/// A model that can expose a layer's activations and the gradient of a
/// target score with respect to them.
class CamModel {
 public:
  virtual ~CamModel() = default;
  virtual std::vector<std::string> cam_layers() const = 0;
  /// Throws ArgumentError for a layer name not in cam_layers().
  virtual LayerProbe probe(const Image& image, const CamTarget& target,
                           const std::string& layer) const = 0;
};

/// Single-channel map in [0, 1] with max 1 unless all zero.
struct Heatmap {
  Image values;

  int height() const { return values.height(); }
  int width() const { return values.width(); }
  double at(int y, int x) const { return values.at(y, x); }
};

/// ReLU(sum_k alpha_k A^k), alpha_k the spatial mean of dTarget/dA^k,
/// bilinearly upsampled to the image size and divided by its maximum.
Heatmap grad_cam(const CamModel& model, const Image& image, const CamTarget& target,
                 const std::string& layer);

/// Score = sum_{y,x,c} weights[c] * image(y,x,c) / (H*W): one linear layer
/// over the raw input. Its only CAM layer is "input".
class LinearCamModel : public CamModel {
 public:
  explicit LinearCamModel(std::vector<double> channel_weights);

  double score(const Image& image) const;
  std::vector<std::string> cam_layers() const override { return {"input"}; }
  LayerProbe probe(const Image& image, const CamTarget& target,
                   const std::string& layer) const override;

 private:
  std::vector<double> weights_;
};

/// Blue-to-red rendering of a heatmap for PNG export.
Image colorize(const Heatmap& h);

}  // namespace mmpatch
