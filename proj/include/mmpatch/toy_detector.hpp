#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmpatch/detectors.hpp"
#include "mmpatch/grad_cam.hpp"

namespace mmpatch {

struct ToyDetectorSpec {
  std::string name = "toy";
  std::uint64_t seed = 0;
  int grid = 4;
  int classes = 3;
  int channels = 8;
  int input_height = 64;
  int input_width = 64;
  int person_class = 0;
  /// Multiplies the content term of the person-class logit (the bias is
  /// left alone); > 1 makes the person score more sensitive to the input.
  double person_gain = 1.0;

  static ToyDetectorSpec from(const AdapterSpec& spec);
};

/// Desk-scale stand-in for a one-stage detector:
///
///   input -> conv3x3 (tanh) -> average pool to grid x grid -> 1x1 head
///
/// The head emits, per cell, sigmoid outputs
/// [tx, ty, tw, th, objectness, class_0 .. class_{C-1}], giving grid*grid
/// candidates with box center ((g + tx)/grid, ...) and size (tw, th).
/// Weights are drawn from the seed; everything is smooth, so gradients are
/// exact and finite-difference checkable.
class ToyDetector : public DetectorAdapter, public CamModel {
 public:
  explicit ToyDetector(ToyDetectorSpec spec);

  const DetectorInfo& info() const override { return info_; }
  using DetectorAdapter::forward;
  std::vector<Candidate> forward(const Image& image) const override;
  Image backward(const Image& image, std::span<const CandidateGrad> grads) const override;

  std::vector<std::string> cam_layers() const override { return {"conv1", "pool"}; }
  LayerProbe probe(const Image& image, const CamTarget& target,
                   const std::string& layer) const override;

  const ToyDetectorSpec& spec() const { return spec_; }

  /// Direct access for analytic tests. Conv weights are indexed
  /// [out][in][ky][kx]; head weights [output][channel].
  std::vector<double>& conv_weights() { return conv_w_; }
  std::vector<double>& conv_bias() { return conv_b_; }
  std::vector<double>& head_weights() { return head_w_; }
  std::vector<double>& head_bias() { return head_b_; }
  int head_outputs() const { return 5 + spec_.classes; }

 private:
  struct Trace {
    Image activations;           // H x W x channels, post-tanh
    std::vector<double> pooled;  // cell-major, grid*grid*channels
    std::vector<double> scores;  // cell-major, grid*grid*head_outputs
  };

  Trace run(const Image& image) const;
  std::vector<Candidate> decode(const Trace& t) const;
  double logit_gain(int output) const;
  // Gradient w.r.t. pooled features given gradients w.r.t. head outputs.
  std::vector<double> pooled_grad(const Trace& t, const std::vector<double>& score_grad) const;
  Image activation_grad(const std::vector<double>& dpooled) const;
  std::vector<double> target_score_grad(const Trace& t, const CamTarget& target) const;

  ToyDetectorSpec spec_;
  DetectorInfo info_;
  std::vector<double> conv_w_, conv_b_, head_w_, head_b_;
};

ToyDetector make_toy_detector(std::uint64_t seed, int grid, int classes);

}  // namespace mmpatch
