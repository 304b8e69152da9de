#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmpatch/image.hpp"
#include "mmpatch/transforms.hpp"

namespace mmpatch {

enum class DetectorKind { one_stage, two_stage, toy };

DetectorKind parse_detector_kind(const std::string& name);
const char* to_string(DetectorKind kind);

/// One raw (pre-NMS) detector output.
struct Candidate {
  BoundingBox box;
  double objectness = 0.0;
  std::vector<double> class_scores;
};

/// Gradient of a scalar w.r.t. one candidate's scores.
struct CandidateGrad {
  double objectness = 0.0;
  std::vector<double> class_scores;
};

struct DetectorInfo {
  std::string name;
  DetectorKind kind = DetectorKind::toy;
  int person_class = 0;
  int num_classes = 0;
  int input_height = 0;
  int input_width = 0;
};

/// Differentiable detector interface. Implementations are deterministic
/// (evaluation mode) and need not be safe for concurrent calls.
class DetectorAdapter {
 public:
  virtual ~DetectorAdapter() = default;

  virtual const DetectorInfo& info() const = 0;

  /// All candidates before NMS. Throws ArgumentError unless the image is
  /// input_height x input_width x 3.
  virtual std::vector<Candidate> forward(const Image& image) const = 0;

  /// Vector-Jacobian product: gradient w.r.t. the input image of
  /// sum_j <grads[j], scores_j>. `grads` is parallel to forward(image).
  virtual Image backward(const Image& image, std::span<const CandidateGrad> grads) const = 0;

  std::vector<std::vector<Candidate>> forward(std::span<const Image> batch) const;
};

/// one-stage/toy: objectness * class_scores[person]; two-stage: the
/// proposal's person score class_scores[person].
double person_confidence(const Candidate& c, DetectorKind kind, int person_class);

/// Sum of person confidences strictly above mu.
double obj_energy(std::span<const Candidate> candidates, double mu, DetectorKind kind,
                  int person_class);

struct ObjEnergy {
  double value = 0.0;
  std::size_t active = 0;
  std::vector<CandidateGrad> grad;
};

ObjEnergy obj_energy_with_grad(std::span<const Candidate> candidates, double mu,
                               DetectorKind kind, int person_class);

/// Adapter description as it appears in a run configuration.
struct AdapterSpec {
  std::string name;
  DetectorKind kind = DetectorKind::toy;
  std::string weights;  ///< path; unused by the toy kind
  int input_height = 64;
  int input_width = 64;
  int person_class = 0;
  // toy parameters
  std::uint64_t seed = 0;
  int grid = 4;
  int classes = 3;
  int channels = 8;
  double person_gain = 1.0;
};

/// Factory registry keyed by detector kind. The toy kind is built in;
/// real one-stage/two-stage backends are registered by plugins.
class DetectorRegistry {
 public:
  using Factory = std::function<std::unique_ptr<DetectorAdapter>(const AdapterSpec&)>;

  static DetectorRegistry& instance();

  void register_factory(DetectorKind kind, Factory factory);
  bool has(DetectorKind kind) const;
  /// Throws ArgumentError if no factory is registered for spec.kind.
  std::unique_ptr<DetectorAdapter> create(const AdapterSpec& spec) const;

 private:
  DetectorRegistry();
  std::map<DetectorKind, Factory> factories_;
};

}  // namespace mmpatch
