#include "mmpatch/detectors.hpp"

#include "mmpatch/errors.hpp"
#include "mmpatch/toy_detector.hpp"

namespace mmpatch {

DetectorKind parse_detector_kind(const std::string& name) {
  if (name == "one-stage") return DetectorKind::one_stage;
  if (name == "two-stage") return DetectorKind::two_stage;
  if (name == "toy") return DetectorKind::toy;
  throw ArgumentError("unknown detector kind: " + name);
}

const char* to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::one_stage: return "one-stage";
    case DetectorKind::two_stage: return "two-stage";
    case DetectorKind::toy: return "toy";
  }
  return "?";
}

std::vector<std::vector<Candidate>> DetectorAdapter::forward(std::span<const Image> batch) const {
  std::vector<std::vector<Candidate>> out;
  out.reserve(batch.size());
  for (const Image& img : batch) out.push_back(forward(img));
  return out;
}

double person_confidence(const Candidate& c, DetectorKind kind, int person_class) {
  if (person_class < 0 || static_cast<std::size_t>(person_class) >= c.class_scores.size()) {
    throw ArgumentError("person class index outside candidate class scores");
  }
  if (kind == DetectorKind::two_stage) return c.class_scores[person_class];
  return c.objectness * c.class_scores[person_class];
}

double obj_energy(std::span<const Candidate> candidates, double mu, DetectorKind kind,
                  int person_class) {
  double total = 0.0;
  for (const Candidate& c : candidates) {
    const double s = person_confidence(c, kind, person_class);
    if (s > mu) total += s;
  }
  return total;
}

ObjEnergy obj_energy_with_grad(std::span<const Candidate> candidates, double mu,
                               DetectorKind kind, int person_class) {
  ObjEnergy out;
  out.grad.resize(candidates.size());
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const Candidate& c = candidates[j];
    CandidateGrad& g = out.grad[j];
    g.class_scores.assign(c.class_scores.size(), 0.0);
    const double s = person_confidence(c, kind, person_class);
    if (!(s > mu)) continue;
    out.value += s;
    ++out.active;
    if (kind == DetectorKind::two_stage) {
      g.class_scores[person_class] = 1.0;
    } else {
      g.objectness = c.class_scores[person_class];
      g.class_scores[person_class] = c.objectness;
    }
  }
  return out;
}

DetectorRegistry::DetectorRegistry() {
  factories_[DetectorKind::toy] = [](const AdapterSpec& spec) -> std::unique_ptr<DetectorAdapter> {
    return std::make_unique<ToyDetector>(ToyDetectorSpec::from(spec));
  };
}

DetectorRegistry& DetectorRegistry::instance() {
  static DetectorRegistry registry;
  return registry;
}

void DetectorRegistry::register_factory(DetectorKind kind, Factory factory) {
  factories_[kind] = std::move(factory);
}

bool DetectorRegistry::has(DetectorKind kind) const { return factories_.count(kind) != 0; }

std::unique_ptr<DetectorAdapter> DetectorRegistry::create(const AdapterSpec& spec) const {
  auto it = factories_.find(spec.kind);
  if (it == factories_.end()) {
    throw ArgumentError("no detector backend registered for kind '" +
                        std::string(to_string(spec.kind)) + "' (adapter " + spec.name + ")");
  }
  return it->second(spec);
}

}  // namespace mmpatch
