#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mmpatch/detectors.hpp"
#include "mmpatch/patch.hpp"
#include "mmpatch/transforms.hpp"

namespace mmpatch {

/// A point on the probability simplex: entries in [0, 1] summing to 1
/// (within 1e-9).
class EnsembleWeights {
 public:
  explicit EnsembleWeights(std::vector<double> w);
  static EnsembleWeights uniform(std::size_t k);

  const std::vector<double>& values() const noexcept { return w_; }
  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }

  bool operator==(const EnsembleWeights&) const = default;

 private:
  std::vector<double> w_;
};

/// Euclidean projection onto the probability simplex (sort-and-threshold).
EnsembleWeights simplex_project(std::span<const double> v);

/// gamma/2 * ||w - 1/K||^2
double regularizer(const EnsembleWeights& w, double gamma);

/// One projected ascent step on  sum_i w_i L_i - gamma/2 ||w - 1/K||^2 :
/// proj(w + nu * (L - gamma * (w - 1/K))).
EnsembleWeights inner_max_step(const EnsembleWeights& w, std::span<const double> losses,
                               double nu, double gamma);

/// Adam moments for the patch.
struct AdamState {
  double lr = 0.03;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Image m;
  Image v;
};

/// Adam update of the patch followed by clamp_patch.
Patch outer_min_step(Patch p, const Image& grad, AdamState& state);

enum class EnsembleMode { dynamic, average, fixed };

EnsembleMode parse_ensemble_mode(const std::string& name);
const char* to_string(EnsembleMode mode);

struct TrainConfig {
  int epochs = 1;
  int batch_size = 8;
  long max_steps = 0;  ///< 0: no cap beyond epochs
  double patch_lr = 0.03;
  double nu = 0.78;
  double gamma = 0.1;
  double mu = 0.4;
  LossWeights loss_weights;
  EnsembleMode mode = EnsembleMode::dynamic;
  std::vector<double> fixed_weights;  ///< used in fixed mode
  std::uint64_t seed = 0;
  int patch_height = 300;
  int patch_width = 300;
  InitMode init = InitMode::random_uniform;
  std::filesystem::path init_file;
  int eot_samples = 1;
  bool shuffle = true;

  void validate() const;
};

struct TrainLogRow {
  long epoch = 0;
  long step = 0;
  std::vector<double> model_loss;  ///< L_obj per adapter at the pre-update patch
  std::vector<double> weights;     ///< ensemble weights used for this step
  double nps = 0.0;
  double smooth = 0.0;
  double total = 0.0;
};

/// Per-model objective energies, the combined attack loss, and optionally
/// its gradient w.r.t. the patch, for one batch of samples and draws.
struct AttackEvaluation {
  std::vector<double> model_loss;
  std::vector<std::size_t> active;  ///< candidates above mu, summed over the batch
  double combined = 0.0;
  double nps = 0.0;
  double smooth = 0.0;
  double total = 0.0;
  Image grad;  ///< empty unless requested
};

using AdapterList = std::span<const DetectorAdapter* const>;

/// L_obj^i is the mean over the (sample, draw) pairs of obj_energy.
/// `samples` and `draws` are parallel. Adversarial images are bilinearly
/// resized to each adapter's input size when they differ.
AttackEvaluation evaluate_attack(const Patch& p, std::span<const LabeledImage> samples,
                                 std::span<const RandomDraw> draws, AdapterList adapters,
                                 const EnsembleWeights& w, const TrainConfig& cfg,
                                 const TransformConfig& tcfg, const PrintPalette& palette,
                                 bool with_grad);

struct TrainResult {
  Patch patch;
  EnsembleWeights weights;
  std::vector<TrainLogRow> log;
};

/// Called after every step with the logged row, the updated patch and the
/// weights that the next step will use.
using StepCallback = std::function<void(const TrainLogRow&, const Patch&, const EnsembleWeights&)>;

/// Alternating min-max training. Throws TrainingError on adapter failure or
/// a non-finite loss (flagged as divergence).
TrainResult train(std::span<const LabeledImage> dataset, AdapterList adapters,
                  const TrainConfig& cfg, const TransformConfig& tcfg,
                  const PrintPalette& palette, const StepCallback& on_step = {});

/// Header: epoch,step,model_0_loss,...,w_0,...,nps,smooth,total
void write_train_log_csv(std::ostream& os, std::span<const TrainLogRow> log, std::size_t models);

}  // namespace mmpatch
