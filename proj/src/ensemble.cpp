#include "mmpatch/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>

#include "mmpatch/errors.hpp"
#include "mmpatch/rng.hpp"
#include "mmpatch/sampling.hpp"

namespace mmpatch {

EnsembleWeights::EnsembleWeights(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw ArgumentError("ensemble weights must be nonempty");
  double total = 0.0;
  for (double v : w_) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("ensemble weight outside [0,1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("ensemble weights must sum to 1");
}

EnsembleWeights EnsembleWeights::uniform(std::size_t k) {
  if (k == 0) throw ArgumentError("ensemble needs at least one model");
  return EnsembleWeights(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

EnsembleWeights simplex_project(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("cannot project an empty vector");
  for (double x : v) {
    if (!std::isfinite(x)) throw ArgumentError("simplex projection needs finite entries");
  }
  if (v.size() == 1) return EnsembleWeights({1.0});

  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double prefix = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    prefix += u[j];
    const double t = (prefix - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::clamp(v[i] - theta, 0.0, 1.0);
  return EnsembleWeights(std::move(w));
}

double regularizer(const EnsembleWeights& w, double gamma) {
  if (!(gamma >= 0.0)) throw ArgumentError("gamma must be >= 0");
  const double center = 1.0 / static_cast<double>(w.size());
  double sq = 0.0;
  for (double v : w.values()) sq += (v - center) * (v - center);
  return 0.5 * gamma * sq;
}

EnsembleWeights inner_max_step(const EnsembleWeights& w, std::span<const double> losses,
                               double nu, double gamma) {
  if (losses.size() != w.size()) throw ArgumentError("loss count does not match weight count");
  for (double l : losses) {
    if (!std::isfinite(l)) throw ArgumentError("losses must be finite");
  }
  const double center = 1.0 / static_cast<double>(w.size());
  std::vector<double> raw(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    raw[i] = w[i] + nu * (losses[i] - gamma * (w[i] - center));
  }
  return simplex_project(raw);
}

Patch outer_min_step(Patch p, const Image& grad, AdamState& s) {
  Image& px = p.pixels();
  if (!grad.same_shape(px)) throw ArgumentError("gradient shape does not match patch");
  if (s.m.empty()) {
    s.m = Image(px.height(), px.width(), px.channels());
    s.v = Image(px.height(), px.width(), px.channels());
  }
  ++s.step;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  auto pv = px.values();
  auto g = grad.values();
  auto m = s.m.values();
  auto v = s.v.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    pv[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
  }
  return clamp_patch(std::move(p));
}

EnsembleMode parse_ensemble_mode(const std::string& name) {
  if (name == "dynamic") return EnsembleMode::dynamic;
  if (name == "average") return EnsembleMode::average;
  if (name == "fixed") return EnsembleMode::fixed;
  throw ArgumentError("unknown ensemble mode: " + name);
}

const char* to_string(EnsembleMode mode) {
  switch (mode) {
    case EnsembleMode::dynamic: return "dynamic";
    case EnsembleMode::average: return "average";
    case EnsembleMode::fixed: return "fixed";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (max_steps < 0) throw ArgumentError("max_steps must be >= 0");
  if (!(nu > 0.0)) throw ArgumentError("nu must be > 0");
  if (!(gamma >= 0.0)) throw ArgumentError("gamma must be >= 0");
  if (!(mu >= 0.0 && mu <= 1.0)) throw ArgumentError("mu must be in [0,1]");
  if (!(patch_lr > 0.0)) throw ArgumentError("patch_lr must be > 0");
  if (patch_height < 2 || patch_width < 2) throw ArgumentError("patch must be at least 2x2");
  if (eot_samples < 1) throw ArgumentError("eot_samples must be >= 1");
  loss_weights.validate();
  if (mode == EnsembleMode::fixed) (void)EnsembleWeights(fixed_weights);
}

namespace {

const SampleMap& cached_resize(std::map<std::array<int, 4>, SampleMap>& cache, int sh, int sw,
                               int oh, int ow) {
  auto key = std::array<int, 4>{sh, sw, oh, ow};
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, resize_map(sh, sw, oh, ow)).first;
  return it->second;
}

}  // namespace

AttackEvaluation evaluate_attack(const Patch& p, std::span<const LabeledImage> samples,
                                 std::span<const RandomDraw> draws, AdapterList adapters,
                                 const EnsembleWeights& w, const TrainConfig& cfg,
                                 const TransformConfig& tcfg, const PrintPalette& palette,
                                 bool with_grad) {
  if (samples.size() != draws.size()) throw ArgumentError("samples and draws must be parallel");
  if (samples.empty()) throw ArgumentError("empty batch");
  if (adapters.size() != w.size()) throw ArgumentError("adapter count does not match weights");

  const std::size_t k = adapters.size();
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  AttackEvaluation out;
  out.model_loss.assign(k, 0.0);
  out.active.assign(k, 0);
  if (with_grad) out.grad = Image(p.height(), p.width(), 3);
  std::map<std::array<int, 4>, SampleMap> resize_cache;

  for (std::size_t n = 0; n < samples.size(); ++n) {
    ApplyTrace trace;
    const LabeledImage adv = apply_patch(p, samples[n], tcfg, draws[n], with_grad ? &trace : nullptr);
    const Image& img = adv.image;
    Image grad_img;
    if (with_grad) grad_img = Image(img.height(), img.width(), img.channels());

    for (std::size_t i = 0; i < k; ++i) {
      const DetectorAdapter& det = *adapters[i];
      const DetectorInfo& info = det.info();
      const bool resize = img.height() != info.input_height || img.width() != info.input_width;
      const SampleMap* rmap = resize ? &cached_resize(resize_cache, img.height(), img.width(),
                                                      info.input_height, info.input_width)
                                     : nullptr;
      const Image input = resize ? rmap->apply(img) : img;
      const auto cands = det.forward(input);
      ObjEnergy e = obj_energy_with_grad(cands, cfg.mu, info.kind, info.person_class);
      out.model_loss[i] += e.value * inv_n;
      out.active[i] += e.active;
      if (!with_grad || e.active == 0 || w[i] == 0.0) continue;

      const double scale = w[i] * inv_n;
      for (CandidateGrad& g : e.grad) {
        g.objectness *= scale;
        for (double& v : g.class_scores) v *= scale;
      }
      Image gi = det.backward(input, e.grad);
      grad_img += resize ? rmap->apply_adjoint(gi) : gi;
    }
    if (with_grad) out.grad += apply_patch_backward(trace, grad_img);
  }

  for (std::size_t i = 0; i < k; ++i) out.combined += w[i] * out.model_loss[i];

  const LossWeights& lw = cfg.loss_weights;
  if (with_grad) {
    LossWithGrad nps = nps_loss_with_grad(p, palette);
    LossWithGrad smooth = smoothness_loss_with_grad(p);
    out.nps = nps.value;
    out.smooth = smooth.value;
    nps.grad *= lw.alpha;
    smooth.grad *= lw.beta;
    out.grad += nps.grad;
    out.grad += smooth.grad;
  } else {
    out.nps = nps_loss(p, palette);
    out.smooth = smoothness_loss(p);
  }
  out.total = total_energy(out.combined, out.nps, out.smooth, lw);
  return out;
}

TrainResult train(std::span<const LabeledImage> dataset, AdapterList adapters,
                  const TrainConfig& cfg, const TransformConfig& tcfg,
                  const PrintPalette& palette, const StepCallback& on_step) {
  cfg.validate();
  tcfg.validate();
  if (adapters.empty()) throw ArgumentError("training needs at least one detector");
  if (dataset.empty()) throw ArgumentError("training needs a nonempty dataset");

  const std::size_t k = adapters.size();
  EnsembleWeights w = cfg.mode == EnsembleMode::fixed ? EnsembleWeights(cfg.fixed_weights)
                                                      : EnsembleWeights::uniform(k);
  if (w.size() != k) throw ArgumentError("fixed weights do not match the adapter count");

  Patch patch = init_patch(cfg.patch_height, cfg.patch_width, cfg.init,
                           derive_seed({cfg.seed, 0x7061746368ULL}), cfg.init_file);
  AdamState adam;
  adam.lr = cfg.patch_lr;

  TrainResult result{patch, w, {}};
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      // Fisher-Yates on our own stream; std::shuffle is not portable.
      Rng rng(derive_seed({cfg.seed, 0x73687566ULL, static_cast<std::uint64_t>(epoch)}));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);

      std::vector<LabeledImage> batch;
      std::vector<RandomDraw> draws;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        for (int e = 0; e < cfg.eot_samples; ++e) {
          const std::uint64_t stream = static_cast<std::uint64_t>(step) * cfg.eot_samples + e;
          batch.push_back(dataset[idx]);
          draws.push_back(draw_transforms(tcfg, cfg.seed, stream, idx, dataset[idx]));
        }
      }

      AttackEvaluation eval;
      try {
        eval = evaluate_attack(patch, batch, draws, adapters, w, cfg, tcfg, palette, true);
      } catch (const std::exception& ex) {
        throw TrainingError("step " + std::to_string(step) + ": " + ex.what(),
                            static_cast<std::size_t>(step), false);
      }
      if (!std::isfinite(eval.total)) {
        throw TrainingError("step " + std::to_string(step) + ": loss diverged (non-finite)",
                            static_cast<std::size_t>(step), true);
      }

      TrainLogRow row{epoch, step, eval.model_loss, w.values(), eval.nps, eval.smooth, eval.total};

      patch = outer_min_step(std::move(patch), eval.grad, adam);

      if (cfg.mode == EnsembleMode::dynamic) {
        // Inner maximization with the patch held at its updated value.
        AttackEvaluation after;
        try {
          after = evaluate_attack(patch, batch, draws, adapters, w, cfg, tcfg, palette, false);
        } catch (const std::exception& ex) {
          throw TrainingError("step " + std::to_string(step) + ": " + ex.what(),
                              static_cast<std::size_t>(step), false);
        }
        if (!std::isfinite(after.combined)) {
          throw TrainingError("step " + std::to_string(step) + ": loss diverged (non-finite)",
                              static_cast<std::size_t>(step), true);
        }
        w = inner_max_step(w, after.model_loss, cfg.nu, cfg.gamma);
      }

      result.log.push_back(row);
      if (on_step) on_step(result.log.back(), patch, w);
      ++step;
    }
    if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
  }

  result.patch = std::move(patch);
  result.weights = w;
  return result;
}

void write_train_log_csv(std::ostream& os, std::span<const TrainLogRow> log, std::size_t models) {
  os << "epoch,step";
  for (std::size_t i = 0; i < models; ++i) os << ",model_" << i << "_loss";
  for (std::size_t i = 0; i < models; ++i) os << ",w_" << i;
  os << ",nps,smooth,total\n";
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  };
  for (const TrainLogRow& r : log) {
    os << r.epoch << ',' << r.step;
    for (double v : r.model_loss) os << ',' << num(v);
    for (double v : r.weights) os << ',' << num(v);
    os << ',' << num(r.nps) << ',' << num(r.smooth) << ',' << num(r.total) << '\n';
  }
}

}  // namespace mmpatch
