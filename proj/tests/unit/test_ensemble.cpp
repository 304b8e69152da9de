#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "mmpatch/ensemble.hpp"
#include "mmpatch/errors.hpp"
#include "mmpatch/rng.hpp"
#include "mmpatch/toy_detector.hpp"
#include "support/checks.hpp"
#include "support/fixtures.hpp"

using namespace mmpatch;

namespace {

// Brute force: nearest point of a 1e-3 simplex lattice (K <= 3).
std::vector<double> simplex_grid_argmin(const std::vector<double>& v) {
  const int steps = 1000;
  std::vector<double> best;
  double best_d = std::numeric_limits<double>::infinity();
  auto consider = [&](const std::vector<double>& w) {
    double d = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) d += (w[i] - v[i]) * (w[i] - v[i]);
    if (d < best_d) {
      best_d = d;
      best = w;
    }
  };
  if (v.size() == 1) {
    consider({1.0});
  } else if (v.size() == 2) {
    for (int a = 0; a <= steps; ++a) consider({a / double(steps), 1.0 - a / double(steps)});
  } else {
    for (int a = 0; a <= steps; ++a)
      for (int b = 0; a + b <= steps; ++b)
        consider({a / double(steps), b / double(steps), (steps - a - b) / double(steps)});
  }
  return best;
}

double inner_objective(const EnsembleWeights& w, std::span<const double> l, double gamma) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * l[i];
  return s - regularizer(w, gamma);
}

// Emits a fixed candidate list and fails or misbehaves on demand.
class ScriptedAdapter : public DetectorAdapter {
 public:
  ScriptedAdapter(double objectness, int throw_after)
      : objectness_(objectness), throw_after_(throw_after) {
    info_ = DetectorInfo{"scripted", DetectorKind::toy, 0, 2, 64, 64};
  }
  const DetectorInfo& info() const override { return info_; }
  using DetectorAdapter::forward;
  std::vector<Candidate> forward(const Image&) const override {
    if (throw_after_ >= 0 && calls_++ >= throw_after_) throw std::runtime_error("backend lost");
    Candidate c;
    c.box = BoundingBox{0, 0.5, 0.5, 0.5, 0.5};
    c.objectness = objectness_;
    c.class_scores = {1.0, 0.0};
    return {c};
  }
  Image backward(const Image& image, std::span<const CandidateGrad>) const override {
    return Image(image.height(), image.width(), 3);
  }

 private:
  DetectorInfo info_;
  double objectness_;
  int throw_after_;
  mutable int calls_ = 0;
};

TrainConfig small_config(EnsembleMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.patch_height = 12;
  cfg.patch_width = 12;
  cfg.batch_size = 2;
  cfg.max_steps = 4;
  cfg.epochs = 2;
  cfg.seed = 17;
  return cfg;
}

TransformConfig toy_transform() {
  TransformConfig t;
  t.patch_scale = 0.6;
  return t;
}

}  // namespace

TEST_CASE("ensemble weights invariants") {
  CHECK_NOTHROW(EnsembleWeights({0.25, 0.75}));
  CHECK_THROWS_AS(EnsembleWeights({0.5, 0.6}), ArgumentError);
  CHECK_THROWS_AS(EnsembleWeights({-0.1, 1.1}), ArgumentError);
  CHECK_THROWS_AS(EnsembleWeights({}), ArgumentError);
  const auto u = EnsembleWeights::uniform(4);
  for (double v : u.values()) CHECK(v == 0.25);
}

TEST_CASE("simplex projection agrees with a dense grid search") {
  Rng rng(1);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t k = 1 + trial % 3;
    std::vector<double> v(k);
    for (double& x : v) x = rng.uniform(-3.0, 3.0);
    const EnsembleWeights w = simplex_project(v);
    const auto grid = simplex_grid_argmin(v);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(std::abs(w[i] - grid[i]) <= 1e-3);
      CHECK(w[i] >= 0.0);
      total += w[i];
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("simplex projection edge cases") {
  CHECK(simplex_project(std::vector<double>{-7.0}).values() == std::vector<double>{1.0});
  const std::vector<double> inside = {0.2, 0.3, 0.5};
  const auto p = simplex_project(inside);
  for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(inside[i]).epsilon(1e-15));
  CHECK(simplex_project(std::vector<double>{5.0, 0.0}).values() == std::vector<double>{1.0, 0.0});
  CHECK_THROWS_AS(simplex_project(std::vector<double>{}), ArgumentError);
  CHECK_THROWS_AS(simplex_project(std::vector<double>{0.5, std::nan("")}), ArgumentError);
}

TEST_CASE("inner step hand cases") {
  const std::vector<double> l = {1.0, 0.0};
  const auto w = inner_max_step(EnsembleWeights::uniform(2), l, 0.1, 0.0);
  CHECK(std::abs(w[0] - 0.55) <= 1e-9);
  CHECK(std::abs(w[1] - 0.45) <= 1e-9);

  const std::vector<double> equal = {0.7, 0.7, 0.7};
  const auto stay = inner_max_step(EnsembleWeights::uniform(3), equal, 0.78, 0.1);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(stay[i] - 1.0 / 3.0) <= 1e-15);

  const auto pulled = inner_max_step(EnsembleWeights({0.9, 0.1}), std::vector<double>{2.0, 1.0}, 1e-6, 1e6);
  CHECK(std::abs(pulled[0] - 0.5) <= 1e-3);

  CHECK(inner_max_step(EnsembleWeights({1.0}), std::vector<double>{3.0}, 0.78, 0.1).values() ==
        std::vector<double>{1.0});
}

TEST_CASE("inner step with a safe rate never decreases the regularized objective") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + trial % 3;
    std::vector<double> raw(k), l(k);
    for (double& x : raw) x = rng.uniform();
    for (double& x : l) x = rng.uniform(0.0, 3.0);
    const EnsembleWeights w = simplex_project(raw);
    const double gamma = rng.uniform(0.0, 2.0);
    double norm = 0.0;
    for (double x : l) norm += x * x;
    const double nu = 1.0 / (gamma + std::sqrt(norm));
    const EnsembleWeights next = inner_max_step(w, l, nu, gamma);
    CHECK(inner_objective(next, l, gamma) >= inner_objective(w, l, gamma) - 1e-12);
  }
}

TEST_CASE("regularizer") {
  CHECK(regularizer(EnsembleWeights::uniform(3), 0.1) == 0.0);
  CHECK(regularizer(EnsembleWeights({1.0, 0.0}), 2.0) == doctest::Approx(0.5));
}

TEST_CASE("first Adam step moves each pixel by about lr against its gradient sign") {
  Patch p = Patch::filled(3, 3, 0.5);
  Image g(3, 3, 3);
  Rng rng(3);
  for (double& v : g.values()) v = rng.uniform(-1.0, 1.0);
  AdamState st;
  st.lr = 0.03;
  const Patch q = outer_min_step(p, g, st);
  CHECK(st.step == 1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double expected = 0.5 - 0.03 * (g.values()[i] > 0 ? 1.0 : -1.0);
    CHECK(q.pixels().values()[i] == doctest::Approx(expected).epsilon(1e-6));
  }
  // Clamping keeps the result printable.
  Patch edge = Patch::filled(2, 2, 0.01);
  AdamState st2;
  st2.lr = 0.5;
  CHECK(outer_min_step(edge, Image(2, 2, 3, 1.0), st2).in_unit_range());
}

TEST_CASE("ensemble mode names and train config validation") {
  for (EnsembleMode m : {EnsembleMode::dynamic, EnsembleMode::average, EnsembleMode::fixed}) {
    CHECK(parse_ensemble_mode(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_ensemble_mode("greedy"), ArgumentError);
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.mu = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = TrainConfig{};
  cfg.mode = EnsembleMode::fixed;
  cfg.fixed_weights = {0.5, 0.4};
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("attack gradient matches central differences on a small patch") {
  const auto data = fixtures::synthetic_people(2, 3);
  const ToyDetector a = make_toy_detector(1, 2, 3);
  const ToyDetector b = make_toy_detector(2, 2, 3);
  const DetectorAdapter* list[] = {&a, &b};
  TrainConfig cfg = small_config(EnsembleMode::dynamic);
  cfg.mu = 0.3;
  TransformConfig t = toy_transform();
  t.noise_std = 0.0;
  std::vector<RandomDraw> draws;
  for (std::size_t i = 0; i < data.size(); ++i) draws.push_back(draw_transforms(t, 5, 0, i, data[i]));
  const EnsembleWeights w({0.3, 0.7});
  const PrintPalette pal = fixtures::lattice_palette();

  Image px(12, 12, 3);
  Rng rng(6);
  for (double& v : px.values()) v = rng.uniform(0.05, 0.95);
  const Patch p(px);
  const AttackEvaluation ev = evaluate_attack(p, data, draws, list, w, cfg, t, pal, true);
  CHECK(ev.total == doctest::Approx(total_energy(ev.combined, ev.nps, ev.smooth, cfg.loss_weights)));

  const double h = 1e-4;
  for (int k = 0; k < 10; ++k) {
    const int y = static_cast<int>(rng.below(12)), x = static_cast<int>(rng.below(12));
    const int c = static_cast<int>(rng.below(3));
    Patch plus = p, minus = p;
    plus.pixels().at(y, x, c) += h;
    minus.pixels().at(y, x, c) -= h;
    const auto ep = evaluate_attack(plus, data, draws, list, w, cfg, t, pal, false);
    const auto em = evaluate_attack(minus, data, draws, list, w, cfg, t, pal, false);
    REQUIRE(ep.active == ev.active);
    REQUIRE(em.active == ev.active);
    CHECK(checks::rel_error(ev.grad.at(y, x, c), (ep.total - em.total) / (2 * h)) <= 1e-2);
  }
}

TEST_CASE("weights follow the ensemble mode during training") {
  const auto data = fixtures::synthetic_people(4, 4);
  const ToyDetector a = make_toy_detector(1, 2, 3);
  const ToyDetector b = make_toy_detector(2, 2, 3);
  const DetectorAdapter* two[] = {&a, &b};
  const PrintPalette pal = fixtures::lattice_palette();
  const TransformConfig t = toy_transform();

  const auto avg = train(data, two, small_config(EnsembleMode::average), t, pal);
  CHECK(avg.log.size() == 4);
  for (const auto& row : avg.log) CHECK(row.weights == std::vector<double>{0.5, 0.5});

  TrainConfig fixed = small_config(EnsembleMode::fixed);
  fixed.fixed_weights = {0.2, 0.8};
  const auto fx = train(data, two, fixed, t, pal);
  for (const auto& row : fx.log) CHECK(row.weights == std::vector<double>{0.2, 0.8});

  const auto dyn = train(data, two, small_config(EnsembleMode::dynamic), t, pal);
  CHECK(dyn.log.front().weights == std::vector<double>{0.5, 0.5});
  for (const auto& row : dyn.log) {
    CHECK(row.weights.size() == 2);
    CHECK(std::abs(row.weights[0] + row.weights[1] - 1.0) <= 1e-9);
  }

  const DetectorAdapter* one[] = {&a};
  const auto k1 = train(data, one, small_config(EnsembleMode::dynamic), t, pal);
  const auto single = train(data, one, small_config(EnsembleMode::average), t, pal);
  for (const auto& row : k1.log) CHECK(row.weights == std::vector<double>{1.0});
  CHECK(k1.patch == single.patch);
}

TEST_CASE("default inner step rarely decreases the regularized objective on toy runs") {
  const auto data = fixtures::synthetic_people(8, 4);
  const ToyDetector a = make_toy_detector(1, 2, 3);
  const ToyDetector b = make_toy_detector(2, 2, 3);
  const DetectorAdapter* two[] = {&a, &b};
  TrainConfig cfg = small_config(EnsembleMode::dynamic);
  cfg.max_steps = 40;
  cfg.epochs = 20;
  const auto run = train(data, two, cfg, toy_transform(), fixtures::lattice_palette());
  auto objective = [&](const EnsembleWeights& w, const std::vector<double>& l) {
    double s = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) s += w[i] * l[i];
    return s - regularizer(w, cfg.gamma);
  };
  int ok = 0;
  for (const auto& row : run.log) {
    const EnsembleWeights w(row.weights);
    const EnsembleWeights next = inner_max_step(w, row.model_loss, cfg.nu, cfg.gamma);
    ok += objective(next, row.model_loss) >= objective(w, row.model_loss) - 1e-12;
  }
  CHECK(ok >= 0.95 * static_cast<double>(run.log.size()));
}

TEST_CASE("training is deterministic and the callback sees every step") {
  const auto data = fixtures::synthetic_people(4, 4);
  const ToyDetector a = make_toy_detector(1, 2, 3);
  const DetectorAdapter* one[] = {&a};
  const PrintPalette pal = fixtures::lattice_palette();
  long seen = 0;
  const auto r1 = train(data, one, small_config(EnsembleMode::dynamic), toy_transform(), pal,
                        [&](const TrainLogRow& row, const Patch&, const EnsembleWeights&) {
                          CHECK(row.step == seen);
                          ++seen;
                        });
  const auto r2 = train(data, one, small_config(EnsembleMode::dynamic), toy_transform(), pal);
  CHECK(seen == 4);
  CHECK(r1.patch == r2.patch);
  std::ostringstream l1, l2;
  write_train_log_csv(l1, r1.log, 1);
  write_train_log_csv(l2, r2.log, 1);
  CHECK(l1.str() == l2.str());
  CHECK(l1.str().rfind("epoch,step,model_0_loss,w_0,nps,smooth,total\n", 0) == 0);

  TrainConfig other = small_config(EnsembleMode::dynamic);
  other.seed = 18;
  CHECK_FALSE(train(data, one, other, toy_transform(), pal).patch == r1.patch);
}

TEST_CASE("training failures carry the step and the divergence flag") {
  const auto data = fixtures::synthetic_people(4, 4);
  const PrintPalette pal = fixtures::lattice_palette();

  const ScriptedAdapter flaky(0.9, 5);
  const DetectorAdapter* f[] = {&flaky};
  try {
    train(data, f, small_config(EnsembleMode::average), toy_transform(), pal);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(e.step() == 2);  // 2 forwards per step
    CHECK_FALSE(e.diverged());
  }

  const ScriptedAdapter blown(std::numeric_limits<double>::infinity(), -1);
  const DetectorAdapter* b[] = {&blown};
  try {
    train(data, b, small_config(EnsembleMode::average), toy_transform(), pal);
    FAIL("expected a divergence error");
  } catch (const TrainingError& e) {
    CHECK(e.step() == 0);
    CHECK(e.diverged());
  }
}
