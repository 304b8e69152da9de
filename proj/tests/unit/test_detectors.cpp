#include <doctest.h>

#include <cmath>
#include <limits>

#include "mmpatch/detectors.hpp"
#include "mmpatch/errors.hpp"
#include "mmpatch/grad_cam.hpp"
#include "mmpatch/rng.hpp"
#include "mmpatch/toy_detector.hpp"
#include "support/checks.hpp"
#include "support/fixtures.hpp"

using namespace mmpatch;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Candidate make_candidate(double obj, std::vector<double> cls) {
  Candidate c;
  c.objectness = obj;
  c.class_scores = std::move(cls);
  return c;
}

}  // namespace

TEST_CASE("detector kind names") {
  for (DetectorKind k : {DetectorKind::one_stage, DetectorKind::two_stage, DetectorKind::toy}) {
    CHECK(parse_detector_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_detector_kind("three-stage"), ArgumentError);
}

TEST_CASE("person confidence per detector kind") {
  const Candidate c = make_candidate(0.5, {0.8, 0.1});
  CHECK(person_confidence(c, DetectorKind::one_stage, 0) == doctest::Approx(0.4));
  CHECK(person_confidence(c, DetectorKind::toy, 0) == doctest::Approx(0.4));
  CHECK(person_confidence(c, DetectorKind::two_stage, 0) == doctest::Approx(0.8));
  CHECK(person_confidence(c, DetectorKind::toy, 1) == doctest::Approx(0.05));
}

TEST_CASE("obj_energy sums only scores strictly above mu") {
  std::vector<Candidate> cs = {make_candidate(1.0, {0.4}), make_candidate(1.0, {0.5}),
                               make_candidate(0.5, {0.9}), make_candidate(1.0, {0.2})};
  CHECK(obj_energy(cs, 0.4, DetectorKind::toy, 0) == doctest::Approx(0.95));
  const ObjEnergy e = obj_energy_with_grad(cs, 0.4, DetectorKind::toy, 0);
  CHECK(e.value == doctest::Approx(0.95));
  CHECK(e.active == 2);
  CHECK(e.grad[0].objectness == 0.0);
  CHECK(e.grad[1].objectness == doctest::Approx(0.5));
  CHECK(e.grad[1].class_scores[0] == doctest::Approx(1.0));
  CHECK(e.grad[2].class_scores[0] == doctest::Approx(0.5));
  CHECK(obj_energy({}, 0.4, DetectorKind::toy, 0) == 0.0);
}

TEST_CASE("toy detector on an all-zero image") {
  const ToyDetector d = make_toy_detector(3, 4, 3);
  const auto cands = d.forward(Image(64, 64, 3));
  REQUIRE(cands.size() == 16);
  for (const Candidate& c : cands) {
    CHECK(std::isfinite(c.objectness));
    CHECK(c.class_scores.size() == 3);
    for (double s : c.class_scores) CHECK(std::isfinite(s));
  }
  CHECK_THROWS_AS(d.forward(Image(32, 32, 3)), ArgumentError);
}

TEST_CASE("toy detectors with different seeds disagree; same seed agrees") {
  const auto data = fixtures::synthetic_people(1, 1);
  const auto a = make_toy_detector(1, 4, 3).forward(data[0].image);
  const auto b = make_toy_detector(2, 4, 3).forward(data[0].image);
  const auto a2 = make_toy_detector(1, 4, 3).forward(data[0].image);
  CHECK(a[0].objectness != b[0].objectness);
  CHECK(a[5].class_scores == a2[5].class_scores);
}

TEST_CASE("toy forward with hand-set weights matches the closed form") {
  ToyDetectorSpec spec;
  spec.grid = 2;
  spec.classes = 2;
  spec.channels = 2;
  spec.person_gain = 3.0;
  ToyDetector d(spec);
  // Center tap of the red input only, so each activation depends on one pixel.
  for (double& w : d.conv_weights()) w = 0.0;
  auto conv_index = [](int o, int c) { return ((o * 3 + c) * 3 + 1) * 3 + 1; };
  d.conv_weights()[conv_index(0, 0)] = 2.0;
  d.conv_weights()[conv_index(1, 0)] = -1.0;
  d.conv_bias() = {0.1, 0.3};
  const int outputs = d.head_outputs();  // 7
  for (int o = 0; o < outputs; ++o) {
    d.head_weights()[o * 2 + 0] = 0.1 * (o + 1);
    d.head_weights()[o * 2 + 1] = -0.2 * o;
    d.head_bias()[o] = 0.05 * o;
  }

  Image img(64, 64, 3);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) img.at(y, x, 0) = x < 32 ? 0.2 : 0.8;

  const auto cands = d.forward(img);
  REQUIRE(cands.size() == 4);
  for (int gy = 0; gy < 2; ++gy) {
    for (int gx = 0; gx < 2; ++gx) {
      const double r = gx == 0 ? 0.2 : 0.8;
      const double f0 = std::tanh(2.0 * r + 0.1);
      const double f1 = std::tanh(-1.0 * r + 0.3);
      auto score = [&](int o, double gain) {
        const double content = 0.1 * (o + 1) * f0 - 0.2 * o * f1;
        return sigmoid(0.05 * o + gain * content);
      };
      const Candidate& c = cands[gy * 2 + gx];
      CHECK(c.box.cx == doctest::Approx((gx + score(0, 1)) / 2).epsilon(1e-14));
      CHECK(c.box.cy == doctest::Approx((gy + score(1, 1)) / 2).epsilon(1e-14));
      CHECK(c.box.w == doctest::Approx(score(2, 1)).epsilon(1e-14));
      CHECK(c.box.h == doctest::Approx(score(3, 1)).epsilon(1e-14));
      CHECK(c.objectness == doctest::Approx(score(4, 1)).epsilon(1e-14));
      CHECK(c.class_scores[0] == doctest::Approx(score(5, 3.0)).epsilon(1e-14));
      CHECK(c.class_scores[1] == doctest::Approx(score(6, 1)).epsilon(1e-14));
    }
  }
}

TEST_CASE("image -> toy forward -> obj_energy passes a finite-difference check") {
  const auto data = fixtures::synthetic_people(1, 5);
  const ToyDetector d = make_toy_detector(1, 2, 3);
  const Image& img = data[0].image;
  const double mu = 0.4;
  const auto cands = d.forward(img);
  const ObjEnergy e = obj_energy_with_grad(cands, mu, DetectorKind::toy, 0);
  REQUIRE(e.active > 0);
  const Image g = d.backward(img, e.grad);

  const double h = 1e-4;
  Rng pick(7);
  for (int k = 0; k < 20; ++k) {
    const int y = static_cast<int>(pick.below(64)), x = static_cast<int>(pick.below(64));
    const int c = static_cast<int>(pick.below(3));
    Image plus = img, minus = img;
    plus.at(y, x, c) += h;
    minus.at(y, x, c) -= h;
    const auto cp = d.forward(plus), cm = d.forward(minus);
    REQUIRE(obj_energy_with_grad(cp, mu, DetectorKind::toy, 0).active == e.active);
    REQUIRE(obj_energy_with_grad(cm, mu, DetectorKind::toy, 0).active == e.active);
    const double fd = (obj_energy(cp, mu, DetectorKind::toy, 0) - obj_energy(cm, mu, DetectorKind::toy, 0)) / (2 * h);
    CHECK(checks::rel_error(g.at(y, x, c), fd, 1e-7) <= 1e-3);
  }
}

TEST_CASE("toy backward covers every head output") {
  // Gradient of a random linear functional of all scores.
  const auto data = fixtures::synthetic_people(1, 8);
  const ToyDetector d = make_toy_detector(4, 2, 3);
  const Image& img = data[0].image;
  Rng rng(2);
  std::vector<CandidateGrad> grads(4);
  for (auto& cg : grads) {
    cg.objectness = rng.normal();
    cg.class_scores = {rng.normal(), rng.normal(), rng.normal()};
  }
  auto functional = [&](const Image& im) {
    double s = 0.0;
    const auto cs = d.forward(im);
    for (std::size_t j = 0; j < cs.size(); ++j) {
      s += grads[j].objectness * cs[j].objectness;
      for (int k = 0; k < 3; ++k) s += grads[j].class_scores[k] * cs[j].class_scores[k];
    }
    return s;
  };
  const Image g = d.backward(img, grads);
  const double h = 1e-5;
  for (int k = 0; k < 10; ++k) {
    const int y = static_cast<int>(rng.below(64)), x = static_cast<int>(rng.below(64));
    Image plus = img, minus = img;
    plus.at(y, x, 1) += h;
    minus.at(y, x, 1) -= h;
    CHECK(checks::rel_error(g.at(y, x, 1), (functional(plus) - functional(minus)) / (2 * h), 1e-7) <= 1e-4);
  }
}

TEST_CASE("detector registry") {
  auto& reg = DetectorRegistry::instance();
  CHECK(reg.has(DetectorKind::toy));
  AdapterSpec spec = fixtures::toy_spec("t", 1, 1.0);
  spec.grid = 3;
  const auto det = reg.create(spec);
  CHECK(det->info().name == "t");
  CHECK(det->forward(Image(64, 64, 3)).size() == 9);
  if (!reg.has(DetectorKind::one_stage)) {
    spec.kind = DetectorKind::one_stage;
    CHECK_THROWS_AS(reg.create(spec), ArgumentError);
  }
}

TEST_CASE("toy detector exposes Grad-CAM layers") {
  const ToyDetector d = make_toy_detector(2, 2, 3);
  const auto data = fixtures::synthetic_people(1, 9);
  for (const std::string& layer : d.cam_layers()) {
    const Heatmap h = grad_cam(d, data[0].image, CamTarget{0, -1}, layer);
    CHECK(h.height() == 64);
    CHECK(h.width() == 64);
    const double m = max_value(h.values);
    CHECK((m == 0.0 || m == doctest::Approx(1.0)));
    for (double v : h.values.values()) CHECK(v >= 0.0);
  }
  CHECK_THROWS_AS(grad_cam(d, data[0].image, CamTarget{0, -1}, "fc9"), ArgumentError);
}
