#include <doctest.h>

#include <cmath>
#include <random>

#include "mmpatch/errors.hpp"
#include "mmpatch/image_io.hpp"
#include "mmpatch/patch.hpp"
#include "mmpatch/rng.hpp"
#include "support/checks.hpp"
#include "support/fixtures.hpp"

using namespace mmpatch;

namespace {

Patch random_patch(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Image img(h, w, 3);
  Rng rng(seed);
  for (double& v : img.values()) v = rng.uniform(lo, hi);
  return Patch(std::move(img));
}

// Straight transcription of the smoothness sum for the oracle.
double smoothness_oracle(const Patch& p) {
  const Image& img = p.pixels();
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < img.height(); ++i) {
      for (int j = 0; j < img.width(); ++j) {
        const double dy = i + 1 < img.height() ? img.at(i, j, c) - img.at(i + 1, j, c) : 0.0;
        const double dx = j + 1 < img.width() ? img.at(i, j, c) - img.at(i, j + 1, c) : 0.0;
        total += std::sqrt(dy * dy + dx * dx);
      }
    }
  }
  return total;
}

}  // namespace

TEST_CASE("std::mt19937_64 matches its published 10000th output") {
  std::mt19937_64 e;
  e.discard(9999);
  CHECK(e() == 9981545732273789042ULL);
}

TEST_CASE("random-uniform init reproduces the raw generator stream on a 2x2 patch") {
  const std::uint64_t seed = 42;
  const Patch p = init_patch(2, 2, InitMode::random_uniform, seed);
  std::mt19937_64 e(seed);
  for (double v : p.pixels().values()) {
    const double expected = static_cast<double>(e() >> 11) / 9007199254740992.0;
    CHECK(v == expected);
  }
  CHECK(p.in_unit_range());
  CHECK(init_patch(2, 2, InitMode::random_uniform, seed) == p);
  CHECK_FALSE(init_patch(2, 2, InitMode::random_uniform, seed + 1) == p);
}

TEST_CASE("gray init and init from file") {
  const Patch g = init_patch(3, 4, InitMode::gray, 0);
  for (double v : g.pixels().values()) CHECK(v == 0.5);

  const auto dir = checks::temp_dir("patch_init");
  Image img(3, 4, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = (y * 4 + x + c * 7) / 51.0;
  write_png(dir / "p.png", img);
  const Patch f = init_patch(3, 4, InitMode::from_file, 0, dir / "p.png");
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(f.pixels().values()[i] == doctest::Approx(img.values()[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(init_patch(4, 4, InitMode::from_file, 0, dir / "p.png"), InputError);
  CHECK_THROWS_AS(init_patch(4, 4, InitMode::from_file, 0, dir / "missing.png"), InputError);
}

TEST_CASE("init mode names round-trip") {
  for (InitMode m : {InitMode::random_uniform, InitMode::gray, InitMode::from_file}) {
    CHECK(parse_init_mode(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_init_mode("noise"), ArgumentError);
}

TEST_CASE("patch shape invariants") {
  CHECK_THROWS_AS(Patch(Image(4, 4, 1)), ArgumentError);
  CHECK_THROWS_AS(Patch(Image(1, 4, 3)), ArgumentError);
  CHECK_THROWS_AS(init_patch(1, 1, InitMode::gray, 0), ArgumentError);
  CHECK_NOTHROW(Patch(Image(2, 2, 3)));
}

TEST_CASE("clamp_patch is idempotent and lands in [0,1]") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Patch p = random_patch(5, 6, s, -0.5, 1.5);
    const Patch once = clamp_patch(p);
    CHECK(once.in_unit_range());
    CHECK(clamp_patch(once) == once);
  }
}

TEST_CASE("palette invariants") {
  CHECK_THROWS_AS(PrintPalette({}), ArgumentError);
  CHECK_THROWS_AS(PrintPalette({{0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}}), ArgumentError);
  CHECK_THROWS_AS(PrintPalette({{0.1, 1.2, 0.3}}), ArgumentError);
}

TEST_CASE("nps_loss hand values") {
  const PrintPalette pal({{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}});
  Image img(2, 2, 3, 0.0);
  img.at(0, 1, 0) = 0.3;                            // distance 0.3 to black
  for (int c = 0; c < 3; ++c) img.at(1, 1, c) = 0.9;  // sqrt(3)*0.1 to white
  const double expected = 0.3 + std::sqrt(3.0) * 0.1;
  CHECK(nps_loss(Patch(img), pal) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(nps_loss_with_grad(Patch(img), pal).value == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("nps_loss is zero exactly on palette members") {
  const PrintPalette pal = fixtures::lattice_palette();
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Image img(4, 4, 3);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        const Color& c = pal.colors()[rng.below(pal.size())];
        for (int k = 0; k < 3; ++k) img.at(y, x, k) = c[k];
      }
    CHECK(nps_loss(Patch(img), pal) == 0.0);
    // Moving one pixel off the palette by 1e-6 must show up.
    img.at(rng.below(4), rng.below(4), rng.below(3)) += 1e-6;
    const double off = nps_loss(Patch(img), pal);
    CHECK(off > 1e-9);
    CHECK(off == doctest::Approx(1e-6).epsilon(1e-6));
  }
}

TEST_CASE("nps ties resolve to the first palette color") {
  const PrintPalette pal({{0.0, 0.5, 0.5}, {1.0, 0.5, 0.5}});
  const Patch p = Patch::filled(2, 2, 0.5);  // equidistant from both
  const LossWithGrad lg = nps_loss_with_grad(p, pal);
  // Gradient points away from the first color: +x in the red channel.
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      CHECK(lg.grad.at(y, x, 0) == doctest::Approx(1.0));
      CHECK(lg.grad.at(y, x, 1) == 0.0);
    }
}

TEST_CASE("smoothness_loss matches the oracle, is 0 on constants and shift invariant") {
  for (double v : {0.0, 0.25, 1.0}) CHECK(smoothness_loss(Patch::filled(5, 7, v)) == 0.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Patch p = random_patch(6, 5, s, 0.0, 0.9);
    CHECK(smoothness_loss(p) == doctest::Approx(smoothness_oracle(p)).epsilon(1e-13));
    Image shifted = p.pixels();
    for (double& v : shifted.values()) v += 0.1;
    CHECK(std::abs(smoothness_loss(Patch(shifted)) - smoothness_loss(p)) <= 1e-9);
  }
  // Per-channel constant but different channels is still smooth.
  Image img(3, 3, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.2 * c;
  CHECK(smoothness_loss(Patch(img)) == 0.0);
}

TEST_CASE("2x2 smoothness by hand") {
  Image img(2, 2, 3, 0.0);
  img.at(0, 0, 0) = 1.0;  // red channel [[1,0],[0,0]]
  // (0,0): sqrt(1+1); (0,1): dy=0; (1,0): dx=0; (1,1): boundary
  CHECK(smoothness_loss(Patch(img)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("nps and smoothness gradients match central differences") {
  const PrintPalette pal = fixtures::lattice_palette();
  const double h = 1e-4;
  for (std::uint64_t s = 0; s < 3; ++s) {
    // Values away from palette midpoints and from each other avoid ties
    // and zero differences.
    const Patch p = random_patch(6, 6, 100 + s, 0.02, 0.98);
    const LossWithGrad nps = nps_loss_with_grad(p, pal);
    const LossWithGrad sm = smoothness_loss_with_grad(p);
    Rng pick(s);
    for (int k = 0; k < 20; ++k) {
      const int y = static_cast<int>(pick.below(6)), x = static_cast<int>(pick.below(6));
      const int c = static_cast<int>(pick.below(3));
      Patch plus = p, minus = p;
      plus.pixels().at(y, x, c) += h;
      minus.pixels().at(y, x, c) -= h;
      const double fd_nps = (nps_loss(plus, pal) - nps_loss(minus, pal)) / (2 * h);
      const double fd_sm = (smoothness_loss(plus) - smoothness_loss(minus)) / (2 * h);
      CHECK(checks::rel_error(nps.grad.at(y, x, c), fd_nps) <= 1e-3);
      CHECK(checks::rel_error(sm.grad.at(y, x, c), fd_sm) <= 1e-3);
    }
  }
}

TEST_CASE("total_energy") {
  const LossWeights w;
  CHECK(w.alpha == 0.01);
  CHECK(w.beta == 0.165);
  CHECK(total_energy(1.0, 0.0, 0.0, w) == 1.0);
  CHECK(total_energy(1.0, 2.0, 3.0, w) == 1.515);
  CHECK(total_energy(0.0, 0.0, 0.0, w) == 0.0);
  CHECK_THROWS_AS((LossWeights{-0.1, 0.1}.validate()), ArgumentError);
}
