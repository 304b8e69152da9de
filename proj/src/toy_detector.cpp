#include "mmpatch/toy_detector.hpp"

#include <cmath>

#include "mmpatch/errors.hpp"
#include "mmpatch/rng.hpp"

namespace mmpatch {

namespace {

constexpr int kKernel = 3;
constexpr int kObjectness = 4;
constexpr int kFirstClass = 5;
// Initial logit offsets: the untouched detector leans towards "object
// present" and "person" so that clean scenes carry person energy.
constexpr double kObjectnessBias = 1.0;
constexpr double kPersonBias = 1.0;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Adaptive pooling bounds of cell g along an axis of length n split in `grid`.
int cell_begin(int g, int n, int grid) { return g * n / grid; }

}  // namespace

ToyDetectorSpec ToyDetectorSpec::from(const AdapterSpec& s) {
  ToyDetectorSpec t;
  t.name = s.name;
  t.seed = s.seed;
  t.grid = s.grid;
  t.classes = s.classes;
  t.channels = s.channels;
  t.input_height = s.input_height;
  t.input_width = s.input_width;
  t.person_class = s.person_class;
  t.person_gain = s.person_gain;
  return t;
}

ToyDetector::ToyDetector(ToyDetectorSpec spec) : spec_(std::move(spec)) {
  if (spec_.grid < 1) throw ArgumentError("toy detector grid must be >= 1");
  if (spec_.classes < 2) throw ArgumentError("toy detector needs >= 2 classes");
  if (spec_.channels < 1) throw ArgumentError("toy detector needs >= 1 channel");
  if (spec_.input_height < spec_.grid || spec_.input_width < spec_.grid) {
    throw ArgumentError("toy detector input smaller than its grid");
  }
  if (spec_.person_class < 0 || spec_.person_class >= spec_.classes) {
    throw ArgumentError("person class index outside class count");
  }
  if (!std::isfinite(spec_.person_gain)) throw ArgumentError("person_gain must be finite");

  info_ = DetectorInfo{spec_.name, DetectorKind::toy, spec_.person_class, spec_.classes,
                       spec_.input_height, spec_.input_width};

  Rng rng(derive_seed({spec_.seed, 0x746F79ULL}));
  const int fan_in = 3 * kKernel * kKernel;
  conv_w_.resize(static_cast<std::size_t>(spec_.channels) * fan_in);
  for (double& w : conv_w_) w = rng.normal() * std::sqrt(2.0 / fan_in);
  conv_b_.resize(spec_.channels);
  for (double& b : conv_b_) b = 0.1 * rng.normal();

  const int outputs = head_outputs();
  head_w_.resize(static_cast<std::size_t>(outputs) * spec_.channels);
  for (double& w : head_w_) w = rng.normal() * 2.0 / std::sqrt(spec_.channels);
  head_b_.assign(outputs, 0.0);
  head_b_[kObjectness] = kObjectnessBias;
  head_b_[kFirstClass + spec_.person_class] = kPersonBias;
}

double ToyDetector::logit_gain(int output) const {
  return output == kFirstClass + spec_.person_class ? spec_.person_gain : 1.0;
}

ToyDetector::Trace ToyDetector::run(const Image& image) const {
  const int h = spec_.input_height;
  const int w = spec_.input_width;
  if (image.height() != h || image.width() != w || image.channels() != 3) {
    throw ArgumentError("toy detector " + spec_.name + " expects " + std::to_string(h) + "x" +
                        std::to_string(w) + "x3 input");
  }
  const int ch = spec_.channels;
  Trace t;
  t.activations = Image(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int o = 0; o < ch; ++o) {
        double acc = conv_b_[o];
        const double* wo = &conv_w_[static_cast<std::size_t>(o) * 3 * kKernel * kKernel];
        for (int ky = 0; ky < kKernel; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int kx = 0; kx < kKernel; ++kx) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            for (int c = 0; c < 3; ++c) {
              acc += wo[(c * kKernel + ky) * kKernel + kx] * image.at(sy, sx, c);
            }
          }
        }
        t.activations.at(y, x, o) = std::tanh(acc);
      }
    }
  }

  const int g = spec_.grid;
  t.pooled.assign(static_cast<std::size_t>(g) * g * ch, 0.0);
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      const int y0 = cell_begin(gy, h, g), y1 = cell_begin(gy + 1, h, g);
      const int x0 = cell_begin(gx, w, g), x1 = cell_begin(gx + 1, w, g);
      const double area = static_cast<double>(y1 - y0) * (x1 - x0);
      double* cell = &t.pooled[(static_cast<std::size_t>(gy) * g + gx) * ch];
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          for (int o = 0; o < ch; ++o) cell[o] += t.activations.at(y, x, o);
        }
      }
      for (int o = 0; o < ch; ++o) cell[o] /= area;
    }
  }

  const int outputs = head_outputs();
  t.scores.resize(static_cast<std::size_t>(g) * g * outputs);
  for (int cell = 0; cell < g * g; ++cell) {
    const double* f = &t.pooled[static_cast<std::size_t>(cell) * ch];
    for (int o = 0; o < outputs; ++o) {
      double z = 0.0;
      for (int c = 0; c < ch; ++c) z += head_w_[static_cast<std::size_t>(o) * ch + c] * f[c];
      t.scores[static_cast<std::size_t>(cell) * outputs + o] = sigmoid(head_b_[o] + logit_gain(o) * z);
    }
  }
  return t;
}

std::vector<Candidate> ToyDetector::decode(const Trace& t) const {
  const int g = spec_.grid;
  const int outputs = head_outputs();
  std::vector<Candidate> out(static_cast<std::size_t>(g) * g);
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      const int cell = gy * g + gx;
      const double* s = &t.scores[static_cast<std::size_t>(cell) * outputs];
      Candidate& c = out[cell];
      c.box = BoundingBox{spec_.person_class, (gx + s[0]) / g, (gy + s[1]) / g, s[2], s[3]};
      c.objectness = s[kObjectness];
      c.class_scores.assign(s + kFirstClass, s + outputs);
    }
  }
  return out;
}

std::vector<Candidate> ToyDetector::forward(const Image& image) const { return decode(run(image)); }

std::vector<double> ToyDetector::pooled_grad(const Trace& t, const std::vector<double>& score_grad) const {
  const int g = spec_.grid;
  const int ch = spec_.channels;
  const int outputs = head_outputs();
  std::vector<double> dpooled(static_cast<std::size_t>(g) * g * ch, 0.0);
  for (int cell = 0; cell < g * g; ++cell) {
    for (int o = 0; o < outputs; ++o) {
      const std::size_t idx = static_cast<std::size_t>(cell) * outputs + o;
      if (score_grad[idx] == 0.0) continue;
      const double s = t.scores[idx];
      const double dz = score_grad[idx] * s * (1.0 - s) * logit_gain(o);
      for (int c = 0; c < ch; ++c) {
        dpooled[static_cast<std::size_t>(cell) * ch + c] += dz * head_w_[static_cast<std::size_t>(o) * ch + c];
      }
    }
  }
  return dpooled;
}

Image ToyDetector::activation_grad(const std::vector<double>& dpooled) const {
  const int h = spec_.input_height;
  const int w = spec_.input_width;
  const int g = spec_.grid;
  const int ch = spec_.channels;
  Image dact(h, w, ch);
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      const int y0 = cell_begin(gy, h, g), y1 = cell_begin(gy + 1, h, g);
      const int x0 = cell_begin(gx, w, g), x1 = cell_begin(gx + 1, w, g);
      const double area = static_cast<double>(y1 - y0) * (x1 - x0);
      const double* d = &dpooled[(static_cast<std::size_t>(gy) * g + gx) * ch];
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          for (int o = 0; o < ch; ++o) dact.at(y, x, o) = d[o] / area;
        }
      }
    }
  }
  return dact;
}

Image ToyDetector::backward(const Image& image, std::span<const CandidateGrad> grads) const {
  const Trace t = run(image);
  const int g = spec_.grid;
  const int outputs = head_outputs();
  if (grads.size() != static_cast<std::size_t>(g) * g) {
    throw ArgumentError("candidate gradient count does not match forward output");
  }
  std::vector<double> score_grad(t.scores.size(), 0.0);
  for (std::size_t cell = 0; cell < grads.size(); ++cell) {
    const CandidateGrad& cg = grads[cell];
    score_grad[cell * outputs + kObjectness] = cg.objectness;
    if (!cg.class_scores.empty() && cg.class_scores.size() != static_cast<std::size_t>(spec_.classes)) {
      throw ArgumentError("candidate gradient class count mismatch");
    }
    for (std::size_t k = 0; k < cg.class_scores.size(); ++k) {
      score_grad[cell * outputs + kFirstClass + k] = cg.class_scores[k];
    }
  }

  Image dact = activation_grad(pooled_grad(t, score_grad));

  const int h = spec_.input_height;
  const int w = spec_.input_width;
  const int ch = spec_.channels;
  Image dimg(h, w, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int o = 0; o < ch; ++o) {
        const double a = t.activations.at(y, x, o);
        const double dpre = dact.at(y, x, o) * (1.0 - a * a);
        if (dpre == 0.0) continue;
        const double* wo = &conv_w_[static_cast<std::size_t>(o) * 3 * kKernel * kKernel];
        for (int ky = 0; ky < kKernel; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int kx = 0; kx < kKernel; ++kx) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            for (int c = 0; c < 3; ++c) {
              dimg.at(sy, sx, c) += wo[(c * kKernel + ky) * kKernel + kx] * dpre;
            }
          }
        }
      }
    }
  }
  return dimg;
}

std::vector<double> ToyDetector::target_score_grad(const Trace& t, const CamTarget& target) const {
  const int g = spec_.grid;
  const int outputs = head_outputs();
  if (target.class_index < 0 || target.class_index >= spec_.classes) {
    throw ArgumentError("CAM target class outside class count");
  }
  if (target.candidate >= g * g) throw ArgumentError("CAM target candidate out of range");
  std::vector<double> score_grad(t.scores.size(), 0.0);
  for (int cell = 0; cell < g * g; ++cell) {
    if (target.candidate >= 0 && cell != target.candidate) continue;
    const std::size_t base = static_cast<std::size_t>(cell) * outputs;
    score_grad[base + kObjectness] = t.scores[base + kFirstClass + target.class_index];
    score_grad[base + kFirstClass + target.class_index] = t.scores[base + kObjectness];
  }
  return score_grad;
}

LayerProbe ToyDetector::probe(const Image& image, const CamTarget& target,
                              const std::string& layer) const {
  if (layer != "conv1" && layer != "pool") throw ArgumentError("unknown layer: " + layer);
  const Trace t = run(image);
  const std::vector<double> dpooled = pooled_grad(t, target_score_grad(t, target));
  if (layer == "conv1") return LayerProbe{t.activations, activation_grad(dpooled)};

  const int g = spec_.grid;
  const int ch = spec_.channels;
  LayerProbe p{Image(g, g, ch), Image(g, g, ch)};
  for (int cell = 0; cell < g * g; ++cell) {
    for (int c = 0; c < ch; ++c) {
      p.activations.at(cell / g, cell % g, c) = t.pooled[static_cast<std::size_t>(cell) * ch + c];
      p.gradient.at(cell / g, cell % g, c) = dpooled[static_cast<std::size_t>(cell) * ch + c];
    }
  }
  return p;
}

ToyDetector make_toy_detector(std::uint64_t seed, int grid, int classes) {
  ToyDetectorSpec spec;
  spec.seed = seed;
  spec.grid = grid;
  spec.classes = classes;
  return ToyDetector(spec);
}

}  // namespace mmpatch
