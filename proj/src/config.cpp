#include "mmpatch/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "mmpatch/errors.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace mmpatch {

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  eval.seed = s;
}

namespace {

constexpr const char* kAdapterPrefix = "adapter:";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

// Reads typed values out of one section and remembers which keys were used
// so that leftovers can be reported as unknown.
class Section {
 public:
  Section(const pt::ptree& tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    auto v = tree_.get_optional<std::string>(key);
    if (!v) return;
    out = parse<T>(key, *v);
  }

  void path(const char* key, fs::path& out, const fs::path& base) {
    used_.insert(key);
    auto v = tree_.get_optional<std::string>(key);
    if (!v || v->empty()) return;
    fs::path p(*v);
    out = (p.is_absolute() ? p : base / p).lexically_normal();
  }

  void finish() const {
    for (const auto& [key, _] : tree_) {
      if (!used_.count(key)) throw InputError("unknown key '" + key + "' in [" + name_ + "]");
    }
  }

 private:
  template <typename T>
  T parse(const char* key, const std::string& raw) const {
    auto bad = [&]() {
      return InputError("[" + name_ + "] " + key + ": cannot parse '" + raw + "'");
    };
    if constexpr (std::is_same_v<T, std::string>) {
      return raw;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "1" || raw == "yes") return true;
      if (raw == "false" || raw == "0" || raw == "no") return false;
      throw bad();
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      std::vector<double> out;
      std::string s = raw;
      std::replace(s.begin(), s.end(), ',', ' ');
      std::istringstream in(s);
      double d;
      while (in >> d) out.push_back(d);
      if (!in.eof()) throw bad();
      return out;
    } else {
      std::istringstream in(raw);
      T value{};
      if (!(in >> value) || !(in >> std::ws).eof()) throw bad();
      return value;
    }
  }

  const pt::ptree& tree_;
  std::string name_;
  std::set<std::string> used_;
};

void require_exists(const fs::path& p, const char* what) {
  if (!p.empty() && !fs::exists(p)) {
    throw InputError(std::string(what) + " does not exist: " + p.string());
  }
}

}  // namespace

RunConfig parse_config(const std::string& text, const fs::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InputError(std::string("config: ") + e.what());
  }

  RunConfig cfg;
  cfg.output_dir = (base_dir / cfg.output_dir).lexically_normal();
  for (const auto& [name, section] : tree) {
    if (section.empty() && !section.data().empty()) {
      throw InputError("config: key '" + name + "' outside any section");
    }
    Section s(section, name);
    if (name == "run") {
      s.get("seed", cfg.seed);
      s.get("checkpoint_every", cfg.checkpoint_every);
    } else if (name == "dataset") {
      s.path("images", cfg.images_dir, base_dir);
      s.path("labels", cfg.labels_dir, base_dir);
    } else if (name == "palette") {
      s.path("path", cfg.palette_path, base_dir);
    } else if (name == "output") {
      s.path("dir", cfg.output_dir, base_dir);
    } else if (name == "train") {
      TrainConfig& t = cfg.train;
      std::string mode = to_string(t.mode), init = to_string(t.init);
      s.get("epochs", t.epochs);
      s.get("batch_size", t.batch_size);
      s.get("max_steps", t.max_steps);
      s.get("patch_lr", t.patch_lr);
      s.get("nu", t.nu);
      s.get("gamma", t.gamma);
      s.get("mu", t.mu);
      s.get("mode", mode);
      s.get("fixed_weights", t.fixed_weights);
      s.get("patch_height", t.patch_height);
      s.get("patch_width", t.patch_width);
      s.get("init", init);
      s.path("init_file", t.init_file, base_dir);
      s.get("eot_samples", t.eot_samples);
      s.get("shuffle", t.shuffle);
      try {
        t.mode = parse_ensemble_mode(mode);
        t.init = parse_init_mode(init);
      } catch (const ArgumentError& e) {
        throw InputError(std::string("[train] ") + e.what());
      }
    } else if (name == "loss") {
      s.get("alpha", cfg.train.loss_weights.alpha);
      s.get("beta", cfg.train.loss_weights.beta);
    } else if (name == "transform") {
      TransformConfig& t = cfg.transform;
      s.get("rotation_range_deg", t.rotation_range_deg);
      s.get("translate_range", t.translate_range);
      s.get("patch_scale", t.patch_scale);
      s.get("tps_grid", t.tps_grid);
      s.get("tps_sigma", t.tps_sigma);
      s.get("brightness_range", t.brightness_range);
      s.get("contrast_min", t.contrast_min);
      s.get("contrast_max", t.contrast_max);
      s.get("noise_std", t.noise_std);
      s.get("blur_gain", t.blur_gain);
      s.get("person_class", t.person_class);
      s.get("enable_tps", t.enable_tps);
      s.get("enable_blur", t.enable_blur);
      s.get("enable_perspective", t.enable_perspective);
      s.get("enable_lighting", t.enable_lighting);
    } else if (name == "eval") {
      EvalOptions& e = cfg.eval;
      s.get("conf_thresh", e.conf_thresh);
      s.get("nms_thresh", e.nms_thresh);
      s.get("match_iou", e.match_iou);
      s.get("tau", e.tau);
      s.get("randomize", e.randomize);
      s.get("cam_layer", e.cam_layer);
    } else if (name.rfind(kAdapterPrefix, 0) == 0) {
      AdapterSpec a;
      a.name = name.substr(std::string(kAdapterPrefix).size());
      if (a.name.empty()) throw InputError("config: adapter section needs a name");
      std::string kind = to_string(a.kind);
      s.get("kind", kind);
      fs::path weights;
      s.path("weights", weights, base_dir);
      a.weights = weights.string();
      s.get("input_height", a.input_height);
      s.get("input_width", a.input_width);
      s.get("person_class", a.person_class);
      s.get("seed", a.seed);
      s.get("grid", a.grid);
      s.get("classes", a.classes);
      s.get("channels", a.channels);
      s.get("person_gain", a.person_gain);
      try {
        a.kind = parse_detector_kind(kind);
      } catch (const ArgumentError& e) {
        throw InputError("[" + name + "] " + e.what());
      }
      cfg.adapters.push_back(a);
    } else {
      throw InputError("config: unknown section [" + name + "]");
    }
    s.finish();
  }

  cfg.train.seed = cfg.seed;
  cfg.eval.seed = cfg.seed;
  if (cfg.checkpoint_every < 0) throw ArgumentError("checkpoint_every must be >= 0");
  cfg.train.validate();
  cfg.transform.validate();
  for (const AdapterSpec& a : cfg.adapters) {
    if (a.input_height < 1 || a.input_width < 1) {
      throw ArgumentError("adapter " + a.name + ": input size must be positive");
    }
  }
  require_exists(cfg.images_dir, "dataset images directory");
  require_exists(cfg.labels_dir, "dataset labels directory");
  require_exists(cfg.palette_path, "palette file");
  if (cfg.train.init == InitMode::from_file) require_exists(cfg.train.init_file, "patch init file");
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open config: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), fs::absolute(path).parent_path());
}

std::string serialize_config(const RunConfig& cfg) {
  pt::ptree tree;
  auto put = [&](const std::string& key, const std::string& value) {
    tree.put(pt::ptree::path_type(key, '/'), value);
  };
  auto num = [](auto v) {
    if constexpr (std::is_floating_point_v<decltype(v)>) {
      return fmt(v);
    } else {
      return std::to_string(v);
    }
  };
  auto flag = [](bool b) { return std::string(b ? "true" : "false"); };

  put("run/seed", num(cfg.seed));
  put("run/checkpoint_every", num(cfg.checkpoint_every));
  put("dataset/images", cfg.images_dir.string());
  put("dataset/labels", cfg.labels_dir.string());
  put("palette/path", cfg.palette_path.string());
  put("output/dir", cfg.output_dir.string());

  const TrainConfig& t = cfg.train;
  put("train/epochs", num(t.epochs));
  put("train/batch_size", num(t.batch_size));
  put("train/max_steps", num(t.max_steps));
  put("train/patch_lr", num(t.patch_lr));
  put("train/nu", num(t.nu));
  put("train/gamma", num(t.gamma));
  put("train/mu", num(t.mu));
  put("train/mode", to_string(t.mode));
  put("train/fixed_weights", join(t.fixed_weights));
  put("train/patch_height", num(t.patch_height));
  put("train/patch_width", num(t.patch_width));
  put("train/init", to_string(t.init));
  put("train/init_file", t.init_file.string());
  put("train/eot_samples", num(t.eot_samples));
  put("train/shuffle", flag(t.shuffle));
  put("loss/alpha", num(t.loss_weights.alpha));
  put("loss/beta", num(t.loss_weights.beta));

  const TransformConfig& x = cfg.transform;
  put("transform/rotation_range_deg", num(x.rotation_range_deg));
  put("transform/translate_range", num(x.translate_range));
  put("transform/patch_scale", num(x.patch_scale));
  put("transform/tps_grid", num(x.tps_grid));
  put("transform/tps_sigma", num(x.tps_sigma));
  put("transform/brightness_range", num(x.brightness_range));
  put("transform/contrast_min", num(x.contrast_min));
  put("transform/contrast_max", num(x.contrast_max));
  put("transform/noise_std", num(x.noise_std));
  put("transform/blur_gain", num(x.blur_gain));
  put("transform/person_class", num(x.person_class));
  put("transform/enable_tps", flag(x.enable_tps));
  put("transform/enable_blur", flag(x.enable_blur));
  put("transform/enable_perspective", flag(x.enable_perspective));
  put("transform/enable_lighting", flag(x.enable_lighting));

  const EvalOptions& e = cfg.eval;
  put("eval/conf_thresh", num(e.conf_thresh));
  put("eval/nms_thresh", num(e.nms_thresh));
  put("eval/match_iou", num(e.match_iou));
  put("eval/tau", num(e.tau));
  put("eval/randomize", flag(e.randomize));
  put("eval/cam_layer", e.cam_layer);

  for (const AdapterSpec& a : cfg.adapters) {
    const std::string sec = std::string(kAdapterPrefix) + a.name + "/";
    put(sec + "kind", to_string(a.kind));
    put(sec + "weights", a.weights);
    put(sec + "input_height", num(a.input_height));
    put(sec + "input_width", num(a.input_width));
    put(sec + "person_class", num(a.person_class));
    put(sec + "seed", num(a.seed));
    put(sec + "grid", num(a.grid));
    put(sec + "classes", num(a.classes));
    put(sec + "channels", num(a.channels));
    put(sec + "person_gain", num(a.person_gain));
  }

  std::ostringstream out;
  pt::write_ini(out, tree);
  return out.str();
}

}  // namespace mmpatch
