// Command-line front end: train, eval, preview, palette, export-adv.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "mmpatch/config.hpp"
#include "mmpatch/dataset.hpp"
#include "mmpatch/detectors.hpp"
#include "mmpatch/ensemble.hpp"
#include "mmpatch/errors.hpp"
#include "mmpatch/evaluation.hpp"
#include "mmpatch/export.hpp"
#include "mmpatch/grad_cam.hpp"
#include "mmpatch/image_io.hpp"
#include "mmpatch/palette_builder.hpp"
#include "mmpatch/rng.hpp"
#include "mmpatch/sampling.hpp"

namespace fs = std::filesystem;
using namespace mmpatch;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration file (default: $MMPATCH_CONFIG)");
  cmd->add_option("--seed", c.seed, "override the configured seed");
}

RunConfig load(const Common& c) {
  std::string path = c.config;
  if (path.empty()) {
    if (const char* env = std::getenv("MMPATCH_CONFIG")) path = env;
  }
  if (path.empty()) throw ArgumentError("no config given (use --config or MMPATCH_CONFIG)");
  RunConfig cfg = load_config(path);
  if (c.seed) cfg.set_seed(*c.seed);
  return cfg;
}

LoadedDataset load_data(const RunConfig& cfg) {
  if (cfg.images_dir.empty() || cfg.labels_dir.empty()) {
    throw InputError("config has no [dataset] images/labels");
  }
  return load_dataset(cfg.images_dir, cfg.labels_dir);
}

std::vector<std::unique_ptr<DetectorAdapter>> make_adapters(const RunConfig& cfg) {
  if (cfg.adapters.empty()) throw InputError("config defines no [adapter:NAME] sections");
  std::vector<std::unique_ptr<DetectorAdapter>> out;
  for (const AdapterSpec& spec : cfg.adapters) out.push_back(DetectorRegistry::instance().create(spec));
  return out;
}

Patch load_patch(const std::string& path) { return Patch(read_png(path)); }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw InputError("cannot write " + path.string());
}

int run_train(const Common& c) {
  const RunConfig cfg = load(c);
  if (cfg.palette_path.empty()) throw InputError("train needs [palette] path");
  const PrintPalette palette = read_palette(cfg.palette_path);
  const LoadedDataset data = load_data(cfg);
  const auto owned = make_adapters(cfg);
  std::vector<const DetectorAdapter*> adapters;
  for (const auto& a : owned) adapters.push_back(a.get());

  ensure_directory(cfg.output_dir);
  StepCallback on_step;
  if (cfg.checkpoint_every > 0) {
    on_step = [&](const TrainLogRow& row, const Patch& p, const EnsembleWeights& w) {
      const long done = row.step + 1;
      if (done % cfg.checkpoint_every == 0) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "step_%06ld", done);
        write_checkpoint(cfg.output_dir / "checkpoints", stem, done, cfg.seed, p, w);
      }
    };
  }
  const TrainResult result =
      train(data.samples, adapters, cfg.train, cfg.transform, palette, on_step);

  write_png(cfg.output_dir / "patch.png", result.patch.pixels());
  std::ofstream log(cfg.output_dir / "log.csv", std::ios::binary);
  write_train_log_csv(log, result.log, adapters.size());
  if (!log) throw InputError("cannot write " + (cfg.output_dir / "log.csv").string());
  write_checkpoint(cfg.output_dir, "final", static_cast<long>(result.log.size()), cfg.seed,
                   result.patch, result.weights);
  std::cout << "trained " << result.log.size() << " steps; wrote "
            << (cfg.output_dir / "patch.png").string() << "\n";
  return 0;
}

int run_eval(const Common& c, const std::string& patch_path, std::string report_path) {
  const RunConfig cfg = load(c);
  const Patch patch = load_patch(patch_path);
  const LoadedDataset data = load_data(cfg);
  const auto owned = make_adapters(cfg);
  ensure_directory(cfg.output_dir);

  std::vector<EvalReport> reports;
  for (const auto& adapter : owned) {
    EvalReport r = evaluate_patch(patch, data.samples, data.names, *adapter, cfg.transform, cfg.eval);
    const std::string name = adapter->info().name;
    write_png(cfg.output_dir / ("histogram_" + name + ".png"), render_bar_chart(r.class_counts));

    // Heatmaps for the first image with a person, when the detector exposes a layer.
    const auto* cam = dynamic_cast<const CamModel*>(adapter.get());
    if (cam && !cfg.eval.cam_layer.empty()) {
      for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const LabeledImage& s = data.samples[i];
        std::size_t persons = 0;
        for (const BoundingBox& b : s.boxes) persons += b.class_id == cfg.transform.person_class;
        if (persons == 0) continue;
        TransformConfig tc = cfg.transform;
        tc.enable_lighting = false;
        Image adv = apply_patch(patch, s, tc, RandomDraw::identity(persons)).image;
        Image clean = s.image;
        const DetectorInfo info = adapter->info();
        if (clean.height() != info.input_height || clean.width() != info.input_width) {
          const SampleMap m = resize_map(clean.height(), clean.width(), info.input_height, info.input_width);
          clean = m.apply(clean);
          adv = m.apply(adv);
        }
        const CamTarget target{info.person_class, -1};
        write_png(cfg.output_dir / ("heatmap_clean_" + name + ".png"),
                  colorize(grad_cam(*cam, clean, target, cfg.eval.cam_layer)));
        write_png(cfg.output_dir / ("heatmap_adv_" + name + ".png"),
                  colorize(grad_cam(*cam, adv, target, cfg.eval.cam_layer)));
        break;
      }
    }
    std::cout << name << ": ap_clean=" << r.ap_clean << " ap_adv=" << r.ap_adv
              << " asr=" << r.asr << "\n";
    reports.push_back(std::move(r));
  }
  if (report_path.empty()) report_path = (cfg.output_dir / "report.json").string();
  write_file(report_path, report_json(reports));
  std::cout << "wrote " << report_path << "\n";
  return 0;
}

Patch patch_or_init(const RunConfig& cfg, const std::string& patch_path) {
  if (!patch_path.empty()) return load_patch(patch_path);
  return init_patch(cfg.train.patch_height, cfg.train.patch_width, cfg.train.init,
                    derive_seed({cfg.seed, 0x7061746368}), cfg.train.init_file);
}

int run_preview(const Common& c, const std::string& patch_path, int count, std::string out) {
  const RunConfig cfg = load(c);
  const LoadedDataset data = load_data(cfg);
  const Patch patch = patch_or_init(cfg, patch_path);
  const fs::path dir = out.empty() ? cfg.output_dir / "preview" : fs::path(out);
  const auto written = write_previews(patch, data, cfg.transform, cfg.seed, count, dir);
  std::cout << "wrote " << written.size() << " previews to " << dir.string() << "\n";
  return 0;
}

int run_palette(const Common& c, const std::string& input, int target, std::string out) {
  if (out.empty()) {
    const RunConfig cfg = load(c);
    out = cfg.palette_path.empty() ? (cfg.output_dir / "palette.txt").string()
                                   : cfg.palette_path.string();
  }
  const PrintPalette palette = build_palette(read_colors(input), target);
  write_palette(out, palette.colors());
  std::cout << "wrote " << palette.size() << " colors to " << out << "\n";
  return 0;
}

int run_export(const Common& c, const std::string& patch_path, std::string out, bool identity) {
  const RunConfig cfg = load(c);
  const Patch patch = load_patch(patch_path);
  const LoadedDataset data = load_data(cfg);
  const fs::path dir = out.empty() ? cfg.output_dir / "adv_dataset" : fs::path(out);
  const std::size_t n =
      export_adv_dataset(patch, data, cfg.transform, ExportOptions{cfg.seed, !identity}, dir);
  std::cout << "exported " << n << " samples to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmpatch: adversarial patch training against detector ensembles"};
  app.require_subcommand(1);

  Common common;
  std::string patch_path, out, report, input;
  int count = 4, target = 30;
  bool identity = false;

  auto* train_cmd = app.add_subcommand("train", "train a patch; writes patch.png and log.csv");
  add_common(train_cmd, common);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a patch; writes report.json");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--patch", patch_path, "patch PNG")->required();
  eval_cmd->add_option("--report", report, "report path (default: <output>/report.json)");

  auto* preview_cmd = app.add_subcommand("preview", "write composited samples as PNG");
  add_common(preview_cmd, common);
  preview_cmd->add_option("--patch", patch_path, "patch PNG (default: configured init)");
  preview_cmd->add_option("--count", count, "number of samples")->check(CLI::NonNegativeNumber);
  preview_cmd->add_option("--out", out, "output directory (default: <output>/preview)");

  auto* palette_cmd = app.add_subcommand("palette", "reduce measured colors to a print palette");
  add_common(palette_cmd, common);
  palette_cmd->add_option("--input", input, "measured colors file")->required();
  palette_cmd->add_option("--target", target, "palette size")->check(CLI::PositiveNumber);
  palette_cmd->add_option("--out", out, "palette path (default: configured palette path)");

  auto* export_cmd = app.add_subcommand("export-adv", "write a patched copy of the dataset");
  add_common(export_cmd, common);
  export_cmd->add_option("--patch", patch_path, "patch PNG")->required();
  export_cmd->add_option("--out", out, "output directory (default: <output>/adv_dataset)");
  export_cmd->add_flag("--identity", identity, "no random transforms or lighting");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return run_train(common);
    if (*eval_cmd) return run_eval(common, patch_path, report);
    if (*preview_cmd) return run_preview(common, patch_path, count, out);
    if (*palette_cmd) return run_palette(common, input, target, out);
    if (*export_cmd) return run_export(common, patch_path, out, identity);
  } catch (const TrainingError& e) {
    std::cerr << "error: training failed at step " << e.step()
              << (e.diverged() ? " (diverged)" : "") << ": " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
