#include "mmpatch/export.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mmpatch/errors.hpp"
#include "mmpatch/image_io.hpp"
#include "mmpatch/rng.hpp"

namespace fs = std::filesystem;

namespace mmpatch {

namespace {

// Stream tags keep export and preview draws apart from training draws.
constexpr std::uint64_t kExportStream = 0x4558504F5254;
constexpr std::uint64_t kPreviewStream = 0x50524556;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw InputError("cannot write " + path.string());
}

}  // namespace

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw InputError("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_digest(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return fnv1a64(ss.str());
}

std::size_t export_adv_dataset(const Patch& patch, const LoadedDataset& dataset,
                               const TransformConfig& cfg, const ExportOptions& options,
                               const fs::path& out_dir) {
  ensure_directory(out_dir);
  const std::size_t n = dataset.samples.size();
  for (std::size_t i = 0; i < n; ++i) {
    const LabeledImage& sample = dataset.samples[i];
    TransformConfig tc = cfg;
    RandomDraw draw;
    if (options.randomize) {
      draw = draw_transforms(cfg, options.seed, kExportStream, i, sample);
    } else {
      std::size_t persons = 0;
      for (const BoundingBox& b : sample.boxes) persons += b.class_id == cfg.person_class;
      draw = RandomDraw::identity(persons);
      tc.enable_lighting = false;
    }
    const LabeledImage adv = apply_patch(patch, sample, tc, draw);
    const std::string stem = fs::path(dataset.names[i]).stem().string();
    write_png(out_dir / (stem + ".png"), adv.image);
    write_text(out_dir / (stem + ".txt"), format_labels(sample.boxes));
  }
  return n;
}

std::vector<fs::path> write_previews(const Patch& patch, const LoadedDataset& dataset,
                                     const TransformConfig& cfg, std::uint64_t seed, int count,
                                     const fs::path& out_dir) {
  if (count < 0) throw ArgumentError("preview count must be >= 0");
  if (count > 0 && dataset.samples.empty()) throw InputError("preview needs a nonempty dataset");
  ensure_directory(out_dir);
  std::vector<fs::path> written;
  for (int k = 0; k < count; ++k) {
    const std::size_t i = static_cast<std::size_t>(k) % dataset.samples.size();
    const LabeledImage& sample = dataset.samples[i];
    const RandomDraw draw =
        draw_transforms(cfg, seed, kPreviewStream + static_cast<std::uint64_t>(k), i, sample);
    const LabeledImage adv = apply_patch(patch, sample, cfg, draw);
    char name[32];
    std::snprintf(name, sizeof(name), "preview_%03d.png", k);
    write_png(out_dir / name, adv.image);
    written.push_back(out_dir / name);
  }
  return written;
}

void write_checkpoint(const fs::path& dir, const std::string& stem, long step, std::uint64_t seed,
                      const Patch& patch, const EnsembleWeights& w) {
  ensure_directory(dir);
  const fs::path png = dir / (stem + ".png");
  write_png(png, patch.pixels());

  // Training randomness is a pure function of (seed, step), so this digest
  // pins down every draw of the next step.
  const std::uint64_t state = derive_seed({seed, static_cast<std::uint64_t>(step)});
  std::ostringstream out;
  char buf[64];
  out << "step " << step << "\n";
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state));
  out << "rng_digest " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(file_digest(png)));
  out << "patch_digest " << buf << "\n";
  out << "weights";
  for (double v : w.values()) {
    std::snprintf(buf, sizeof(buf), " %.17g", v);
    out << buf;
  }
  out << "\n";
  write_text(dir / (stem + ".txt"), out.str());
}

}  // namespace mmpatch
