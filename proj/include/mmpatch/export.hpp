#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mmpatch/dataset.hpp"
#include "mmpatch/ensemble.hpp"
#include "mmpatch/patch.hpp"
#include "mmpatch/transforms.hpp"

namespace mmpatch {

struct ExportOptions {
  std::uint64_t seed = 0;
  bool randomize = true;  ///< false: identity placement, no lighting
};

/// Composites the patch onto every image and writes <name>.png plus a copy
/// of its label file into out_dir. Returns the number of samples written.
/// Output bytes depend only on the inputs and options.seed.
std::size_t export_adv_dataset(const Patch& patch, const LoadedDataset& dataset,
                               const TransformConfig& cfg, const ExportOptions& options,
                               const std::filesystem::path& out_dir);

/// Writes `count` composited training-style samples (preview_000.png, ...)
/// cycling through the dataset. Returns the written paths.
std::vector<std::filesystem::path> write_previews(const Patch& patch, const LoadedDataset& dataset,
                                                  const TransformConfig& cfg, std::uint64_t seed,
                                                  int count, const std::filesystem::path& out_dir);

/// 64-bit FNV-1a, used for file and state digests.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t file_digest(const std::filesystem::path& path);

/// Writes <stem>.png and <stem>.txt. The sidecar holds the step count, a
/// digest of the random state that drives the following step, and w.
void write_checkpoint(const std::filesystem::path& dir, const std::string& stem, long step,
                      std::uint64_t seed, const Patch& patch, const EnsembleWeights& w);

/// Throws InputError naming the path when the directory cannot be created.
void ensure_directory(const std::filesystem::path& dir);

}  // namespace mmpatch
