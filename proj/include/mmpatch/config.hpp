#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmpatch/detectors.hpp"
#include "mmpatch/ensemble.hpp"
#include "mmpatch/evaluation.hpp"
#include "mmpatch/transforms.hpp"

namespace mmpatch {

/// Everything a CLI run needs. Loaded from an INI-style file:
///
///   [run]        seed, checkpoint_every
///   [dataset]    images, labels
///   [palette]    path
///   [output]     dir
///   [train]      TrainConfig fields
///   [loss]       alpha, beta
///   [transform]  TransformConfig fields
///   [eval]       EvalOptions fields
///   [adapter:NAME]  one section per detector, in ensemble order
///
/// Relative paths resolve against the config file's directory.
struct RunConfig {
  std::uint64_t seed = 0;
  long checkpoint_every = 0;
  std::filesystem::path images_dir;
  std::filesystem::path labels_dir;
  std::filesystem::path palette_path;
  std::filesystem::path output_dir = "out";
  TrainConfig train;
  TransformConfig transform;
  EvalOptions eval;
  std::vector<AdapterSpec> adapters;

  /// Replaces the run seed everywhere it is used.
  void set_seed(std::uint64_t s);
};

/// Throws InputError on syntax errors, unknown sections/keys, unparsable
/// values, and referenced paths that do not exist; ArgumentError on values
/// outside their documented ranges.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// Inverse of parse_config (paths are written as stored, i.e. resolved).
std::string serialize_config(const RunConfig& cfg);

}  // namespace mmpatch
