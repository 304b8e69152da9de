#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mmpatch/transforms.hpp"

namespace mmpatch {

/// Parses "class_id cx cy w h" lines. Blank lines are skipped. Throws
/// InputError naming the file and line on malformed or out-of-range rows.
std::vector<BoundingBox> parse_labels(const std::string& text, const std::string& source);
std::vector<BoundingBox> read_labels(const std::filesystem::path& path);
std::string format_labels(const std::vector<BoundingBox>& boxes);

struct DatasetEntry {
  std::filesystem::path image;
  std::filesystem::path label;
};

/// Image/label pairs sorted by the byte order of the image file names.
struct DatasetIndex {
  std::vector<DatasetEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

/// Indexes every *.png in images_dir; each needs <stem>.txt in labels_dir.
/// Throws InputError listing images without a label file.
DatasetIndex index_dataset(const std::filesystem::path& images_dir,
                           const std::filesystem::path& labels_dir);

LabeledImage load_sample(const DatasetEntry& entry);

/// Indexes and decodes the whole dataset.
struct LoadedDataset {
  DatasetIndex index;
  std::vector<LabeledImage> samples;
  std::vector<std::string> names;  ///< image file names
};

LoadedDataset load_dataset(const std::filesystem::path& images_dir,
                           const std::filesystem::path& labels_dir);

}  // namespace mmpatch
