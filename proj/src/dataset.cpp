#include "mmpatch/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mmpatch/errors.hpp"
#include "mmpatch/image_io.hpp"

namespace fs = std::filesystem;

namespace mmpatch {

std::vector<BoundingBox> parse_labels(const std::string& text, const std::string& source) {
  std::vector<BoundingBox> boxes;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    BoundingBox b;
    std::string extra;
    if (!(ls >> b.class_id >> b.cx >> b.cy >> b.w >> b.h) || (ls >> extra)) {
      throw InputError(source + ":" + std::to_string(lineno) +
                       ": expected 'class_id cx cy w h', got '" + line + "'");
    }
    if (b.class_id < 0) {
      throw InputError(source + ":" + std::to_string(lineno) + ": negative class id");
    }
    if (const std::string why = box_violation(b); !why.empty()) {
      throw InputError(source + ":" + std::to_string(lineno) + ": " + why);
    }
    boxes.push_back(b);
  }
  return boxes;
}

std::vector<BoundingBox> read_labels(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open label file: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_labels(ss.str(), path.string());
}

std::string format_labels(const std::vector<BoundingBox>& boxes) {
  std::string out;
  char buf[160];
  for (const BoundingBox& b : boxes) {
    std::snprintf(buf, sizeof(buf), "%d %.17g %.17g %.17g %.17g\n", b.class_id, b.cx, b.cy, b.w, b.h);
    out += buf;
  }
  return out;
}

DatasetIndex index_dataset(const fs::path& images_dir, const fs::path& labels_dir) {
  if (!fs::is_directory(images_dir)) throw InputError("not a directory: " + images_dir.string());
  if (!fs::is_directory(labels_dir)) throw InputError("not a directory: " + labels_dir.string());

  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(images_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") images.push_back(e.path());
  }
  std::sort(images.begin(), images.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });

  DatasetIndex idx;
  std::string missing;
  for (const fs::path& img : images) {
    fs::path label = labels_dir / img.stem();
    label += ".txt";
    if (!fs::is_regular_file(label)) {
      missing += "\n  " + img.filename().string();
      continue;
    }
    idx.entries.push_back({img, label});
  }
  if (!missing.empty()) throw InputError("images without a label file:" + missing);
  return idx;
}

LabeledImage load_sample(const DatasetEntry& entry) {
  return LabeledImage{read_png(entry.image), read_labels(entry.label)};
}

LoadedDataset load_dataset(const fs::path& images_dir, const fs::path& labels_dir) {
  LoadedDataset ds;
  ds.index = index_dataset(images_dir, labels_dir);
  for (const DatasetEntry& e : ds.index.entries) {
    ds.samples.push_back(load_sample(e));
    ds.names.push_back(e.image.filename().string());
  }
  return ds;
}

}  // namespace mmpatch
