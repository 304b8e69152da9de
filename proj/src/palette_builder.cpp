#include "mmpatch/palette_builder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mmpatch/errors.hpp"

namespace mmpatch {

namespace {

double distance(const Color& a, const Color& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]));
}

}  // namespace

std::vector<Color> parse_colors(const std::string& text, const std::string& source) {
  std::vector<Color> colors;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Color c;
    std::string extra;
    if (!(ls >> c[0] >> c[1] >> c[2]) || (ls >> extra)) {
      throw InputError(source + ":" + std::to_string(lineno) + ": expected three comma-separated values");
    }
    for (double v : c) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw InputError(source + ":" + std::to_string(lineno) + ": channel outside [0,1]");
      }
    }
    colors.push_back(c);
  }
  return colors;
}

std::vector<Color> read_colors(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open color file: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_colors(ss.str(), path.string());
}

PrintPalette read_palette(const std::filesystem::path& path) {
  auto colors = read_colors(path);
  if (colors.empty()) throw InputError("palette file has no colors: " + path.string());
  try {
    return PrintPalette(std::move(colors));
  } catch (const ArgumentError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_palette(const std::filesystem::path& path, const std::vector<Color>& colors) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write palette: " + path.string());
  f << "# r, g, b in [0,1]\n";
  char buf[96];
  for (const Color& c : colors) {
    std::snprintf(buf, sizeof(buf), "%.6f, %.6f, %.6f\n", c[0], c[1], c[2]);
    f << buf;
  }
  if (!f) throw InputError("write failed: " + path.string());
}

double coverage_radius(const std::vector<Color>& colors, const std::vector<Color>& reps) {
  double worst = 0.0;
  for (const Color& c : colors) {
    double best = INFINITY;
    for (const Color& r : reps) best = std::min(best, distance(c, r));
    worst = std::max(worst, best);
  }
  return worst;
}

PrintPalette build_palette(const std::vector<Color>& measured, int target_count) {
  if (measured.empty()) throw ArgumentError("no measured colors");
  if (target_count < 1) throw ArgumentError("target_count must be >= 1");

  std::vector<Color> unique = measured;
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (unique.size() <= static_cast<std::size_t>(target_count)) return PrintPalette(unique);

  std::vector<Color> chosen{unique.front()};
  std::vector<double> nearest(unique.size());
  for (std::size_t i = 0; i < unique.size(); ++i) nearest[i] = distance(unique[i], chosen[0]);
  while (chosen.size() < static_cast<std::size_t>(target_count)) {
    // Farthest remaining color; ties go to the lexicographically first.
    const std::size_t far = static_cast<std::size_t>(
        std::max_element(nearest.begin(), nearest.end()) - nearest.begin());
    chosen.push_back(unique[far]);
    for (std::size_t i = 0; i < unique.size(); ++i) {
      nearest[i] = std::min(nearest[i], distance(unique[i], unique[far]));
    }
  }
  return PrintPalette(std::move(chosen));
}

}  // namespace mmpatch
