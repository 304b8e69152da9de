#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mmpatch/patch.hpp"

namespace mmpatch {

/// Palette text format: one "r, g, b" line per color (decimals in [0,1]);
/// lines starting with '#' and blank lines are ignored.
std::vector<Color> parse_colors(const std::string& text, const std::string& source);
std::vector<Color> read_colors(const std::filesystem::path& path);
PrintPalette read_palette(const std::filesystem::path& path);
void write_palette(const std::filesystem::path& path, const std::vector<Color>& colors);

/// Largest distance from any color to its nearest representative.
double coverage_radius(const std::vector<Color>& colors, const std::vector<Color>& representatives);

/// Reduces measured printer colors to at most target_count representatives.
/// Duplicates collapse first; if few enough remain they are returned as-is
/// (sorted). Otherwise greedy farthest-point (k-center) selection starting
/// from the lexicographically smallest color, which is within 2x of the
/// optimal coverage radius.
PrintPalette build_palette(const std::vector<Color>& measured, int target_count = 30);

}  // namespace mmpatch
