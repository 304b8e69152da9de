#pragma once

#include <filesystem>

#include "mmpatch/image.hpp"

namespace mmpatch {

/// Decodes any PNG to 8-bit RGB and returns values v/255 in [0, 1].
/// Throws InputError if the file is missing or not a decodable PNG.
Image read_png(const std::filesystem::path& path);

/// Writes an 8-bit PNG storing round(clamp(v, 0, 1) * 255). One-channel
/// images are written as grayscale, three-channel images as RGB.
void write_png(const std::filesystem::path& path, const Image& img);

/// Quantize exactly as write_png does.
unsigned char to_byte(double v);

}  // namespace mmpatch
