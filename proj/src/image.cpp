#include "mmpatch/image.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "mmpatch/errors.hpp"

namespace mmpatch {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw ArgumentError("image dimensions must be nonnegative");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

void Image::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Image& Image::operator+=(const Image& other) {
  if (!same_shape(other)) throw ArgumentError("image shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Image& Image::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double max_value(const Image& img) {
  auto v = img.values();
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  return *std::max_element(v.begin(), v.end());
}

double sum(const Image& img) {
  auto v = img.values();
  return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace mmpatch
