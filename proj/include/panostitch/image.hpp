#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace panostitch {

/// Raised when an operation receives arguments outside its domain
/// (dimension mismatch, out-of-range coordinates, invalid configuration).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Dense row-major, channel-interleaved raster. Used for images (1 or 3
/// channels), color-curve maps, weight maps and control grids.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int height, int width, int channels, T fill = T(0))
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels <= 0) {
      throw DomainError("Image: invalid shape " + std::to_string(height) + "x" +
                        std::to_string(width) + "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  const T& at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  T* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_ * channels_; }
  const T* row(int y) const {
    return data_.data() + static_cast<std::size_t>(y) * width_ * channels_;
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool same_grid(int height, int width) const { return height_ == height && width_ == width; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Image<U> cast() const {
    Image<U> out(height_, width_, channels_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.storage()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Image& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using ImageF = Image<float>;
using ImageD = Image<double>;

/// Binary mask over a pixel grid (0 or 1 per pixel).
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  bool at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int y, int x, bool v) { data_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  std::uint8_t operator[](std::size_t i) const { return data_[i]; }

  std::size_t count() const;
  bool any() const { return count() > 0; }
  bool same_grid(int height, int width) const { return height_ == height && width_ == width; }
  const std::vector<std::uint8_t>& storage() const { return data_; }

  Mask operator&(const Mask& other) const;
  Mask operator|(const Mask& other) const;
  bool operator==(const Mask& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Per-output-pixel source coordinates (sx, sy) in input-image pixels.
/// Pixel (i, j) covers [i, i+1) x [j, j+1); its center is (i + 0.5, j + 0.5).
/// Coordinates outside the source bounds are legal and denote invalid taps.
template <typename T>
class WarpField {
 public:
  WarpField() = default;
  WarpField(int height, int width) : coords_(height, width, 2) {}
  explicit WarpField(Image<T> coords) : coords_(std::move(coords)) {
    if (coords_.channels() != 2) throw DomainError("WarpField: expected 2 channels");
  }

  /// Field whose every pixel samples its own center.
  static WarpField identity(int height, int width) {
    WarpField f(height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        f.sx(y, x) = static_cast<T>(x + 0.5);
        f.sy(y, x) = static_cast<T>(y + 0.5);
      }
    return f;
  }

  int height() const { return coords_.height(); }
  int width() const { return coords_.width(); }
  T& sx(int y, int x) { return coords_.at(y, x, 0); }
  T& sy(int y, int x) { return coords_.at(y, x, 1); }
  const T& sx(int y, int x) const { return coords_.at(y, x, 0); }
  const T& sy(int y, int x) const { return coords_.at(y, x, 1); }

  Image<T>& coords() { return coords_; }
  const Image<T>& coords() const { return coords_; }
  bool same_grid(const WarpField& o) const { return coords_.same_shape(o.coords_); }

  template <typename U>
  WarpField<U> cast() const {
    return WarpField<U>(coords_.template cast<U>());
  }

  bool operator==(const WarpField& other) const = default;

 private:
  Image<T> coords_;
};

/// Converts a mask into a 1-channel 0/1 image.
template <typename T>
Image<T> mask_to_image(const Mask& m) {
  Image<T> out(m.height(), m.width(), 1);
  for (std::size_t i = 0; i < m.size(); ++i) out.storage()[i] = m[i] ? T(1) : T(0);
  return out;
}

/// Thresholds channel 0 (> 0.5) into a mask.
template <typename T>
Mask image_to_mask(const Image<T>& img) {
  Mask m(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) m.set(y, x, img.at(y, x, 0) > T(0.5));
  return m;
}

/// Zeroes every pixel where the mask is 0.
template <typename T>
Image<T> apply_mask(const Image<T>& img, const Mask& m) {
  if (!m.same_grid(img.height(), img.width())) throw DomainError("apply_mask: size mismatch");
  Image<T> out = img;
  const int c = img.channels();
  for (std::size_t p = 0; p < m.size(); ++p)
    if (!m[p])
      for (int k = 0; k < c; ++k) out.storage()[p * c + k] = T(0);
  return out;
}

/// Clamps every value to [0, 1].
template <typename T>
Image<T> clamp01(Image<T> img) {
  for (auto& v : img.storage()) v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
  return img;
}

}  // namespace panostitch
