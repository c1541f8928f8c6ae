#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cvhct/errors.hpp"

namespace cvhct {

/// Dense row-major 2-D raster.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(checked_size(height, width), fill) {}
  Image(int height, int width, std::vector<T> data) : height_(height), width_(width) {
    if (data.size() != checked_size(height, width)) {
      throw ShapeError("image payload does not match " + std::to_string(height) + "x" +
                       std::to_string(width));
    }
    data_ = std::move(data);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int row, int col) noexcept {
    return data_[static_cast<std::size_t>(row) * width_ + col];
  }
  const T& operator()(int row, int col) const noexcept {
    return data_[static_cast<std::size_t>(row) * width_ + col];
  }

  std::span<T> pixels() noexcept { return data_; }
  std::span<const T> pixels() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  /// Copy of the size x size window whose top-left corner is (row, col).
  Image crop(int row, int col, int rows, int cols) const {
    if (row < 0 || col < 0 || rows <= 0 || cols <= 0 || row + rows > height_ ||
        col + cols > width_) {
      throw ShapeError("crop window outside image");
    }
    Image out(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) out(r, c) = (*this)(row + r, col + c);
    }
    return out;
  }

  bool operator==(const Image&) const = default;

 private:
  static std::size_t checked_size(int h, int w) {
    if (h < 0 || w < 0) throw ShapeError("negative image dimension");
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

/// Elementwise conversion between pixel types.
template <typename To, typename From>
Image<To> image_cast(const Image<From>& in) {
  std::vector<To> out(in.size());
  auto src = in.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(src[i]);
  return Image<To>(in.height(), in.width(), std::move(out));
}

}  // namespace cvhct
