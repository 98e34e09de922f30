#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tthf/common.hpp"

namespace tthf {

/// Interleaved 8-bit RGB image, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0) {}

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const Image& o) const {
    return width == o.width && height == o.height && data == o.data;
  }
};

/// Decode an image file. Throws IoError when unreadable and ValidationError
/// when the file does not hold 3-channel color data.
Image load_image(const std::filesystem::path& path);

/// Encode as JPEG (quality 95). Throws IoError on failure.
void save_image_jpg(const Image& img, const std::filesystem::path& path);

/// Bilinear resize with half-pixel center alignment. Output is an
/// (out_h*out_w) x 3 matrix of values still in [0, 255], row index y*out_w + x.
Eigen::MatrixXd resize_bilinear(const Image& src, int out_w, int out_h);

}  // namespace tthf
