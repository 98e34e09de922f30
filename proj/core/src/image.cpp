#include "tthf/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

namespace tthf {

Image load_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) {
    throw IoError("failed to decode image: " + path.string());
  }
  if (m.channels() != 3 || m.depth() != CV_8U) {
    throw ValidationError("not an 8-bit RGB image (" + std::to_string(m.channels()) +
                          " channels): " + path.string());
  }
  Image img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV decodes BGR.
      img.at(x, y, 0) = row[x][2];
      img.at(x, y, 1) = row[x][1];
      img.at(x, y, 2) = row[x][0];
    }
  }
  return img;
}

void save_image_jpg(const Image& img, const std::filesystem::path& path) {
  if (img.width <= 0 || img.height <= 0) throw ValidationError("save_image_jpg: empty image");
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      row[x][2] = img.at(x, y, 0);
      row[x][1] = img.at(x, y, 1);
      row[x][0] = img.at(x, y, 2);
    }
  }
  if (!cv::imwrite(path.string(), m, {cv::IMWRITE_JPEG_QUALITY, 95})) {
    throw IoError("failed to write image: " + path.string());
  }
}

Eigen::MatrixXd resize_bilinear(const Image& src, int out_w, int out_h) {
  if (src.width < 1 || src.height < 1) throw ValidationError("resize_bilinear: empty source");
  if (out_w < 1 || out_h < 1) throw ValidationError("resize_bilinear: empty target");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(out_w) * out_h, 3);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      const Eigen::Index r = static_cast<Eigen::Index>(oy) * out_w + ox;
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c);
        const double bot = (1.0 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c);
        out(r, c) = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

}  // namespace tthf
