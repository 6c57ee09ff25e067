#include "tae/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "tae/error.hpp"

namespace tae {
namespace {

cv::Mat to_mat_bgr(const Image& img) {
  if (img.channels != 3) throw InvalidInput("expected a three-channel image");
  cv::Mat mat(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      row[3 * x + 0] = img.at(x, y, 2);
      row[3 * x + 1] = img.at(x, y, 1);
      row[3 * x + 2] = img.at(x, y, 0);
    }
  }
  return mat;
}

Image from_mat_bgr(const cv::Mat& mat) {
  cv::Mat bgr;
  if (mat.channels() == 1) {
    cv::Mat planes[] = {mat, mat, mat};
    cv::merge(planes, 3, bgr);
  } else if (mat.channels() == 4) {
    std::vector<cv::Mat> planes;
    cv::split(mat, planes);
    planes.resize(3);
    cv::merge(planes, bgr);
  } else {
    bgr = mat;
  }
  Image img(bgr.cols, bgr.rows, 3);
  for (int y = 0; y < img.height; ++y) {
    const auto* row = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      img.at(x, y, 0) = row[3 * x + 2];
      img.at(x, y, 1) = row[3 * x + 1];
      img.at(x, y, 2) = row[3 * x + 0];
    }
  }
  return img;
}

}  // namespace

std::vector<float> to_float(const Image& img) {
  return std::vector<float>(img.pixels.begin(), img.pixels.end());
}

Image from_float(std::span<const float> values, int width, int height, int channels) {
  Image img(width, height, channels);
  if (values.size() != img.pixels.size()) throw ShapeError("pixel buffer size mismatch");
  std::transform(values.begin(), values.end(), img.pixels.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  });
  return img;
}

std::vector<float> luminance(const Image& img) {
  std::vector<float> out(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto* p = &img.pixels[i * img.channels];
    out[i] = img.channels >= 3
                 ? (0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2]) / 255.0f
                 : p[0] / 255.0f;
  }
  return out;
}

bool window_fits(double cx, double cy, int size, int width, int height) {
  if (!std::isfinite(cx) || !std::isfinite(cy)) return false;
  const int x0 = window_origin(cx, size);
  const int y0 = window_origin(cy, size);
  return x0 >= 0 && y0 >= 0 && x0 + size <= width && y0 + size <= height;
}

Image crop_patch(const Image& img, double cx, double cy, int size) {
  if (!window_fits(cx, cy, size, img.width, img.height)) {
    throw InvalidInput("patch window leaves the image");
  }
  const int x0 = window_origin(cx, size);
  const int y0 = window_origin(cy, size);
  Image out(size, size, img.channels);
  const std::size_t row_bytes = static_cast<std::size_t>(size) * img.channels;
  for (int y = 0; y < size; ++y) {
    const auto* src = &img.pixels[(static_cast<std::size_t>(y0 + y) * img.width + x0) * img.channels];
    std::copy(src, src + row_bytes, &out.pixels[y * row_bytes]);
  }
  return out;
}

Image read_image(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw FileError("cannot read image: " + path.string());
  if (mat.depth() != CV_8U) {
    cv::Mat converted;
    mat.convertTo(converted, CV_8U, mat.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
    mat = converted;
  }
  return from_mat_bgr(mat);
}

void write_image(const Image& img, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), to_mat_bgr(img))) {
    throw FileError("cannot write image: " + path.string());
  }
}

Image jpeg_roundtrip(const Image& img, int quality) {
  std::vector<std::uint8_t> buffer;
  const std::vector<int> params = {cv::IMWRITE_JPEG_QUALITY, std::clamp(quality, 1, 100)};
  if (!cv::imencode(".jpg", to_mat_bgr(img), buffer, params)) {
    throw Error("jpeg encoding failed");
  }
  return from_mat_bgr(cv::imdecode(buffer, cv::IMREAD_COLOR));
}

}  // namespace tae
