#include "tae/keypoints.hpp"

#include <algorithm>
#include <cmath>

#include "tae/error.hpp"

namespace tae {
namespace {

struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> v;

  float at(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return v[static_cast<std::size_t>(y) * width + x];
  }
};

Plane gaussian(const Plane& in, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = static_cast<float>(std::exp(-(i * i) / (2 * sigma * sigma)));
    sum += k[i + radius];
  }
  for (auto& w : k) w = static_cast<float>(w / sum);

  Plane tmp{in.width, in.height, std::vector<float>(in.v.size())};
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      float acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * in.at(x + i, y);
      tmp.v[static_cast<std::size_t>(y) * in.width + x] = acc;
    }
  }
  Plane out{in.width, in.height, std::vector<float>(in.v.size())};
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      float acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp.at(x, y + i);
      out.v[static_cast<std::size_t>(y) * in.width + x] = acc;
    }
  }
  return out;
}

Plane hessian_response(const Plane& luma, double sigma) {
  const Plane l = gaussian(luma, sigma);
  Plane r{l.width, l.height, std::vector<float>(l.v.size())};
  const double norm = sigma * sigma * sigma * sigma;
  for (int y = 0; y < l.height; ++y) {
    for (int x = 0; x < l.width; ++x) {
      const double c = l.at(x, y);
      const double dxx = l.at(x + 1, y) - 2 * c + l.at(x - 1, y);
      const double dyy = l.at(x, y + 1) - 2 * c + l.at(x, y - 1);
      const double dxy =
          (l.at(x + 1, y + 1) - l.at(x + 1, y - 1) - l.at(x - 1, y + 1) + l.at(x - 1, y - 1)) / 4;
      r.v[static_cast<std::size_t>(y) * l.width + x] =
          static_cast<float>(norm * std::abs(dxx * dyy - dxy * dxy));
    }
  }
  return r;
}

}  // namespace

std::vector<Keypoint> detect_keypoints(const Image& image, int max_count,
                                       const DetectorConfig& config) {
  if (max_count < 1) throw InvalidConfiguration("max_count must be at least 1");
  if (image.width < config.patch_size || image.height < config.patch_size) {
    throw TooSmallImage("image " + std::to_string(image.width) + "x" +
                        std::to_string(image.height) + " is smaller than the " +
                        std::to_string(config.patch_size) + "px patch");
  }
  const Plane luma{image.width, image.height, luminance(image)};
  std::vector<Plane> stack;
  stack.reserve(config.sigmas.size());
  for (double s : config.sigmas) stack.push_back(hessian_response(luma, s));

  std::vector<Keypoint> candidates;
  for (std::size_t s = 0; s < stack.size(); ++s) {
    const Plane& r = stack[s];
    for (int y = 1; y < r.height - 1; ++y) {
      for (int x = 1; x < r.width - 1; ++x) {
        const float v = r.v[static_cast<std::size_t>(y) * r.width + x];
        if (v <= config.threshold) continue;
        if (!window_fits(x, y, config.patch_size, image.width, image.height)) continue;
        bool is_max = true;
        for (int dy = -1; dy <= 1 && is_max; ++dy) {
          for (int dx = -1; dx <= 1 && is_max; ++dx) {
            // Equal neighbors earlier in raster order win, so a plateau keeps
            // exactly one pixel.
            const float n = r.at(x + dx, y + dy);
            if ((dx || dy) && (n > v || (n == v && (dy < 0 || (dy == 0 && dx < 0))))) is_max = false;
            if (s > 0 && stack[s - 1].at(x + dx, y + dy) > v) is_max = false;
            if (s + 1 < stack.size() && stack[s + 1].at(x + dx, y + dy) > v) is_max = false;
          }
        }
        if (is_max) candidates.push_back({static_cast<double>(x), static_cast<double>(y), v});
      }
    }
  }

  std::sort(candidates.begin(), candidates.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  std::vector<Keypoint> kept;
  const double min_d2 = config.min_distance * config.min_distance;
  for (const auto& c : candidates) {
    if (static_cast<int>(kept.size()) >= max_count) break;
    const bool crowded = std::any_of(kept.begin(), kept.end(), [&](const Keypoint& k) {
      const double dx = k.x - c.x, dy = k.y - c.y;
      return dx * dx + dy * dy < min_d2;
    });
    if (!crowded) kept.push_back(c);
  }
  return kept;
}

}  // namespace tae
