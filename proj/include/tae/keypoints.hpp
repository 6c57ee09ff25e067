#pragma once

#include <vector>

#include "tae/image.hpp"
#include "tae/transforms.hpp"

namespace tae {

/// Multi-scale determinant-of-Hessian detector (the SURF detector family).
/// Response at scale s is s^4 * |Lxx*Lyy - Lxy^2| on the Gaussian-smoothed
/// luma; the absolute value lets saddle-shaped corners fire as well as blobs.
struct DetectorConfig {
  std::vector<double> sigmas{1.6, 2.4, 3.6, 5.4};
  double threshold = 1e-4;
  int patch_size = 64;
  double min_distance = 4.0;
};

/// Up to max_count keypoints, strongest first, each admitting a full
/// patch_size window. Throws TooSmallImage when no window fits at all.
std::vector<Keypoint> detect_keypoints(const Image& image, int max_count,
                                       const DetectorConfig& config = {});

}  // namespace tae
