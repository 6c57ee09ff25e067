#include "tae/rankloss.hpp"

namespace tae {

double similarity_precision(const nn::Tensor& anchors, const nn::Tensor& positives,
                            const nn::Tensor& weak_positives, const nn::Tensor& negatives) {
  if (positives.n != anchors.n || weak_positives.n != anchors.n || negatives.n != anchors.n) {
    throw ShapeError("quadruplet tensors disagree on count");
  }
  const std::size_t d = anchors.sample_size();
  auto row = [d](const nn::Tensor& t, int i) { return std::span<const float>(t.sample(i), d); };
  std::vector<QuadrupletDistances> dists;
  dists.reserve(static_cast<std::size_t>(anchors.n));
  for (int i = 0; i < anchors.n; ++i) {
    dists.push_back(quadruplet_distances(row(anchors, i), row(positives, i), row(weak_positives, i),
                                         row(negatives, i)));
  }
  return similarity_precision(dists);
}

}  // namespace tae
