#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "tae/error.hpp"
#include "tae/nn.hpp"

namespace tae {

/// Hinge margins of the three ranking terms; mu1 > mu2 > mu3 > 0, each in
/// [0.01, 0.1].
struct MarginSet {
  double mu1 = 0.10;
  double mu2 = 0.05;
  double mu3 = 0.01;

  void validate() const {
    if (!(mu1 > mu2 && mu2 > mu3 && mu3 > 0)) {
      throw InvalidConfiguration("margins must satisfy mu1 > mu2 > mu3 > 0");
    }
    if (mu1 > 0.1 + 1e-12 || mu3 < 0.01 - 1e-12) {
      throw InvalidConfiguration("margins must lie in [0.01, 0.1]");
    }
  }
};

/// Euclidean distance. Throws ShapeError on a length mismatch.
template <typename T>
double pairwise_distance(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ShapeError("embedding dimensions differ");
  double sq = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sq += d * d;
  }
  return std::sqrt(sq);
}

/// The five distances the loss and the precision metric look at.
struct QuadrupletDistances {
  double ap = 0;   // anchor - positive
  double awp = 0;  // anchor - weak positive
  double an = 0;   // anchor - negative
  double pwp = 0;  // positive - weak positive
  double pn = 0;   // positive - negative
};

template <typename T>
QuadrupletDistances quadruplet_distances(std::span<const T> a, std::span<const T> p,
                                         std::span<const T> wp, std::span<const T> n) {
  return {pairwise_distance(a, p), pairwise_distance(a, wp), pairwise_distance(a, n),
          pairwise_distance(p, wp), pairwise_distance(p, n)};
}

/// Sum of three hinges, each max(0, d_near - d_far + margin):
///   (a,wp) closer than (a,n) by mu1, (p,wp) closer than (p,n) by mu2,
///   (a,p) closer than (a,wp) by mu3.
/// The (a,p,n) triplet is omitted: zero loss already implies
/// d(a,p) < d(a,wp) < d(a,n).
inline double rank_loss(const QuadrupletDistances& d, const MarginSet& m) {
  return std::max(0.0, d.awp - d.an + m.mu1) + std::max(0.0, d.pwp - d.pn + m.mu2) +
         std::max(0.0, d.ap - d.awp + m.mu3);
}

template <typename T>
double quadruplet_rank_loss(std::span<const T> a, std::span<const T> p, std::span<const T> wp,
                            std::span<const T> n, const MarginSet& m) {
  return rank_loss(quadruplet_distances(a, p, wp, n), m);
}

/// Loss and its gradient with respect to each of the four embeddings. The
/// gradients are added into ga/gp/gwp/gn scaled by `scale`. At a coincident
/// pair the distance is not differentiable and contributes nothing.
template <typename T>
double quadruplet_rank_loss_backward(std::span<const T> a, std::span<const T> p,
                                     std::span<const T> wp, std::span<const T> n,
                                     const MarginSet& m, std::span<T> ga, std::span<T> gp,
                                     std::span<T> gwp, std::span<T> gn, double scale = 1.0) {
  const QuadrupletDistances d = quadruplet_distances(a, p, wp, n);
  const std::size_t dim = a.size();
  // Adds scale*sign*(x - y)/|x - y| to gx and subtracts it from gy.
  auto pull = [&](std::span<const T> x, std::span<const T> y, double dist, double sign,
                  std::span<T> gx, std::span<T> gy) {
    if (dist <= 0) return;
    const double k = scale * sign / dist;
    for (std::size_t i = 0; i < dim; ++i) {
      const double u = k * (static_cast<double>(x[i]) - static_cast<double>(y[i]));
      gx[i] += static_cast<T>(u);
      gy[i] -= static_cast<T>(u);
    }
  };
  double loss = 0;
  if (const double s = d.awp - d.an + m.mu1; s > 0) {
    loss += s;
    pull(a, wp, d.awp, +1, ga, gwp);
    pull(a, n, d.an, -1, ga, gn);
  }
  if (const double s = d.pwp - d.pn + m.mu2; s > 0) {
    loss += s;
    pull(p, wp, d.pwp, +1, gp, gwp);
    pull(p, n, d.pn, -1, gp, gn);
  }
  if (const double s = d.ap - d.awp + m.mu3; s > 0) {
    loss += s;
    pull(a, p, d.ap, +1, ga, gp);
    pull(a, wp, d.awp, -1, ga, gwp);
  }
  return loss;
}

/// Strict d(a,p) < d(a,wp) < d(a,n); ties count as failures.
inline bool correctly_ordered(const QuadrupletDistances& d) { return d.ap < d.awp && d.awp < d.an; }

/// Fraction of correctly ordered quadruplets. Throws UndefinedMetric when
/// empty.
inline double similarity_precision(std::span<const QuadrupletDistances> quads) {
  if (quads.empty()) throw UndefinedMetric("similarity precision of an empty set");
  std::size_t ok = 0;
  for (const auto& q : quads) ok += correctly_ordered(q) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(quads.size());
}

/// Row i of each tensor is one quadruplet's embedding.
double similarity_precision(const nn::Tensor& anchors, const nn::Tensor& positives,
                            const nn::Tensor& weak_positives, const nn::Tensor& negatives);

}  // namespace tae
