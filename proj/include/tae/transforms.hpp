#pragma once

#include <Eigen/Core>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tae/image.hpp"
#include "tae/rng.hpp"

namespace tae {

enum class TransformKind {
  scale,
  rotation,
  flip,
  shear,
  projection,
  brightness,
  contrast,
  gamma,
  grayscale,
  blur,
  sharpen,
  jpeg_compress,
};

inline constexpr std::array<TransformKind, 12> kAllTransformKinds = {
    TransformKind::scale,      TransformKind::rotation,   TransformKind::flip,
    TransformKind::shear,      TransformKind::projection, TransformKind::brightness,
    TransformKind::contrast,   TransformKind::gamma,      TransformKind::grayscale,
    TransformKind::blur,       TransformKind::sharpen,    TransformKind::jpeg_compress,
};

std::string_view to_string(TransformKind kind);
TransformKind transform_kind_from_string(std::string_view name);
bool is_geometric(TransformKind kind);

/// Maps source pixel coordinates (x, y, 1) to output coordinates. Pixel
/// centers sit on integer coordinates.
using Homography = Eigen::Matrix3d;

struct TransformSpec {
  TransformKind kind = TransformKind::grayscale;
  std::map<std::string, double> params;

  double param(const std::string& name) const;
  friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

struct TransformChain {
  std::vector<TransformSpec> specs;
  Homography homography = Homography::Identity();

  friend bool operator==(const TransformChain& a, const TransformChain& b) {
    return a.specs == b.specs && a.homography == b.homography;
  }
};

struct Keypoint {
  double x = 0;
  double y = 0;
  double response = 0;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct ParamRange {
  double lo = 0;
  double hi = 0;
};

/// The sampling pool: which kinds may be drawn and the range of each
/// parameter. Every range is inclusive.
struct TransformPool {
  std::set<TransformKind> enabled;
  ParamRange scale{0.5, 1.5};
  ParamRange rotation_degrees{-30.0, 30.0};
  std::vector<double> rotation_discrete{90.0, 180.0, 270.0};
  double rotation_discrete_probability = 0.25;
  ParamRange shear{-0.2, 0.2};
  double projection_max_offset = 0.1;  // fraction of the side
  ParamRange brightness{0.6, 1.4};
  ParamRange contrast{0.6, 1.4};
  ParamRange gamma{0.5, 2.0};
  std::vector<int> blur_radius{1, 2, 3};
  ParamRange sharpen_amount{0.5, 2.0};
  std::vector<int> sharpen_radius{1};
  ParamRange jpeg_quality{30, 90};
  bool allow_vertical_flip = false;

  /// All twelve kinds with the default ranges.
  static TransformPool standard();
  /// Kinds whose every draw is the identity (unit scale, zero rotation and
  /// shear, unit brightness/contrast/gamma). Used to check plumbing.
  static TransformPool identity_debug();
};

nlohmann::json to_json(const TransformPool& pool);
TransformPool transform_pool_from_json(const nlohmann::json& j);

/// Draws one spec uniformly over the enabled kinds not in `exclude`, with
/// parameters uniform over the kind's range.
TransformSpec sample_transform(Rng& rng, const std::set<TransformKind>& exclude,
                               const TransformPool& pool = TransformPool::standard());

struct TransformResult {
  Image image;
  Homography mapping = Homography::Identity();
};

/// Applies one transform. Geometric kinds resample with bilinear
/// interpolation onto a canvas that bounds the warped source (uncovered
/// pixels are black); the returned mapping takes source coordinates to
/// output coordinates. Other kinds return the identity mapping.
TransformResult apply_transform(const Image& image, const TransformSpec& spec);

/// Geometric mapping and output size of a spec without touching pixels.
struct GeometricPlan {
  Homography mapping = Homography::Identity();
  int width = 0;
  int height = 0;
};
GeometricPlan plan_geometry(const TransformSpec& spec, int width, int height);

struct ChainResult {
  Image image;
  TransformChain chain;
};

/// Samples and applies `length` transforms in sequence. With `no_repeat` no
/// kind appears twice, and kinds in `exclude` are never drawn.
ChainResult compose_chain(const Image& image, int length, Rng& rng, bool no_repeat,
                          const TransformPool& pool = TransformPool::standard(),
                          const std::set<TransformKind>& exclude = {});

/// Replays a fixed list of specs.
ChainResult apply_chain(const Image& image, const std::vector<TransformSpec>& specs);

Eigen::Vector2d map_point(const Homography& h, const Eigen::Vector2d& p);

/// Maps keypoints through `h` and keeps those whose patch_size window fits
/// inside out_width×out_height. Order is preserved.
std::vector<Keypoint> propagate_keypoints(const std::vector<Keypoint>& kps, const Homography& h,
                                          int out_width, int out_height, int patch_size);

nlohmann::json to_json(const TransformSpec& spec);
TransformSpec transform_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TransformChain& chain);
TransformChain transform_chain_from_json(const nlohmann::json& j);

}  // namespace tae
