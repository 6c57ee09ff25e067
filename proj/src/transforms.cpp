#include "tae/transforms.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "tae/error.hpp"

namespace tae {
namespace {

constexpr std::array<std::string_view, 12> kKindNames = {
    "scale",      "rotation", "flip",  "shear",     "projection", "brightness",
    "contrast",   "gamma",    "grayscale", "blur", "sharpen",    "jpeg_compress",
};

constexpr double kSnap = 1e-6;
constexpr int kMaxSide = 1 << 14;

Homography translation(double tx, double ty) {
  Homography t = Homography::Identity();
  t(0, 2) = tx;
  t(1, 2) = ty;
  return t;
}

// Shifts `h` so the warped source corners start at the origin and returns the
// canvas size that covers them.
GeometricPlan fit_canvas(const Homography& h, int width, int height) {
  const std::array<Eigen::Vector2d, 4> corners = {
      Eigen::Vector2d(0, 0), Eigen::Vector2d(width - 1, 0),
      Eigen::Vector2d(width - 1, height - 1), Eigen::Vector2d(0, height - 1)};
  double min_x = INFINITY, min_y = INFINITY, max_x = -INFINITY, max_y = -INFINITY;
  for (const auto& c : corners) {
    const auto m = map_point(h, c);
    min_x = std::min(min_x, m.x());
    min_y = std::min(min_y, m.y());
    max_x = std::max(max_x, m.x());
    max_y = std::max(max_y, m.y());
  }
  GeometricPlan plan;
  plan.mapping = translation(-min_x, -min_y) * h;
  const double span_x = max_x - min_x;
  const double span_y = max_y - min_y;
  if (!std::isfinite(span_x) || !std::isfinite(span_y) || span_x > kMaxSide || span_y > kMaxSide) {
    throw DegenerateTransform("warped canvas is unbounded");
  }
  plan.width = static_cast<int>(std::ceil(span_x - kSnap)) + 1;
  plan.height = static_cast<int>(std::ceil(span_y - kSnap)) + 1;
  return plan;
}

Homography rotation_about_center(double degrees, int width, int height) {
  double c = 0, s = 0;
  const double quarter = degrees / 90.0;
  if (std::abs(quarter - std::round(quarter)) < 1e-12) {
    // Exact cosines for right angles keep the resampling a pure permutation.
    static constexpr int kCos[] = {1, 0, -1, 0};
    static constexpr int kSin[] = {0, 1, 0, -1};
    const int q = ((static_cast<int>(std::lround(quarter)) % 4) + 4) % 4;
    c = kCos[q];
    s = kSin[q];
  } else {
    const double rad = degrees * std::numbers::pi / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
  }
  Homography r = Homography::Identity();
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  return translation(cx, cy) * r * translation(-cx, -cy);
}

// Direct linear transform through four correspondences.
Homography homography_from_points(const std::array<Eigen::Vector2d, 4>& src,
                                  const std::array<Eigen::Vector2d, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x(), y = src[i].y(), u = dst[i].x(), v = dst[i].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
  Homography out;
  out << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return out;
}

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < kSnap ? r : v;
}

Image warp(const Image& src, const GeometricPlan& plan) {
  const Homography inv = plan.mapping.inverse();
  const int c = src.channels;
  std::vector<float> out(static_cast<std::size_t>(plan.width) * plan.height * c, 0.0f);
  for (int v = 0; v < plan.height; ++v) {
    for (int u = 0; u < plan.width; ++u) {
      const Eigen::Vector3d s = inv * Eigen::Vector3d(u, v, 1.0);
      if (std::abs(s.z()) < 1e-12) continue;
      const double x = snap(s.x() / s.z());
      const double y = snap(s.y() / s.z());
      if (x < 0 || y < 0 || x > src.width - 1 || y > src.height - 1) continue;
      const int x0 = std::min(static_cast<int>(x), src.width - 1);
      const int y0 = std::min(static_cast<int>(y), src.height - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const int y1 = std::min(y0 + 1, src.height - 1);
      const double fx = x - x0, fy = y - y0;
      float* dst = &out[(static_cast<std::size_t>(v) * plan.width + u) * c];
      for (int ch = 0; ch < c; ++ch) {
        const double top = src.at(x0, y0, ch) * (1 - fx) + src.at(x1, y0, ch) * fx;
        const double bot = src.at(x0, y1, ch) * (1 - fx) + src.at(x1, y1, ch) * fx;
        dst[ch] = static_cast<float>(top * (1 - fy) + bot * fy);
      }
    }
  }
  return from_float(out, plan.width, plan.height, c);
}

std::vector<float> gaussian_kernel(int radius, double sigma) {
  std::vector<float> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(i * i) / (2 * sigma * sigma));
    k[i + radius] = static_cast<float>(w);
    sum += w;
  }
  for (auto& w : k) w = static_cast<float>(w / sum);
  return k;
}

// Separable blur with clamped borders.
std::vector<float> blur(const std::vector<float>& in, int width, int height, int channels,
                        int radius) {
  const auto k = gaussian_kernel(radius, (radius + 1) / 2.0);
  std::vector<float> tmp(in.size()), out(in.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        float acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, width - 1);
          acc += k[i + radius] * in[(static_cast<std::size_t>(y) * width + xx) * channels + c];
        }
        tmp[(static_cast<std::size_t>(y) * width + x) * channels + c] = acc;
      }
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        float acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, height - 1);
          acc += k[i + radius] * tmp[(static_cast<std::size_t>(yy) * width + x) * channels + c];
        }
        out[(static_cast<std::size_t>(y) * width + x) * channels + c] = acc;
      }
    }
  }
  return out;
}

Image apply_photometric(const Image& img, const TransformSpec& spec) {
  if (spec.kind == TransformKind::jpeg_compress) {
    return jpeg_roundtrip(img, static_cast<int>(std::lround(spec.param("quality"))));
  }
  std::vector<float> v = to_float(img);
  const int c = img.channels;
  switch (spec.kind) {
    case TransformKind::brightness: {
      const double f = spec.param("factor");
      for (auto& x : v) x = static_cast<float>(x * f);
      break;
    }
    case TransformKind::contrast: {
      const double f = spec.param("factor");
      double mean = 0;
      for (float x : v) mean += x;
      mean /= static_cast<double>(v.size());
      for (auto& x : v) x = static_cast<float>((x - mean) * f + mean);
      break;
    }
    case TransformKind::gamma: {
      const double g = spec.param("exponent");
      for (auto& x : v) x = static_cast<float>(255.0 * std::pow(x / 255.0, g));
      break;
    }
    case TransformKind::grayscale: {
      for (std::size_t i = 0; i + c - 1 < v.size(); i += c) {
        const float l = 0.299f * v[i] + 0.587f * v[i + 1] + 0.114f * v[i + 2];
        for (int ch = 0; ch < c; ++ch) v[i + ch] = l;
      }
      break;
    }
    case TransformKind::blur:
      v = blur(v, img.width, img.height, c, static_cast<int>(std::lround(spec.param("radius"))));
      break;
    case TransformKind::sharpen: {
      const double amount = spec.param("amount");
      const auto soft = blur(v, img.width, img.height, c,
                             static_cast<int>(std::lround(spec.param("radius"))));
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<float>(v[i] + amount * (v[i] - soft[i]));
      }
      break;
    }
    default:
      throw InvalidInput("not a photometric transform");
  }
  return from_float(v, img.width, img.height, c);
}

int pick(Rng& rng, const std::vector<int>& options) {
  return options.at(static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(options.size()) - 1)));
}

}  // namespace

std::string_view to_string(TransformKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

TransformKind transform_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return kAllTransformKinds[i];
  }
  throw InvalidInput("unknown transform kind: " + std::string(name));
}

bool is_geometric(TransformKind kind) {
  switch (kind) {
    case TransformKind::scale:
    case TransformKind::rotation:
    case TransformKind::flip:
    case TransformKind::shear:
    case TransformKind::projection:
      return true;
    default:
      return false;
  }
}

double TransformSpec::param(const std::string& name) const {
  const auto it = params.find(name);
  if (it == params.end()) {
    throw InvalidInput("transform " + std::string(to_string(kind)) + " lacks parameter " + name);
  }
  return it->second;
}

TransformPool TransformPool::standard() {
  TransformPool pool;
  pool.enabled.insert(kAllTransformKinds.begin(), kAllTransformKinds.end());
  return pool;
}

TransformPool TransformPool::identity_debug() {
  TransformPool pool;
  pool.enabled = {TransformKind::scale,      TransformKind::rotation, TransformKind::shear,
                  TransformKind::brightness, TransformKind::contrast, TransformKind::gamma};
  pool.scale = {1, 1};
  pool.rotation_degrees = {0, 0};
  pool.rotation_discrete.clear();
  pool.rotation_discrete_probability = 0;
  pool.shear = {0, 0};
  pool.brightness = {1, 1};
  pool.contrast = {1, 1};
  pool.gamma = {1, 1};
  return pool;
}

TransformSpec sample_transform(Rng& rng, const std::set<TransformKind>& exclude,
                               const TransformPool& pool) {
  std::vector<TransformKind> allowed;
  for (auto kind : kAllTransformKinds) {
    if (pool.enabled.contains(kind) && !exclude.contains(kind)) allowed.push_back(kind);
  }
  if (allowed.empty()) throw InvalidConfiguration("no transform kind left to sample");

  TransformSpec spec;
  spec.kind = allowed[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(allowed.size()) - 1))];
  auto& p = spec.params;
  switch (spec.kind) {
    case TransformKind::scale:
      p["factor"] = uniform_real(rng, pool.scale.lo, pool.scale.hi);
      break;
    case TransformKind::rotation:
      if (!pool.rotation_discrete.empty() &&
          uniform_real(rng, 0, 1) < pool.rotation_discrete_probability) {
        p["degrees"] = pool.rotation_discrete[static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<int>(pool.rotation_discrete.size()) - 1))];
      } else {
        p["degrees"] = uniform_real(rng, pool.rotation_degrees.lo, pool.rotation_degrees.hi);
      }
      break;
    case TransformKind::flip:
      p["axis"] = pool.allow_vertical_flip ? uniform_int(rng, 0, 1) : 0;
      break;
    case TransformKind::shear:
      p["factor"] = uniform_real(rng, pool.shear.lo, pool.shear.hi);
      break;
    case TransformKind::projection:
      for (const char* corner : {"tl", "tr", "br", "bl"}) {
        for (const char* axis : {"dx", "dy"}) {
          p[std::string(corner) + "_" + axis] =
              uniform_real(rng, -pool.projection_max_offset, pool.projection_max_offset);
        }
      }
      break;
    case TransformKind::brightness:
      p["factor"] = uniform_real(rng, pool.brightness.lo, pool.brightness.hi);
      break;
    case TransformKind::contrast:
      p["factor"] = uniform_real(rng, pool.contrast.lo, pool.contrast.hi);
      break;
    case TransformKind::gamma:
      p["exponent"] = uniform_real(rng, pool.gamma.lo, pool.gamma.hi);
      break;
    case TransformKind::grayscale:
      break;
    case TransformKind::blur:
      p["radius"] = pick(rng, pool.blur_radius);
      break;
    case TransformKind::sharpen:
      p["amount"] = uniform_real(rng, pool.sharpen_amount.lo, pool.sharpen_amount.hi);
      p["radius"] = pick(rng, pool.sharpen_radius);
      break;
    case TransformKind::jpeg_compress:
      p["quality"] = uniform_int(rng, static_cast<int>(pool.jpeg_quality.lo),
                                 static_cast<int>(pool.jpeg_quality.hi));
      break;
  }
  return spec;
}

GeometricPlan plan_geometry(const TransformSpec& spec, int width, int height) {
  GeometricPlan plan;
  switch (spec.kind) {
    case TransformKind::scale: {
      const double f = spec.param("factor");
      if (!(f > 0)) throw DegenerateTransform("scale factor must be positive");
      plan.mapping = Homography::Identity();
      plan.mapping(0, 0) = f;
      plan.mapping(1, 1) = f;
      plan.width = static_cast<int>(std::lround(width * f));
      plan.height = static_cast<int>(std::lround(height * f));
      break;
    }
    case TransformKind::rotation:
      plan = fit_canvas(rotation_about_center(spec.param("degrees"), width, height), width, height);
      break;
    case TransformKind::flip: {
      const bool vertical = spec.params.contains("axis") && spec.param("axis") != 0;
      plan.mapping = Homography::Identity();
      if (vertical) {
        plan.mapping(1, 1) = -1;
        plan.mapping(1, 2) = height - 1;
      } else {
        plan.mapping(0, 0) = -1;
        plan.mapping(0, 2) = width - 1;
      }
      plan.width = width;
      plan.height = height;
      break;
    }
    case TransformKind::shear: {
      Homography s = Homography::Identity();
      s(0, 1) = spec.param("factor");
      plan = fit_canvas(s, width, height);
      break;
    }
    case TransformKind::projection: {
      const double w = width - 1, h = height - 1;
      const std::array<Eigen::Vector2d, 4> src = {Eigen::Vector2d(0, 0), Eigen::Vector2d(w, 0),
                                                  Eigen::Vector2d(w, h), Eigen::Vector2d(0, h)};
      const char* names[] = {"tl", "tr", "br", "bl"};
      std::array<Eigen::Vector2d, 4> dst;
      for (int i = 0; i < 4; ++i) {
        const std::string n = names[i];
        dst[i] = src[i] + Eigen::Vector2d(spec.param(n + "_dx") * w, spec.param(n + "_dy") * h);
      }
      plan = fit_canvas(homography_from_points(src, dst), width, height);
      break;
    }
    default:
      plan.width = width;
      plan.height = height;
      return plan;
  }
  if (plan.width < 1 || plan.height < 1 || std::abs(plan.mapping.determinant()) < 1e-12) {
    throw DegenerateTransform("transform " + std::string(to_string(spec.kind)) +
                              " collapses the image below one pixel");
  }
  return plan;
}

TransformResult apply_transform(const Image& image, const TransformSpec& spec) {
  if (image.empty()) throw InvalidInput("cannot transform an empty image");
  if (!is_geometric(spec.kind)) return {apply_photometric(image, spec), Homography::Identity()};
  const GeometricPlan plan = plan_geometry(spec, image.width, image.height);
  return {warp(image, plan), plan.mapping};
}

ChainResult compose_chain(const Image& image, int length, Rng& rng, bool no_repeat,
                          const TransformPool& pool, const std::set<TransformKind>& exclude) {
  if (length < 1) throw InvalidConfiguration("chain length must be at least 1");
  if (no_repeat) {
    std::size_t available = 0;
    for (auto kind : pool.enabled) available += exclude.contains(kind) ? 0 : 1;
    if (static_cast<std::size_t>(length) > available) {
      throw InvalidConfiguration("chain of length " + std::to_string(length) +
                                 " cannot avoid repeating kinds from a pool of " +
                                 std::to_string(available));
    }
  }
  ChainResult out{image, {}};
  std::set<TransformKind> banned = exclude;
  for (int i = 0; i < length; ++i) {
    TransformSpec spec = sample_transform(rng, banned, pool);
    if (no_repeat) banned.insert(spec.kind);
    TransformResult step = apply_transform(out.image, spec);
    out.image = std::move(step.image);
    out.chain.homography = step.mapping * out.chain.homography;
    out.chain.specs.push_back(std::move(spec));
  }
  return out;
}

ChainResult apply_chain(const Image& image, const std::vector<TransformSpec>& specs) {
  ChainResult out{image, {}};
  for (const auto& spec : specs) {
    TransformResult step = apply_transform(out.image, spec);
    out.image = std::move(step.image);
    out.chain.homography = step.mapping * out.chain.homography;
    out.chain.specs.push_back(spec);
  }
  return out;
}

Eigen::Vector2d map_point(const Homography& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h * Eigen::Vector3d(p.x(), p.y(), 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

std::vector<Keypoint> propagate_keypoints(const std::vector<Keypoint>& kps, const Homography& h,
                                          int out_width, int out_height, int patch_size) {
  std::vector<Keypoint> out;
  out.reserve(kps.size());
  for (const auto& kp : kps) {
    const auto m = map_point(h, {kp.x, kp.y});
    if (!window_fits(m.x(), m.y(), patch_size, out_width, out_height)) continue;
    out.push_back({m.x(), m.y(), kp.response});
  }
  return out;
}

nlohmann::json to_json(const TransformSpec& spec) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [k, v] : spec.params) params[k] = v;
  return {{"kind", std::string(to_string(spec.kind))}, {"params", params}};
}

TransformSpec transform_spec_from_json(const nlohmann::json& j) {
  TransformSpec spec;
  spec.kind = transform_kind_from_string(j.at("kind").get<std::string>());
  for (const auto& [k, v] : j.at("params").items()) spec.params[k] = v.get<double>();
  return spec;
}

nlohmann::json to_json(const TransformChain& chain) {
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : chain.specs) specs.push_back(to_json(s));
  nlohmann::json h = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    h.push_back({chain.homography(r, 0), chain.homography(r, 1), chain.homography(r, 2)});
  }
  return {{"specs", specs}, {"homography", h}};
}

TransformChain transform_chain_from_json(const nlohmann::json& j) {
  TransformChain chain;
  for (const auto& s : j.at("specs")) chain.specs.push_back(transform_spec_from_json(s));
  const auto& h = j.at("homography");
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) chain.homography(r, c) = h.at(r).at(c).get<double>();
  }
  return chain;
}

namespace {

nlohmann::json range_json(const ParamRange& r) { return {r.lo, r.hi}; }

ParamRange range_from(const nlohmann::json& j, const char* key, ParamRange fallback) {
  if (!j.contains(key)) return fallback;
  return {j.at(key).at(0).get<double>(), j.at(key).at(1).get<double>()};
}

}  // namespace

nlohmann::json to_json(const TransformPool& pool) {
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : pool.enabled) kinds.push_back(std::string(to_string(k)));
  return {{"enabled", kinds},
          {"scale", range_json(pool.scale)},
          {"rotation_degrees", range_json(pool.rotation_degrees)},
          {"rotation_discrete", pool.rotation_discrete},
          {"rotation_discrete_probability", pool.rotation_discrete_probability},
          {"shear", range_json(pool.shear)},
          {"projection_max_offset", pool.projection_max_offset},
          {"brightness", range_json(pool.brightness)},
          {"contrast", range_json(pool.contrast)},
          {"gamma", range_json(pool.gamma)},
          {"blur_radius", pool.blur_radius},
          {"sharpen_amount", range_json(pool.sharpen_amount)},
          {"sharpen_radius", pool.sharpen_radius},
          {"jpeg_quality", range_json(pool.jpeg_quality)},
          {"allow_vertical_flip", pool.allow_vertical_flip}};
}

TransformPool transform_pool_from_json(const nlohmann::json& j) {
  TransformPool pool = TransformPool::standard();
  if (j.contains("enabled")) {
    pool.enabled.clear();
    for (const auto& k : j.at("enabled")) pool.enabled.insert(transform_kind_from_string(k.get<std::string>()));
  }
  pool.scale = range_from(j, "scale", pool.scale);
  pool.rotation_degrees = range_from(j, "rotation_degrees", pool.rotation_degrees);
  if (j.contains("rotation_discrete")) pool.rotation_discrete = j.at("rotation_discrete").get<std::vector<double>>();
  pool.rotation_discrete_probability = j.value("rotation_discrete_probability", pool.rotation_discrete_probability);
  pool.shear = range_from(j, "shear", pool.shear);
  pool.projection_max_offset = j.value("projection_max_offset", pool.projection_max_offset);
  pool.brightness = range_from(j, "brightness", pool.brightness);
  pool.contrast = range_from(j, "contrast", pool.contrast);
  pool.gamma = range_from(j, "gamma", pool.gamma);
  if (j.contains("blur_radius")) pool.blur_radius = j.at("blur_radius").get<std::vector<int>>();
  pool.sharpen_amount = range_from(j, "sharpen_amount", pool.sharpen_amount);
  if (j.contains("sharpen_radius")) pool.sharpen_radius = j.at("sharpen_radius").get<std::vector<int>>();
  pool.jpeg_quality = range_from(j, "jpeg_quality", pool.jpeg_quality);
  pool.allow_vertical_flip = j.value("allow_vertical_flip", pool.allow_vertical_flip);
  return pool;
}

}  // namespace tae
