#include "tae/procedural.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace tae {
namespace {

using Color = std::array<float, 3>;

Color random_color(Rng& rng) {
  return {static_cast<float>(uniform_real(rng, 0, 255)),
          static_cast<float>(uniform_real(rng, 0, 255)),
          static_cast<float>(uniform_real(rng, 0, 255))};
}

// Bilinearly interpolated lattice noise with `cells` cells across the image.
std::vector<float> value_noise(Rng& rng, int width, int height, int cells) {
  const int gw = cells + 2;
  std::vector<float> lattice(static_cast<std::size_t>(gw) * gw);
  for (auto& v : lattice) v = static_cast<float>(uniform_real(rng, -1, 1));
  std::vector<float> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const double gy = static_cast<double>(y) / height * cells;
    const int iy = static_cast<int>(gy);
    const double fy = gy - iy;
    const double sy = fy * fy * (3 - 2 * fy);
    for (int x = 0; x < width; ++x) {
      const double gx = static_cast<double>(x) / width * cells;
      const int ix = static_cast<int>(gx);
      const double fx = gx - ix;
      const double sx = fx * fx * (3 - 2 * fx);
      auto at = [&](int a, int b) { return lattice[static_cast<std::size_t>(b) * gw + a]; };
      const double top = at(ix, iy) * (1 - sx) + at(ix + 1, iy) * sx;
      const double bot = at(ix, iy + 1) * (1 - sx) + at(ix + 1, iy + 1) * sx;
      out[static_cast<std::size_t>(y) * width + x] = static_cast<float>(top * (1 - sy) + bot * sy);
    }
  }
  return out;
}

}  // namespace

Image procedural_image(Rng& rng, int width, int height) {
  std::vector<float> buf(static_cast<std::size_t>(width) * height * 3);
  auto px = [&](int x, int y) { return &buf[(static_cast<std::size_t>(y) * width + x) * 3]; };

  // Background gradient.
  const Color c0 = random_color(rng);
  const Color c1 = random_color(rng);
  const double angle = uniform_real(rng, 0, 2 * std::numbers::pi);
  const double ux = std::cos(angle), uy = std::sin(angle);
  const double span = std::abs(ux) * width + std::abs(uy) * height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double t = ((x - width / 2.0) * ux + (y - height / 2.0) * uy) / span + 0.5;
      t = std::clamp(t, 0.0, 1.0);
      float* p = px(x, y);
      for (int c = 0; c < 3; ++c) p[c] = static_cast<float>(c0[c] * (1 - t) + c1[c] * t);
    }
  }

  // Multi-octave texture.
  for (int cells : {4, 9, 21}) {
    const auto noise = value_noise(rng, width, height, cells);
    const Color tint = random_color(rng);
    const float amp = static_cast<float>(uniform_real(rng, 10, 40));
    for (std::size_t i = 0; i < noise.size(); ++i) {
      for (int c = 0; c < 3; ++c) buf[i * 3 + c] += amp * noise[i] * (0.5f + tint[c] / 255.0f);
    }
  }

  // Filled shapes.
  const int shapes = uniform_int(rng, 12, 30);
  const double scale = std::min(width, height);
  for (int s = 0; s < shapes; ++s) {
    const int kind = uniform_int(rng, 0, 3);
    const Color col = random_color(rng);
    const double cx = uniform_real(rng, 0, width);
    const double cy = uniform_real(rng, 0, height);
    const double r1 = uniform_real(rng, 0.03, 0.18) * scale;
    const double r2 = uniform_real(rng, 0.03, 0.18) * scale;
    const double rot = uniform_real(rng, 0, std::numbers::pi);
    const double cr = std::cos(rot), sr = std::sin(rot);
    const double alpha = uniform_real(rng, 0.6, 1.0);
    const double stripe = uniform_real(rng, 0, 1) < 0.3 ? uniform_real(rng, 3, 9) : 0.0;
    const int x_lo = std::max(0, static_cast<int>(cx - 1.5 * std::max(r1, r2)));
    const int x_hi = std::min(width - 1, static_cast<int>(cx + 1.5 * std::max(r1, r2)));
    const int y_lo = std::max(0, static_cast<int>(cy - 1.5 * std::max(r1, r2)));
    const int y_hi = std::min(height - 1, static_cast<int>(cy + 1.5 * std::max(r1, r2)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double lx = cr * dx + sr * dy;
        const double ly = -sr * dx + cr * dy;
        bool inside = false;
        switch (kind) {
          case 0: inside = (lx * lx) / (r1 * r1) + (ly * ly) / (r2 * r2) <= 1.0; break;
          case 1: inside = std::abs(lx) <= r1 && std::abs(ly) <= r2; break;
          case 2: inside = ly >= -r2 && ly <= r2 && std::abs(lx) <= r1 * (r2 - ly) / (2 * r2); break;
          default: {
            const double rr = std::hypot(lx, ly);
            inside = rr <= r1 && rr >= 0.5 * r1;
          }
        }
        if (!inside) continue;
        double a = alpha;
        if (stripe > 0 && std::fmod(std::abs(lx), 2 * stripe) < stripe) a *= 0.35;
        float* p = px(x, y);
        for (int c = 0; c < 3; ++c) p[c] = static_cast<float>(p[c] * (1 - a) + col[c] * a);
      }
    }
  }

  std::normal_distribution<float> sensor(0.0f, 2.0f);
  for (auto& v : buf) v += sensor(rng);
  return from_float(buf, width, height, 3);
}

}  // namespace tae
