#include "tae/nn.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tae/error.hpp"

namespace tae::nn {
namespace {

// Upper bound on the im2col scratch buffer, in floats.
constexpr std::size_t kColBudget = std::size_t{4} << 20;

Param make_param(std::string name, std::size_t size, float fill = 0.0f) {
  return Param{std::move(name), std::vector<float>(size, fill), std::vector<float>(size, 0.0f)};
}

}  // namespace

// --- Conv2d -------------------------------------------------------------------

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int padding)
    : in_(in_channels), out_(out_channels), kernel_(kernel), padding_(padding),
      weight_(make_param(name + ".weight",
                         static_cast<std::size_t>(kernel) * kernel * in_channels * out_channels)),
      bias_(make_param(name + ".bias", static_cast<std::size_t>(out_channels))) {}

void Conv2d::im2col(const Tensor& x, int first, int count, int ho, int wo, float* col) const {
  // Each (output pixel, kernel row) pair reads kernel*in contiguous floats of
  // the zero-padded sample.
  const int hp = x.h + 2 * padding_, wp = x.w + 2 * padding_;
  const std::size_t k_row = static_cast<std::size_t>(kernel_) * in_;
  const std::size_t k_dim = k_row * kernel_;
  std::vector<float> padded(static_cast<std::size_t>(hp) * wp * in_, 0.0f);
  for (int s = 0; s < count; ++s) {
    const float* src = x.sample(first + s);
    for (int y = 0; y < x.h; ++y) {
      std::memcpy(padded.data() + (static_cast<std::size_t>(y + padding_) * wp + padding_) * in_,
                  src + static_cast<std::size_t>(y) * x.w * in_, sizeof(float) * x.w * in_);
    }
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        float* dst = col + ((static_cast<std::size_t>(s) * ho + oy) * wo + ox) * k_dim;
        for (int ky = 0; ky < kernel_; ++ky) {
          std::memcpy(dst + ky * k_row, padded.data() + (static_cast<std::size_t>(oy + ky) * wp + ox) * in_,
                      sizeof(float) * k_row);
        }
      }
    }
  }
}

void Conv2d::col2im(const float* col, int first, int count, int ho, int wo, Tensor& dx) const {
  const int hp = dx.h + 2 * padding_, wp = dx.w + 2 * padding_;
  const std::size_t k_row = static_cast<std::size_t>(kernel_) * in_;
  const std::size_t k_dim = k_row * kernel_;
  std::vector<float> padded(static_cast<std::size_t>(hp) * wp * in_);
  for (int s = 0; s < count; ++s) {
    std::fill(padded.begin(), padded.end(), 0.0f);
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const float* src = col + ((static_cast<std::size_t>(s) * ho + oy) * wo + ox) * k_dim;
        for (int ky = 0; ky < kernel_; ++ky) {
          float* d = padded.data() + (static_cast<std::size_t>(oy + ky) * wp + ox) * in_;
          const float* g = src + ky * k_row;
          for (std::size_t i = 0; i < k_row; ++i) d[i] += g[i];
        }
      }
    }
    float* dst = dx.sample(first + s);
    for (int y = 0; y < dx.h; ++y) {
      const float* row = padded.data() + (static_cast<std::size_t>(y + padding_) * wp + padding_) * in_;
      float* out = dst + static_cast<std::size_t>(y) * dx.w * in_;
      for (std::size_t i = 0; i < static_cast<std::size_t>(dx.w) * in_; ++i) out[i] += row[i];
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, Mode mode) {
  if (x.c != in_) throw ShapeError("conv input has " + std::to_string(x.c) + " channels, expected " + std::to_string(in_));
  const int ho = output_size(x.h);
  const int wo = output_size(x.w);
  if (ho < 1 || wo < 1) throw InvalidArchitecture("feature map smaller than the kernel");
  Tensor y(x.n, ho, wo, out_);
  const std::size_t k_dim = static_cast<std::size_t>(kernel_) * kernel_ * in_;
  const std::size_t per_sample = static_cast<std::size_t>(ho) * wo * k_dim;
  const int chunk = static_cast<int>(std::max<std::size_t>(1, kColBudget / per_sample));
  std::vector<float> col(per_sample * static_cast<std::size_t>(std::min(chunk, x.n)));
  for (int first = 0; first < x.n; first += chunk) {
    const int count = std::min(chunk, x.n - first);
    im2col(x, first, count, ho, wo, col.data());
    const int rows = count * ho * wo;
    float* out = y.sample(first);
    for (int r = 0; r < rows; ++r) std::memcpy(out + static_cast<std::size_t>(r) * out_, bias_.value.data(), sizeof(float) * out_);
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, rows, out_, static_cast<int>(k_dim), 1.0f,
                col.data(), static_cast<int>(k_dim), weight_.value.data(), out_, 1.0f, out, out_);
  }
  if (mode == Mode::train) input_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, bool need_input_grad) {
  const Tensor& x = input_;
  if (x.n != grad_out.n) throw ShapeError("conv backward without matching forward");
  const int ho = grad_out.h, wo = grad_out.w;
  const std::size_t k_dim = static_cast<std::size_t>(kernel_) * kernel_ * in_;
  const std::size_t per_sample = static_cast<std::size_t>(ho) * wo * k_dim;
  const int chunk = static_cast<int>(std::max<std::size_t>(1, kColBudget / per_sample));
  std::vector<float> col(per_sample * static_cast<std::size_t>(std::min(chunk, x.n)));
  Tensor dx;
  if (need_input_grad) dx = Tensor(x.n, x.h, x.w, x.c);

  for (int first = 0; first < x.n; first += chunk) {
    const int count = std::min(chunk, x.n - first);
    const int rows = count * ho * wo;
    const float* g = grad_out.sample(first);
    for (int r = 0; r < rows; ++r) {
      const float* gr = g + static_cast<std::size_t>(r) * out_;
      for (int o = 0; o < out_; ++o) bias_.grad[o] += gr[o];
    }
    im2col(x, first, count, ho, wo, col.data());
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(k_dim), out_, rows, 1.0f,
                col.data(), static_cast<int>(k_dim), g, out_, 1.0f, weight_.grad.data(), out_);
    if (need_input_grad) {
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, rows, static_cast<int>(k_dim), out_, 1.0f, g,
                  out_, weight_.value.data(), out_, 0.0f, col.data(), static_cast<int>(k_dim));
      col2im(col.data(), first, count, ho, wo, dx);
    }
  }
  input_ = Tensor();
  return dx;
}

// --- Linear -------------------------------------------------------------------

Linear::Linear(std::string name, int in_features, int out_features)
    : in_(in_features), out_(out_features),
      weight_(make_param(name + ".weight", static_cast<std::size_t>(in_features) * out_features)),
      bias_(make_param(name + ".bias", static_cast<std::size_t>(out_features))) {}

Tensor Linear::forward(const Tensor& x, Mode mode) {
  if (static_cast<int>(x.sample_size()) != in_) {
    throw ShapeError("linear input has " + std::to_string(x.sample_size()) + " features, expected " +
                     std::to_string(in_));
  }
  Tensor y(x.n, 1, 1, out_);
  for (int i = 0; i < x.n; ++i) std::memcpy(y.sample(i), bias_.value.data(), sizeof(float) * out_);
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, x.n, out_, in_, 1.0f, x.data.data(), in_,
              weight_.value.data(), out_, 1.0f, y.data.data(), out_);
  if (mode == Mode::train) input_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
  const Tensor& x = input_;
  if (x.n != grad_out.n) throw ShapeError("linear backward without matching forward");
  for (int i = 0; i < grad_out.n; ++i) {
    const float* g = grad_out.sample(i);
    for (int o = 0; o < out_; ++o) bias_.grad[o] += g[o];
  }
  cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, in_, out_, x.n, 1.0f, x.data.data(), in_,
              grad_out.data.data(), out_, 1.0f, weight_.grad.data(), out_);
  Tensor dx(x.n, x.h, x.w, x.c);
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, x.n, in_, out_, 1.0f, grad_out.data.data(), out_,
              weight_.value.data(), out_, 0.0f, dx.data.data(), in_);
  input_ = Tensor();
  return dx;
}

// --- BatchNorm ----------------------------------------------------------------

BatchNorm::BatchNorm(std::string name, int channels, float momentum, float eps)
    : channels_(channels), momentum_(momentum), eps_(eps),
      gamma_(make_param(name + ".gamma", static_cast<std::size_t>(channels), 1.0f)),
      beta_(make_param(name + ".beta", static_cast<std::size_t>(channels))),
      running_mean_{name + ".running_mean", std::vector<float>(static_cast<std::size_t>(channels), 0.0f)},
      running_var_{name + ".running_var", std::vector<float>(static_cast<std::size_t>(channels), 1.0f)} {}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  if (x.c != channels_) throw ShapeError("batch norm channel mismatch");
  const std::size_t rows = x.size() / channels_;
  Tensor y(x.n, x.h, x.w, x.c);
  if (mode == Mode::eval) {
    std::vector<float> scale(channels_), shift(channels_);
    for (int c = 0; c < channels_; ++c) {
      scale[c] = gamma_.value[c] / std::sqrt(running_var_.value[c] + eps_);
      shift[c] = beta_.value[c] - running_mean_.value[c] * scale[c];
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const float* xi = x.data.data() + r * channels_;
      float* yi = y.data.data() + r * channels_;
      for (int c = 0; c < channels_; ++c) yi[c] = xi[c] * scale[c] + shift[c];
    }
    return y;
  }
  if (rows < 2) throw ShapeError("batch norm in training mode needs more than one value per channel");
  std::vector<double> mean(channels_, 0.0), var(channels_, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xi = x.data.data() + r * channels_;
    for (int c = 0; c < channels_; ++c) mean[c] += xi[c];
  }
  for (auto& m : mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xi = x.data.data() + r * channels_;
    for (int c = 0; c < channels_; ++c) {
      const double d = xi[c] - mean[c];
      var[c] += d * d;
    }
  }
  inv_std_.assign(channels_, 0.0f);
  for (int c = 0; c < channels_; ++c) {
    const double biased = var[c] / static_cast<double>(rows);
    inv_std_[c] = static_cast<float>(1.0 / std::sqrt(biased + eps_));
    const double unbiased = var[c] / static_cast<double>(rows - 1);
    running_mean_.value[c] = static_cast<float>((1 - momentum_) * running_mean_.value[c] + momentum_ * mean[c]);
    running_var_.value[c] = static_cast<float>((1 - momentum_) * running_var_.value[c] + momentum_ * unbiased);
  }
  xhat_ = Tensor(x.n, x.h, x.w, x.c);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xi = x.data.data() + r * channels_;
    float* hi = xhat_.data.data() + r * channels_;
    float* yi = y.data.data() + r * channels_;
    for (int c = 0; c < channels_; ++c) {
      hi[c] = static_cast<float>((xi[c] - mean[c]) * inv_std_[c]);
      yi[c] = gamma_.value[c] * hi[c] + beta_.value[c];
    }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  if (grad_out.size() != xhat_.size()) throw ShapeError("batch norm backward without matching forward");
  const std::size_t rows = grad_out.size() / channels_;
  std::vector<double> sum_g(channels_, 0.0), sum_gx(channels_, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* g = grad_out.data.data() + r * channels_;
    const float* h = xhat_.data.data() + r * channels_;
    for (int c = 0; c < channels_; ++c) {
      sum_g[c] += g[c];
      sum_gx[c] += static_cast<double>(g[c]) * h[c];
    }
  }
  for (int c = 0; c < channels_; ++c) {
    beta_.grad[c] += static_cast<float>(sum_g[c]);
    gamma_.grad[c] += static_cast<float>(sum_gx[c]);
  }
  Tensor dx(grad_out.n, grad_out.h, grad_out.w, grad_out.c);
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* g = grad_out.data.data() + r * channels_;
    const float* h = xhat_.data.data() + r * channels_;
    float* d = dx.data.data() + r * channels_;
    for (int c = 0; c < channels_; ++c) {
      const double k = gamma_.value[c] * inv_std_[c];
      d[c] = static_cast<float>(k * (g[c] - sum_g[c] * inv_rows - h[c] * sum_gx[c] * inv_rows));
    }
  }
  xhat_ = Tensor();
  return dx;
}

// --- Relu ---------------------------------------------------------------------

Tensor Relu::forward(const Tensor& x, Mode mode) {
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0f ? v : 0.0f;
  if (mode == Mode::train) {
    mask_.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) mask_[i] = x.data[i] > 0.0f;
  }
  return y;
}

Tensor Relu::backward(const Tensor& grad_out) {
  if (grad_out.size() != mask_.size()) throw ShapeError("relu backward without matching forward");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!mask_[i]) dx.data[i] = 0.0f;
  }
  mask_.clear();
  return dx;
}

// --- MaxPool2 -----------------------------------------------------------------

Tensor MaxPool2::forward(const Tensor& x, Mode mode) {
  const int ho = x.h / 2, wo = x.w / 2;
  if (ho < 1 || wo < 1) throw InvalidArchitecture("feature map too small to pool");
  Tensor y(x.n, ho, wo, x.c);
  const bool keep = mode == Mode::train;
  if (keep) {
    argmax_.assign(y.size(), 0);
    in_h_ = x.h;
    in_w_ = x.w;
  }
  for (int s = 0; s < x.n; ++s) {
    const std::size_t base = static_cast<std::size_t>(s) * x.sample_size();
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const std::size_t out_base = ((static_cast<std::size_t>(s) * ho + oy) * wo + ox) * x.c;
        for (int c = 0; c < x.c; ++c) {
          std::size_t best = base + (static_cast<std::size_t>(2 * oy) * x.w + 2 * ox) * x.c + c;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx = base + (static_cast<std::size_t>(2 * oy + dy) * x.w + 2 * ox + dx) * x.c + c;
              if (x.data[idx] > x.data[best]) best = idx;
            }
          }
          y.data[out_base + c] = x.data[best];
          if (keep) argmax_[out_base + c] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2::backward(const Tensor& grad_out) {
  if (grad_out.size() != argmax_.size()) throw ShapeError("pool backward without matching forward");
  Tensor dx(grad_out.n, in_h_, in_w_, grad_out.c);
  for (std::size_t i = 0; i < grad_out.size(); ++i) dx.data[argmax_[i]] += grad_out.data[i];
  argmax_.clear();
  return dx;
}

// --- L2Normalize --------------------------------------------------------------

Tensor L2Normalize::forward(const Tensor& x, Mode mode) {
  Tensor y = x;
  std::vector<float> norms(x.n);
  const std::size_t d = x.sample_size();
  for (int i = 0; i < x.n; ++i) {
    float* v = y.sample(i);
    double sq = 0;
    for (std::size_t k = 0; k < d; ++k) sq += static_cast<double>(v[k]) * v[k];
    const double norm = std::max(std::sqrt(sq), 1e-12);
    norms[i] = static_cast<float>(norm);
    for (std::size_t k = 0; k < d; ++k) v[k] = static_cast<float>(v[k] / norm);
  }
  if (mode == Mode::train) {
    output_ = y;
    norms_ = std::move(norms);
  }
  return y;
}

Tensor L2Normalize::backward(const Tensor& grad_out) {
  if (grad_out.size() != output_.size()) throw ShapeError("normalize backward without matching forward");
  Tensor dx = grad_out;
  const std::size_t d = grad_out.sample_size();
  for (int i = 0; i < grad_out.n; ++i) {
    const float* y = output_.sample(i);
    const float* g = grad_out.sample(i);
    double dot = 0;
    for (std::size_t k = 0; k < d; ++k) dot += static_cast<double>(y[k]) * g[k];
    float* out = dx.sample(i);
    for (std::size_t k = 0; k < d; ++k) out[k] = static_cast<float>((g[k] - y[k] * dot) / norms_[i]);
  }
  output_ = Tensor();
  return dx;
}

}  // namespace tae::nn
