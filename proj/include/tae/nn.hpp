#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace tae::nn {

/// Dense float tensor in NHWC order. Fully connected activations use
/// h = w = 1.
struct Tensor {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int h_, int w_, int c_, float fill = 0.0f)
      : n(n_), h(h_), w(w_), c(c_), data(static_cast<std::size_t>(n_) * h_ * w_ * c_, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t sample_size() const noexcept { return static_cast<std::size_t>(h) * w * c; }
  float* sample(int i) { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  const float* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
};

enum class Mode { train, eval };

/// A trainable tensor and its accumulated gradient.
struct Param {
  std::string name;
  std::vector<float> value;
  std::vector<float> grad;
};

/// Non-trainable state carried in checkpoints (batch-norm running moments).
struct Buffer {
  std::string name;
  std::vector<float> value;
};

/// Same-stride (1) convolution with symmetric zero padding. Weights are laid
/// out [k*k*in, out] with the input channel fastest.
class Conv2d {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int padding);

  Tensor forward(const Tensor& x, Mode mode);
  /// Accumulates weight gradients; returns the input gradient unless
  /// `need_input_grad` is false (first layer).
  Tensor backward(const Tensor& grad_out, bool need_input_grad = true);

  int output_size(int input) const noexcept { return input + 2 * padding_ - kernel_ + 1; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }
  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }
  int kernel() const noexcept { return kernel_; }

 private:
  void im2col(const Tensor& x, int first, int count, int ho, int wo, float* col) const;
  void col2im(const float* col, int first, int count, int ho, int wo, Tensor& dx) const;

  int in_, out_, kernel_, padding_;
  Param weight_, bias_;
  Tensor input_;
};

class Linear {
 public:
  Linear(std::string name, int in_features, int out_features);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& grad_out);

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }
  int in_features() const noexcept { return in_; }
  int out_features() const noexcept { return out_; }

 private:
  int in_, out_;
  Param weight_, bias_;
  Tensor input_;
};

/// Batch normalization over every axis but the channel axis. Training mode
/// normalizes with batch moments and updates the running moments; evaluation
/// mode uses the running moments only.
class BatchNorm {
 public:
  BatchNorm(std::string name, int channels, float momentum = 0.1f, float eps = 1e-5f);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& grad_out);

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }
  const Param& gamma() const { return gamma_; }
  const Param& beta() const { return beta_; }
  Buffer& running_mean() { return running_mean_; }
  Buffer& running_var() { return running_var_; }

 private:
  int channels_;
  float momentum_, eps_;
  Param gamma_, beta_;
  Buffer running_mean_, running_var_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

class Relu {
 public:
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& grad_out);

 private:
  std::vector<std::uint8_t> mask_;
};

/// 2x2 window, stride 2, floor on odd sizes.
class MaxPool2 {
 public:
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& grad_out);

 private:
  int in_h_ = 0, in_w_ = 0;
  std::vector<std::uint32_t> argmax_;
};

/// Scales each sample to unit Euclidean norm.
class L2Normalize {
 public:
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& grad_out);

 private:
  Tensor output_;
  std::vector<float> norms_;
};

}  // namespace tae::nn
