#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "sparsepriv/butterfly.hpp"
#include "sparsepriv/rng.hpp"
#include "sparsepriv/tensor.hpp"

namespace sparsepriv::nn {

/// A named trainable tensor with its gradient and an optional binary prune
/// mask. When a mask is present, masked positions of value and grad are kept
/// at exactly zero by backward() and the optimizers.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor mask;  // empty, or 0/1 tensor of value's shape
  bool prunable = false;
  bool decay = false;  // weight-decay eligible

  explicit Parameter(std::vector<std::size_t> shape, bool prunable_ = false,
                     bool decay_ = false)
      : value(shape), grad(shape), prunable(prunable_), decay(decay_) {}

  bool has_mask() const { return mask.size() != 0; }

  void ensure_mask() {
    if (!has_mask()) mask = Tensor(value.shape(), 1.0);
  }

  void apply_mask() {
    if (!has_mask()) return;
    for (std::size_t i = 0; i < value.size(); ++i)
      if (mask[i] == 0.0) value[i] = 0.0;
  }

  void mask_grad() {
    if (!has_mask()) return;
    for (std::size_t i = 0; i < grad.size(); ++i)
      if (mask[i] == 0.0) grad[i] = 0.0;
  }

  void zero_grad() { grad.fill(0.0); }
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& x, bool training) = 0;

  /// Backpropagates grad (shape of the last forward output), accumulating into
  /// parameter gradients, and returns the gradient w.r.t. the layer input.
  /// Throws UsageError if no forward pass has been recorded.
  virtual Tensor backward(const Tensor& grad) = 0;

  virtual void collect_params(const std::string& prefix,
                              std::vector<Parameter*>& out) {}
  virtual void collect_buffers(const std::string& prefix,
                               std::vector<NamedTensor>& out) {}

  /// Draws initial parameter values from the layer's fan-in rule.
  virtual void init_params(Rng& rng) {}

  /// Structural parameter counting; butterfly-backed layers report their
  /// chain value count against the dense equivalent.
  virtual void add_param_counts(butterfly::ParamCount& pc) const;

  virtual std::string kind() const = 0;

 protected:
  void require_forwarded(const char* who) const;
  bool forwarded_ = false;
};

/// Fully connected layer; optionally butterfly-factorized, in which case the
/// weight matrix is a monotone chain and only the factor values are trainable.
class Dense : public Layer {
 public:
  Dense(std::size_t in, std::size_t out, bool bias = true);

  /// Turns the weight into a minimal-parameter monotone chain with
  /// factor_count factors and draws fresh factor values.
  void substitute_with_chain(std::size_t factor_count, Rng& rng);
  bool is_butterfly() const { return !chain_patterns_.empty(); }

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(const std::string& prefix,
                      std::vector<Parameter*>& out) override;
  void init_params(Rng& rng) override;
  void add_param_counts(butterfly::ParamCount& pc) const override;
  std::string kind() const override { return is_butterfly() ? "butterfly-dense" : "dense"; }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Tensor dense_weight() const;  // densified chain or plain weight copy
  const std::vector<butterfly::SupportPattern>& chain_patterns() const {
    return chain_patterns_;
  }
  std::vector<Parameter>& factor_params() { return factor_params_; }

 private:
  std::size_t in_, out_;
  bool has_bias_;
  std::unique_ptr<Parameter> weight_;  // null when butterfly
  std::unique_ptr<Parameter> bias_;
  std::vector<butterfly::SupportPattern> chain_patterns_;
  std::vector<Parameter> factor_params_;
  Tensor cached_input_;
  std::vector<Tensor> cached_stages_;
};

/// 3x3/1x1-style convolution with stride and zero padding; weight layout is
/// (out, in, kh, kw), flattened row-major to an (out) x (in*kh*kw) matrix for
/// the butterfly substitution (input channels outermost).
class Conv2d : public Layer {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
         std::size_t stride = 1, std::size_t padding = 0, bool bias = false);

  void substitute_with_chain(std::size_t factor_count, Rng& rng);
  bool is_butterfly() const { return !chain_patterns_.empty(); }

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(const std::string& prefix,
                      std::vector<Parameter*>& out) override;
  void init_params(Rng& rng) override;
  void add_param_counts(butterfly::ParamCount& pc) const override;
  std::string kind() const override { return is_butterfly() ? "butterfly-conv2d" : "conv2d"; }

  std::size_t in_channels() const { return in_ch_; }
  std::size_t out_channels() const { return out_ch_; }
  std::size_t kernel() const { return kernel_; }
  Tensor dense_weight_matrix() const;  // (out, in*kh*kw)
  const std::vector<butterfly::SupportPattern>& chain_patterns() const {
    return chain_patterns_;
  }
  std::vector<Parameter>& factor_params() { return factor_params_; }

 private:
  Tensor im2col(const Tensor& x, std::size_t sample) const;
  void col2im_accum(const Tensor& cols, std::size_t sample, Tensor& gx) const;

  std::size_t in_ch_, out_ch_, kernel_, stride_, pad_;
  bool has_bias_;
  std::unique_ptr<Parameter> weight_;
  std::unique_ptr<Parameter> bias_;
  std::vector<butterfly::SupportPattern> chain_patterns_;
  std::vector<Parameter> factor_params_;
  Tensor cached_input_;
  std::array<std::size_t, 2> out_hw_{0, 0};
};

/// Per-channel batch normalization over (N, C, H, W); batch statistics in
/// training mode, running statistics in eval mode (torch-style update of the
/// running buffers with momentum 0.1 and unbiased variance).
class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(std::size_t channels, double eps = 1e-5,
                       double momentum = 0.1);

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(const std::string& prefix,
                      std::vector<Parameter*>& out) override;
  void collect_buffers(const std::string& prefix,
                       std::vector<NamedTensor>& out) override;
  void init_params(Rng& rng) override;
  std::string kind() const override { return "batch-norm"; }

 private:
  std::size_t channels_;
  double eps_, momentum_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor cached_xhat_, cached_invstd_;
  std::size_t cached_per_channel_ = 0;
  bool cached_training_ = false;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad) override;
  std::string kind() const override { return "relu"; }

 private:
  Tensor cached_input_;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad) override;
  std::string kind() const override { return "sigmoid"; }

 private:
  Tensor cached_output_;
};

/// Global average pooling (N, C, H, W) -> (N, C).
class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad) override;
  std::string kind() const override { return "average-pool"; }

 private:
  std::vector<std::size_t> cached_shape_;
};

/// Basic residual block: conv-bn-relu-conv-bn plus identity or projection
/// (1x1 conv + bn) skip, followed by a ReLU on the sum.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(std::size_t in_ch, std::size_t out_ch, std::size_t stride);

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(const std::string& prefix,
                      std::vector<Parameter*>& out) override;
  void collect_buffers(const std::string& prefix,
                       std::vector<NamedTensor>& out) override;
  void init_params(Rng& rng) override;
  void add_param_counts(butterfly::ParamCount& pc) const override;
  std::string kind() const override { return "residual-block"; }

  std::size_t out_channels() const { return out_ch_; }

  /// The block's convolutions (conv1, conv2 and, when present, the
  /// projection), for butterfly substitution.
  std::vector<Conv2d*> convolutions();

 private:
  std::size_t out_ch_;
  Conv2d conv1_, conv2_;
  BatchNorm2d bn1_, bn2_;
  ReLU relu1_, relu_out_;
  std::unique_ptr<Conv2d> ds_conv_;
  std::unique_ptr<BatchNorm2d> ds_bn_;
};

}  // namespace sparsepriv::nn
