#pragma once

#include <memory>
#include <string>
#include <vector>

#include "signattack/rng.hpp"
#include "signattack/tensor.hpp"

namespace signattack::nn {

struct ParamRef {
  Tensor* value;
  Tensor* grad;
};

// Backprop-capable layer. forward() caches whatever backward() needs, so a
// layer instance tracks exactly one in-flight batch.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x) = 0;
  // Returns grad wrt input; accumulates into parameter grads.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_params(std::vector<ParamRef>&) {}
  virtual std::string kind() const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

// 2-D convolution, NHWC, zero 'same' padding, square kernel. Backed by
// im2col + Eigen GEMM.
class Conv2d : public Layer {
 public:
  Conv2d(int in_c, int out_c, int ksize, int stride, Rng& rng);
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  std::string kind() const override;

  Tensor weight;  // (ksize*ksize*in_c, out_c) as (1,1,K,out_c)
  Tensor bias;    // (1,1,1,out_c)
  Tensor grad_weight, grad_bias;

 private:
  void build_col(const Tensor& x, std::vector<double>& col, int oh, int ow) const;
  int in_c_, out_c_, ksize_, stride_;
  Tensor input_;
  std::vector<double> col_scratch_;
};

// Fully connected layer; flattens whatever comes in.
class Dense : public Layer {
 public:
  Dense(int in_features, int out_features, Rng& rng);
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  std::string kind() const override { return "dense"; }

  Tensor weight;  // (1,1,in,out)
  Tensor bias;
  Tensor grad_weight, grad_bias;

 private:
  int in_, out_;
  Tensor input_;
  int in_h_ = 0, in_w_ = 0, in_c_ = 0;
};

class Relu : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "relu"; }

 private:
  Tensor input_;
};

class TanhLayer : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "tanh"; }

 private:
  Tensor output_;
};

class SigmoidLayer : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "sigmoid"; }

 private:
  Tensor output_;
};

// 2x2 max pooling, stride 2, floor semantics on odd sizes.
class MaxPool2 : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "maxpool2"; }

 private:
  std::vector<std::size_t> argmax_;
  int in_n_ = 0, in_h_ = 0, in_w_ = 0, in_c_ = 0;
};

// Row-wise softmax over the channel axis of (N,1,1,L).
class Softmax : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "softmax"; }

 private:
  Tensor output_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  void add(LayerPtr layer) { layers_.push_back(std::move(layer)); }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  std::string kind() const override { return "sequential"; }

  // Forward stopping before the final `skip_last` layers (used to get
  // logits out of a net whose last layer is softmax).
  Tensor forward_prefix(const Tensor& x, int skip_last);
  // Backward matching a forward_prefix call with the same skip_last.
  Tensor backward_prefix(const Tensor& grad_out, int skip_last);

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  std::vector<std::string> summary() const;

 private:
  std::vector<LayerPtr> layers_;
};

// Pre-activation residual unit: y = shortcut(x) + conv(act(conv(act(x)))).
// The shortcut is identity unless channels or stride change, in which case
// it is a 1x1 convolution with the unit's stride.
class ResidualUnit : public Layer {
 public:
  // activation: "relu" or "tanh"
  ResidualUnit(int in_c, int out_c, int stride, const std::string& activation, Rng& rng);
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  std::string kind() const override { return "residual_unit"; }

 private:
  LayerPtr act1_, act2_;
  std::unique_ptr<Conv2d> conv1_, conv2_;
  std::unique_ptr<Conv2d> shortcut_;  // null = identity
};

// Soft mask branch: a bottom-up/top-down path. Downsamples with 2x2 max
// pooling (at most `max_down` times, fewer on tiny inputs), processes with
// residual units, upsamples back to the recorded sizes with bilinear
// interpolation and ends in 1x1 conv + sigmoid, so outputs lie in [0,1].
class MaskBranch : public Layer {
 public:
  MaskBranch(int channels, int max_down, Rng& rng);
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  std::string kind() const override { return "mask_branch"; }

 private:
  int channels_, max_down_;
  std::vector<std::unique_ptr<MaxPool2>> pools_;
  std::vector<std::unique_ptr<ResidualUnit>> down_units_;
  std::vector<std::unique_ptr<ResidualUnit>> up_units_;
  std::unique_ptr<Conv2d> out_conv_;
  SigmoidLayer sigmoid_;
  std::vector<std::pair<int, int>> sizes_;  // spatial size before each pool
  int used_down_ = 0;
};

// One attention module: pre residual unit, a trunk of residual units and a
// soft mask branch, combined as H = (1 + M) * T, then a post residual unit.
class AttentionModule : public Layer {
 public:
  AttentionModule(int channels, const std::string& activation, Rng& rng);
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  std::string kind() const override { return "attention_module"; }

  void set_capture(bool on) { capture_ = on; }
  const Tensor& last_trunk() const { return last_trunk_; }
  const Tensor& last_mask() const { return last_mask_; }
  const Tensor& last_combined() const { return last_combined_; }

 private:
  std::unique_ptr<ResidualUnit> pre_;
  std::vector<std::unique_ptr<ResidualUnit>> trunk_;
  std::unique_ptr<MaskBranch> mask_;
  std::unique_ptr<ResidualUnit> post_;
  bool capture_ = false;
  Tensor trunk_out_, mask_out_;
  Tensor last_trunk_, last_mask_, last_combined_;
};

// ADAM over a fixed parameter set. State is keyed by position, so the
// parameter list must be stable across steps.
class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}
  void step(const std::vector<ParamRef>& params);
  void reset();

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Fused softmax + cross-entropy on logits (N,1,1,L).
struct CrossEntropyResult {
  double mean_loss = 0.0;
  std::vector<double> per_sample;
  std::vector<int> predicted;  // argmax of logits, lowest index on ties
  Tensor grad_logits;          // gradient of the *mean* loss
};
CrossEntropyResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Stable row-wise softmax of (N,1,1,L).
Tensor softmax_rows(const Tensor& logits);

// Argmax over the channel axis, lowest index wins ties.
int argmax_row(const Tensor& probs, int row);

void zero_grads(const std::vector<ParamRef>& params);

}  // namespace signattack::nn
