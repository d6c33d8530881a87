#include "signattack/nn.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "signattack/errors.hpp"
#include "signattack/image.hpp"

namespace signattack::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

namespace {

double he_limit(int fan_in) { return std::sqrt(6.0 / fan_in); }

void init_uniform(Tensor& t, double limit, Rng& rng) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
}

int out_size(int in, int ksize, int stride) {
  int pad = ksize / 2;
  return (in + 2 * pad - ksize) / stride + 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_c, int out_c, int ksize, int stride, Rng& rng)
    : in_c_(in_c), out_c_(out_c), ksize_(ksize), stride_(stride) {
  int k = ksize * ksize * in_c;
  weight = Tensor(1, 1, k, out_c);
  bias = Tensor(1, 1, 1, out_c);
  grad_weight = zeros_like(weight);
  grad_bias = zeros_like(bias);
  init_uniform(weight, he_limit(k), rng);
}

std::string Conv2d::kind() const {
  return "conv" + std::to_string(ksize_) + "x" + std::to_string(ksize_) + "_" +
         std::to_string(out_c_) + (stride_ > 1 ? "_s" + std::to_string(stride_) : "");
}

void Conv2d::build_col(const Tensor& x, std::vector<double>& col, int oh, int ow) const {
  const int pad = ksize_ / 2;
  const int kk = ksize_ * ksize_ * in_c_;
  col.assign(static_cast<std::size_t>(x.n()) * oh * ow * kk, 0.0);
  const int h = x.h(), w = x.w();
  for (int in = 0; in < x.n(); ++in) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double* row = col.data() + ((static_cast<std::size_t>(in) * oh + oy) * ow + ox) * kk;
        for (int ky = 0; ky < ksize_; ++ky) {
          int iy = oy * stride_ - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < ksize_; ++kx) {
            int ix = ox * stride_ - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const double* src = x.data() + x.index(in, iy, ix, 0);
            double* dst = row + (ky * ksize_ + kx) * in_c_;
            for (int ic = 0; ic < in_c_; ++ic) dst[ic] = src[ic];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c() != in_c_)
    throw ShapeError("conv2d expected " + std::to_string(in_c_) + " channels, got " + x.shape_str());
  input_ = x;
  const int oh = out_size(x.h(), ksize_, stride_);
  const int ow = out_size(x.w(), ksize_, stride_);
  const int kk = ksize_ * ksize_ * in_c_;
  build_col(x, col_scratch_, oh, ow);
  const long rows = static_cast<long>(x.n()) * oh * ow;

  Tensor out(x.n(), oh, ow, out_c_);
  ConstMapMat col(col_scratch_.data(), rows, kk);
  ConstMapMat wm(weight.data(), kk, out_c_);
  MapMat om(out.data(), rows, out_c_);
  om.noalias() = col * wm;
  om.rowwise() += ConstMapMat(bias.data(), 1, out_c_).row(0);
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const Tensor& x = input_;
  const int oh = grad_out.h(), ow = grad_out.w();
  const int kk = ksize_ * ksize_ * in_c_;
  const long rows = static_cast<long>(x.n()) * oh * ow;
  const int pad = ksize_ / 2;

  // im2col is rebuilt rather than cached; cheaper in memory for deep nets.
  build_col(x, col_scratch_, oh, ow);
  ConstMapMat col(col_scratch_.data(), rows, kk);
  ConstMapMat gm(grad_out.data(), rows, out_c_);

  MapMat gw(grad_weight.data(), kk, out_c_);
  gw.noalias() += col.transpose() * gm;
  // bias reduction in a fixed order; Eigen's vectorized column sums group
  // terms by buffer alignment, which breaks run-to-run reproducibility
  for (long r = 0; r < rows; ++r)
    for (int j = 0; j < out_c_; ++j) grad_bias[j] += gm(r, j);

  // grad wrt input: dcol = gout * W^T, then scatter back (col2im)
  RowMat dcol = gm * ConstMapMat(weight.data(), kk, out_c_).transpose();
  Tensor grad_in = zeros_like(x);
  const int h = x.h(), w = x.w();
  for (int in = 0; in < x.n(); ++in) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double* row = dcol.data() + ((static_cast<std::size_t>(in) * oh + oy) * ow + ox) * kk;
        for (int ky = 0; ky < ksize_; ++ky) {
          int iy = oy * stride_ - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < ksize_; ++kx) {
            int ix = ox * stride_ - pad + kx;
            if (ix < 0 || ix >= w) continue;
            double* dst = grad_in.data() + grad_in.index(in, iy, ix, 0);
            const double* src = row + (ky * ksize_ + kx) * in_c_;
            for (int ic = 0; ic < in_c_; ++ic) dst[ic] += src[ic];
          }
        }
      }
    }
  }
  return grad_in;
}

void Conv2d::collect_params(std::vector<ParamRef>& out) {
  out.push_back({&weight, &grad_weight});
  out.push_back({&bias, &grad_bias});
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(int in_features, int out_features, Rng& rng) : in_(in_features), out_(out_features) {
  weight = Tensor(1, 1, in_features, out_features);
  bias = Tensor(1, 1, 1, out_features);
  grad_weight = zeros_like(weight);
  grad_bias = zeros_like(bias);
  init_uniform(weight, he_limit(in_features), rng);
}

Tensor Dense::forward(const Tensor& x) {
  int features = x.h() * x.w() * x.c();
  if (features != in_)
    throw ShapeError("dense expected " + std::to_string(in_) + " features, got " + x.shape_str());
  input_ = x;
  in_h_ = x.h();
  in_w_ = x.w();
  in_c_ = x.c();
  Tensor out(x.n(), 1, 1, out_);
  ConstMapMat xm(x.data(), x.n(), in_);
  MapMat om(out.data(), x.n(), out_);
  om.noalias() = xm * ConstMapMat(weight.data(), in_, out_);
  om.rowwise() += ConstMapMat(bias.data(), 1, out_).row(0);
  return out;
}

Tensor Dense::backward(const Tensor& grad_out) {
  const int n = input_.n();
  ConstMapMat xm(input_.data(), n, in_);
  ConstMapMat gm(grad_out.data(), n, out_);
  MapMat gw(grad_weight.data(), in_, out_);
  gw.noalias() += xm.transpose() * gm;
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < out_; ++j) grad_bias[j] += gm(r, j);

  Tensor grad_in(n, in_h_, in_w_, in_c_);
  MapMat gi(grad_in.data(), n, in_);
  gi.noalias() = gm * ConstMapMat(weight.data(), in_, out_).transpose();
  return grad_in;
}

void Dense::collect_params(std::vector<ParamRef>& out) {
  out.push_back({&weight, &grad_weight});
  out.push_back({&bias, &grad_bias});
}

// ---------------------------------------------------------------------------
// Activations

Tensor Relu::forward(const Tensor& x) {
  input_ = x;
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return out;
}

Tensor Relu::backward(const Tensor& grad_out) {
  Tensor grad = grad_out;
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (input_[i] <= 0.0) grad[i] = 0.0;
  return grad;
}

Tensor TanhLayer::forward(const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  output_ = out;
  return out;
}

Tensor TanhLayer::backward(const Tensor& grad_out) {
  Tensor grad = grad_out;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= 1.0 - output_[i] * output_[i];
  return grad;
}

Tensor SigmoidLayer::forward(const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  output_ = out;
  return out;
}

Tensor SigmoidLayer::backward(const Tensor& grad_out) {
  Tensor grad = grad_out;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= output_[i] * (1.0 - output_[i]);
  return grad;
}

// ---------------------------------------------------------------------------
// MaxPool2

Tensor MaxPool2::forward(const Tensor& x) {
  in_n_ = x.n();
  in_h_ = x.h();
  in_w_ = x.w();
  in_c_ = x.c();
  const int oh = x.h() / 2, ow = x.w() / 2;
  if (oh == 0 || ow == 0) throw ShapeError("maxpool2 input too small: " + x.shape_str());
  Tensor out(x.n(), oh, ow, x.c());
  argmax_.assign(out.size(), 0);
  for (int in = 0; in < x.n(); ++in)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ic = 0; ic < x.c(); ++ic) {
          std::size_t best_idx = x.index(in, 2 * oy, 2 * ox, ic);
          double best = x[best_idx];
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              std::size_t idx = x.index(in, 2 * oy + dy, 2 * ox + dx, ic);
              if (x[idx] > best) {
                best = x[idx];
                best_idx = idx;
              }
            }
          std::size_t oidx = out.index(in, oy, ox, ic);
          out[oidx] = best;
          argmax_[oidx] = best_idx;
        }
  return out;
}

Tensor MaxPool2::backward(const Tensor& grad_out) {
  Tensor grad_in(in_n_, in_h_, in_w_, in_c_);
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[argmax_[i]] += grad_out[i];
  return grad_in;
}

// ---------------------------------------------------------------------------
// Softmax

Tensor Softmax::forward(const Tensor& x) {
  output_ = softmax_rows(x);
  return output_;
}

Tensor Softmax::backward(const Tensor& grad_out) {
  const int n = output_.n(), l = output_.c();
  Tensor grad_in = zeros_like(grad_out);
  for (int i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int j = 0; j < l; ++j) dot += grad_out.at(i, 0, 0, j) * output_.at(i, 0, 0, j);
    for (int j = 0; j < l; ++j)
      grad_in.at(i, 0, 0, j) = output_.at(i, 0, 0, j) * (grad_out.at(i, 0, 0, j) - dot);
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Sequential

Tensor Sequential::forward(const Tensor& x) { return forward_prefix(x, 0); }

Tensor Sequential::forward_prefix(const Tensor& x, int skip_last) {
  Tensor cur = x;
  for (std::size_t i = 0; i + skip_last < layers_.size(); ++i) cur = layers_[i]->forward(cur);
  return cur;
}

Tensor Sequential::backward(const Tensor& grad_out) { return backward_prefix(grad_out, 0); }

Tensor Sequential::backward_prefix(const Tensor& grad_out, int skip_last) {
  Tensor cur = grad_out;
  for (std::size_t i = layers_.size() - skip_last; i-- > 0;) cur = layers_[i]->backward(cur);
  return cur;
}

void Sequential::collect_params(std::vector<ParamRef>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

std::vector<std::string> Sequential::summary() const {
  std::vector<std::string> out;
  out.reserve(layers_.size());
  for (const auto& l : layers_) out.push_back(l->kind());
  return out;
}

// ---------------------------------------------------------------------------
// ResidualUnit

namespace {
LayerPtr make_activation(const std::string& name) {
  if (name == "relu") return std::make_unique<Relu>();
  if (name == "tanh") return std::make_unique<TanhLayer>();
  throw ConfigError("unknown activation '" + name + "'");
}
}  // namespace

ResidualUnit::ResidualUnit(int in_c, int out_c, int stride, const std::string& activation, Rng& rng) {
  act1_ = make_activation(activation);
  act2_ = make_activation(activation);
  conv1_ = std::make_unique<Conv2d>(in_c, out_c, 3, stride, rng);
  conv2_ = std::make_unique<Conv2d>(out_c, out_c, 3, 1, rng);
  if (in_c != out_c || stride != 1) shortcut_ = std::make_unique<Conv2d>(in_c, out_c, 1, stride, rng);
}

Tensor ResidualUnit::forward(const Tensor& x) {
  Tensor r = conv2_->forward(act2_->forward(conv1_->forward(act1_->forward(x))));
  Tensor s = shortcut_ ? shortcut_->forward(x) : x;
  if (!r.same_shape(s)) throw ShapeError("residual shapes diverge: " + r.shape_str());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += s[i];
  return r;
}

Tensor ResidualUnit::backward(const Tensor& grad_out) {
  Tensor grad_branch = act1_->backward(conv1_->backward(act2_->backward(conv2_->backward(grad_out))));
  Tensor grad_shortcut = shortcut_ ? shortcut_->backward(grad_out) : grad_out;
  for (std::size_t i = 0; i < grad_branch.size(); ++i) grad_branch[i] += grad_shortcut[i];
  return grad_branch;
}

void ResidualUnit::collect_params(std::vector<ParamRef>& out) {
  conv1_->collect_params(out);
  conv2_->collect_params(out);
  if (shortcut_) shortcut_->collect_params(out);
}

// ---------------------------------------------------------------------------
// MaskBranch

MaskBranch::MaskBranch(int channels, int max_down, Rng& rng)
    : channels_(channels), max_down_(max_down) {
  for (int i = 0; i < max_down; ++i) {
    pools_.push_back(std::make_unique<MaxPool2>());
    down_units_.push_back(std::make_unique<ResidualUnit>(channels, channels, 1, "relu", rng));
    up_units_.push_back(std::make_unique<ResidualUnit>(channels, channels, 1, "relu", rng));
  }
  out_conv_ = std::make_unique<Conv2d>(channels, channels, 1, 1, rng);
}

Tensor MaskBranch::forward(const Tensor& x) {
  sizes_.clear();
  Tensor cur = x;
  used_down_ = 0;
  for (int i = 0; i < max_down_; ++i) {
    if (cur.h() < 2 || cur.w() < 2) break;  // tiny maps stop early
    sizes_.emplace_back(cur.h(), cur.w());
    cur = pools_[i]->forward(cur);
    cur = down_units_[i]->forward(cur);
    ++used_down_;
  }
  for (int i = used_down_; i-- > 0;) {
    cur = up_units_[i]->forward(cur);
    auto [h, w] = sizes_[i];
    Tensor up(cur.n(), h, w, cur.c());
    for (int in = 0; in < cur.n(); ++in) up.set_slice(in, bilinear_resize(cur.slice(in), h, w));
    cur = std::move(up);
  }
  cur = out_conv_->forward(cur);
  return sigmoid_.forward(cur);
}

Tensor MaskBranch::backward(const Tensor& grad_out) {
  Tensor cur = sigmoid_.backward(grad_out);
  cur = out_conv_->backward(cur);
  // unwind the top-down (upsampling) path first, then the bottom-up path
  for (int i = 0; i < used_down_; ++i) {
    int ph = sizes_[i].first / 2, pw = sizes_[i].second / 2;
    Tensor down(cur.n(), ph, pw, cur.c());
    for (int in = 0; in < cur.n(); ++in)
      down.set_slice(in, bilinear_resize_backward(cur.slice(in), ph, pw));
    cur = up_units_[i]->backward(down);
  }
  for (int i = used_down_; i-- > 0;) {
    cur = down_units_[i]->backward(cur);
    cur = pools_[i]->backward(cur);
  }
  return cur;
}

void MaskBranch::collect_params(std::vector<ParamRef>& out) {
  for (int i = 0; i < max_down_; ++i) {
    down_units_[i]->collect_params(out);
    up_units_[i]->collect_params(out);
  }
  out_conv_->collect_params(out);
}

// ---------------------------------------------------------------------------
// AttentionModule

AttentionModule::AttentionModule(int channels, const std::string& activation, Rng& rng) {
  pre_ = std::make_unique<ResidualUnit>(channels, channels, 1, activation, rng);
  trunk_.push_back(std::make_unique<ResidualUnit>(channels, channels, 1, activation, rng));
  trunk_.push_back(std::make_unique<ResidualUnit>(channels, channels, 1, activation, rng));
  mask_ = std::make_unique<MaskBranch>(channels, 2, rng);
  post_ = std::make_unique<ResidualUnit>(channels, channels, 1, activation, rng);
}

Tensor AttentionModule::forward(const Tensor& x) {
  Tensor p = pre_->forward(x);
  Tensor t = p;
  for (auto& u : trunk_) t = u->forward(t);
  Tensor m = mask_->forward(p);
  if (!m.same_shape(t)) throw ShapeError("mask/trunk shape mismatch " + m.shape_str());
  Tensor h = t;
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = (1.0 + m[i]) * t[i];
  trunk_out_ = t;
  mask_out_ = m;
  if (capture_) {
    last_trunk_ = t;
    last_mask_ = m;
    last_combined_ = h;
  }
  return post_->forward(h);
}

Tensor AttentionModule::backward(const Tensor& grad_out) {
  Tensor gh = post_->backward(grad_out);
  Tensor gt = gh;  // dH/dT = (1+M)
  Tensor gm = gh;  // dH/dM = T
  for (std::size_t i = 0; i < gh.size(); ++i) {
    gt[i] = gh[i] * (1.0 + mask_out_[i]);
    gm[i] = gh[i] * trunk_out_[i];
  }
  Tensor gp_mask = mask_->backward(gm);
  Tensor gp_trunk = gt;
  for (std::size_t i = trunk_.size(); i-- > 0;) gp_trunk = trunk_[i]->backward(gp_trunk);
  for (std::size_t i = 0; i < gp_trunk.size(); ++i) gp_trunk[i] += gp_mask[i];
  return pre_->backward(gp_trunk);
}

void AttentionModule::collect_params(std::vector<ParamRef>& out) {
  pre_->collect_params(out);
  for (auto& u : trunk_) u->collect_params(out);
  mask_->collect_params(out);
  post_->collect_params(out);
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(const std::vector<ParamRef>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(zeros_like(*p.value));
      v_.push_back(zeros_like(*p.value));
    }
  }
  if (m_.size() != params.size()) throw NumericError("adam parameter set changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& value = *params[i].value;
    const Tensor& grad = *params[i].grad;
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * grad[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * grad[j] * grad[j];
      value[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

void Adam::reset() {
  m_.clear();
  v_.clear();
  t_ = 0;
}

// ---------------------------------------------------------------------------
// Losses

Tensor softmax_rows(const Tensor& logits) {
  const int n = logits.n(), l = logits.c();
  Tensor out = logits;
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < l; ++j) mx = std::max(mx, logits.at(i, 0, 0, j));
    double sum = 0.0;
    for (int j = 0; j < l; ++j) {
      double e = std::exp(logits.at(i, 0, 0, j) - mx);
      out.at(i, 0, 0, j) = e;
      sum += e;
    }
    for (int j = 0; j < l; ++j) out.at(i, 0, 0, j) /= sum;
  }
  return out;
}

int argmax_row(const Tensor& probs, int row) {
  int best = 0;
  double bv = probs.at(row, 0, 0, 0);
  for (int j = 1; j < probs.c(); ++j) {
    double v = probs.at(row, 0, 0, j);
    if (v > bv) {
      bv = v;
      best = j;
    }
  }
  return best;
}

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  const int n = logits.n(), l = logits.c();
  if (static_cast<int>(targets.size()) != n) throw ShapeError("targets/batch size mismatch");
  CrossEntropyResult res;
  res.per_sample.resize(n);
  res.predicted.resize(n);
  res.grad_logits = zeros_like(logits);
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < l; ++j) mx = std::max(mx, logits.at(i, 0, 0, j));
    double sum = 0.0;
    for (int j = 0; j < l; ++j) sum += std::exp(logits.at(i, 0, 0, j) - mx);
    double lse = mx + std::log(sum);
    int y = targets[i];
    if (y < 0 || y >= l) throw ShapeError("target label out of range");
    res.per_sample[i] = lse - logits.at(i, 0, 0, y);
    res.mean_loss += res.per_sample[i] / n;
    int best = 0;
    double bv = logits.at(i, 0, 0, 0);
    for (int j = 1; j < l; ++j)
      if (logits.at(i, 0, 0, j) > bv) {
        bv = logits.at(i, 0, 0, j);
        best = j;
      }
    res.predicted[i] = best;
    for (int j = 0; j < l; ++j) {
      double p = std::exp(logits.at(i, 0, 0, j) - lse);
      res.grad_logits.at(i, 0, 0, j) = (p - (j == y ? 1.0 : 0.0)) / n;
    }
  }
  return res;
}

void zero_grads(const std::vector<ParamRef>& params) {
  for (const auto& p : params) p.grad->fill(0.0);
}

}  // namespace signattack::nn
