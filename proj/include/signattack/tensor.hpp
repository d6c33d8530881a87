#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "signattack/errors.hpp"

namespace signattack {

// Dense NHWC tensor of doubles. N is the batch axis; single images are
// tensors with n == 1. Rank-2 data (masks, maps) uses c == 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int h, int w, int c)
      : n_(n), h_(h), w_(w), c_(c), data_(static_cast<std::size_t>(n) * h * w * c, 0.0) {
    if (n < 0 || h < 0 || w < 0 || c < 0) throw ShapeError("negative tensor dimension");
  }
  static Tensor hwc(int h, int w, int c) { return Tensor(1, h, w, c); }
  static Tensor vec(int len) { return Tensor(1, 1, 1, len); }

  int n() const { return n_; }
  int h() const { return h_; }
  int w() const { return w_; }
  int c() const { return c_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int in, int ih, int iw, int ic) { return data_[index(in, ih, iw, ic)]; }
  double at(int in, int ih, int iw, int ic) const { return data_[index(in, ih, iw, ic)]; }

  std::size_t index(int in, int ih, int iw, int ic) const {
    return ((static_cast<std::size_t>(in) * h_ + ih) * w_ + iw) * c_ + ic;
  }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
  }

  std::string shape_str() const {
    return "(" + std::to_string(n_) + "," + std::to_string(h_) + "," + std::to_string(w_) + "," +
           std::to_string(c_) + ")";
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  // image `i` of the batch as a 1xHxWxC tensor
  Tensor slice(int i) const {
    Tensor out(1, h_, w_, c_);
    std::size_t stride = static_cast<std::size_t>(h_) * w_ * c_;
    std::copy(data_.begin() + i * stride, data_.begin() + (i + 1) * stride, out.data_.begin());
    return out;
  }

  void set_slice(int i, const Tensor& img) {
    if (img.h_ != h_ || img.w_ != w_ || img.c_ != c_ || img.n_ != 1)
      throw ShapeError("set_slice shape mismatch: " + img.shape_str() + " into " + shape_str());
    std::size_t stride = static_cast<std::size_t>(h_) * w_ * c_;
    std::copy(img.data_.begin(), img.data_.end(), data_.begin() + i * stride);
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double min() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::min(m, v);
    return m;
  }
  double max() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::max(m, v);
    return m;
  }

  double l2_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }
  double l1_norm() const {
    double s = 0.0;
    for (double v : data_) s += std::abs(v);
    return s;
  }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

 private:
  int n_ = 0, h_ = 0, w_ = 0, c_ = 0;
  std::vector<double> data_;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.n(), t.h(), t.w(), t.c()); }

inline Tensor clip01(const Tensor& t) {
  Tensor out = t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
  return out;
}

}  // namespace signattack
