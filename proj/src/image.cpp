#include "signattack/image.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "signattack/errors.hpp"

namespace signattack {

namespace {

struct Tap {
  int lo, hi;
  double frac;  // weight on hi
};

// Half-pixel sample centers, clamped to the source grid. scale == 1 maps
// every output pixel onto its own source pixel exactly.
Tap tap_for(int out_idx, int in_size, int out_size) {
  double pos = (out_idx + 0.5) * (static_cast<double>(in_size) / out_size) - 0.5;
  double fl = std::floor(pos);
  Tap t;
  t.frac = pos - fl;
  t.lo = std::clamp(static_cast<int>(fl), 0, in_size - 1);
  t.hi = std::clamp(static_cast<int>(fl) + 1, 0, in_size - 1);
  return t;
}

}  // namespace

Tensor bilinear_resize(const Tensor& src, int out_h, int out_w) {
  if (src.n() != 1) throw ShapeError("bilinear_resize expects a single image, got " + src.shape_str());
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize target must be positive");
  const int c = src.c();
  Tensor out(1, out_h, out_w, c);
  for (int oy = 0; oy < out_h; ++oy) {
    Tap ty = tap_for(oy, src.h(), out_h);
    for (int ox = 0; ox < out_w; ++ox) {
      Tap tx = tap_for(ox, src.w(), out_w);
      for (int ic = 0; ic < c; ++ic) {
        double v00 = src.at(0, ty.lo, tx.lo, ic);
        double v01 = src.at(0, ty.lo, tx.hi, ic);
        double v10 = src.at(0, ty.hi, tx.lo, ic);
        double v11 = src.at(0, ty.hi, tx.hi, ic);
        double top = v00 + (v01 - v00) * tx.frac;
        double bot = v10 + (v11 - v10) * tx.frac;
        out.at(0, oy, ox, ic) = top + (bot - top) * ty.frac;
      }
    }
  }
  return out;
}

Tensor bilinear_resize_backward(const Tensor& grad_out, int in_h, int in_w) {
  if (grad_out.n() != 1) throw ShapeError("bilinear_resize_backward expects a single image");
  const int c = grad_out.c();
  Tensor grad_in(1, in_h, in_w, c);
  for (int oy = 0; oy < grad_out.h(); ++oy) {
    Tap ty = tap_for(oy, in_h, grad_out.h());
    for (int ox = 0; ox < grad_out.w(); ++ox) {
      Tap tx = tap_for(ox, in_w, grad_out.w());
      for (int ic = 0; ic < c; ++ic) {
        double g = grad_out.at(0, oy, ox, ic);
        grad_in.at(0, ty.lo, tx.lo, ic) += g * (1.0 - ty.frac) * (1.0 - tx.frac);
        grad_in.at(0, ty.lo, tx.hi, ic) += g * (1.0 - ty.frac) * tx.frac;
        grad_in.at(0, ty.hi, tx.lo, ic) += g * ty.frac * (1.0 - tx.frac);
        grad_in.at(0, ty.hi, tx.hi, ic) += g * ty.frac * tx.frac;
      }
    }
  }
  return grad_in;
}

Tensor crop(const Tensor& src, int left, int top, int right, int bottom) {
  if (src.n() != 1) throw ShapeError("crop expects a single image");
  if (left < 0 || top < 0 || right > src.w() || bottom > src.h() || right <= left || bottom <= top)
    throw DataError("crop box [" + std::to_string(left) + "," + std::to_string(top) + "," +
                    std::to_string(right) + "," + std::to_string(bottom) + ") outside image " +
                    src.shape_str());
  Tensor out(1, bottom - top, right - left, src.c());
  for (int y = top; y < bottom; ++y)
    for (int x = left; x < right; ++x)
      for (int ic = 0; ic < src.c(); ++ic) out.at(0, y - top, x - left, ic) = src.at(0, y, x, ic);
  return out;
}

Tensor decode_image(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);  // BGR, 8-bit, 3 channels
  if (mat.empty()) throw IoError("cannot decode image '" + path + "'");
  Tensor out(1, mat.rows, mat.cols, 3);
  for (int y = 0; y < mat.rows; ++y) {
    const cv::Vec3b* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < mat.cols; ++x) {
      out.at(0, y, x, 0) = row[x][2] / 255.0;
      out.at(0, y, x, 1) = row[x][1] / 255.0;
      out.at(0, y, x, 2) = row[x][0] / 255.0;
    }
  }
  return out;
}

void encode_image(const Tensor& img, const std::string& path) {
  if (img.n() != 1 || (img.c() != 1 && img.c() != 3))
    throw ShapeError("encode_image expects 1xHxWx1 or 1xHxWx3, got " + img.shape_str());
  cv::Mat mat(img.h(), img.w(), img.c() == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x) {
      if (img.c() == 3) {
        cv::Vec3b& px = mat.at<cv::Vec3b>(y, x);
        px[2] = static_cast<unsigned char>(std::lround(std::clamp(img.at(0, y, x, 0), 0.0, 1.0) * 255.0));
        px[1] = static_cast<unsigned char>(std::lround(std::clamp(img.at(0, y, x, 1), 0.0, 1.0) * 255.0));
        px[0] = static_cast<unsigned char>(std::lround(std::clamp(img.at(0, y, x, 2), 0.0, 1.0) * 255.0));
      } else {
        mat.at<unsigned char>(y, x) =
            static_cast<unsigned char>(std::lround(std::clamp(img.at(0, y, x, 0), 0.0, 1.0) * 255.0));
      }
    }
  if (!cv::imwrite(path, mat)) throw IoError("cannot write image '" + path + "'");
}

void write_ppm(const Tensor& img, const std::string& path) {
  if (img.n() != 1 || img.c() != 3) throw ShapeError("write_ppm expects 1xHxWx3");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "P6\n" << img.w() << " " << img.h() << "\n255\n";
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x)
      for (int ic = 0; ic < 3; ++ic)
        f.put(static_cast<char>(std::lround(std::clamp(img.at(0, y, x, ic), 0.0, 1.0) * 255.0)));
  if (!f) throw IoError("short write to '" + path + "'");
}

}  // namespace signattack
