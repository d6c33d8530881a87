#pragma once

#include <string>

#include "signattack/tensor.hpp"

namespace signattack {

// Bilinear resampling with half-pixel sample centers and edge clamping.
// Exact on constant inputs and on identity-size calls. This one kernel is
// shared by dataset ingestion, attention-map finalization and the mask
// branch upsampling, so every resize in the pipeline agrees.
Tensor bilinear_resize(const Tensor& src, int out_h, int out_w);

// Adjoint of bilinear_resize for the same shapes: scatters `grad_out`
// (1,out_h,out_w,c) back onto the source grid. Used by the upsample layer.
Tensor bilinear_resize_backward(const Tensor& grad_out, int in_h, int in_w);

// Crop rows [top, bottom) and cols [left, right) from a 1xHxWxC tensor.
Tensor crop(const Tensor& src, int left, int top, int right, int bottom);

// Decode an image file (png/jpg/ppm/...) to a 1xHxWx3 tensor in [0,1],
// RGB channel order. Throws IoError when the file cannot be read.
Tensor decode_image(const std::string& path);

// Encode a 1xHxWxC tensor ([0,1], C==1 or C==3) to an image file; the
// format follows the extension. C==1 writes grayscale.
void encode_image(const Tensor& img, const std::string& path);

// Minimal binary PPM (P6) writer, handy for fixtures without a codec.
void write_ppm(const Tensor& img, const std::string& path);

}  // namespace signattack
