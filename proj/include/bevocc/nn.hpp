#pragma once

#include "bevocc/tensor.hpp"

namespace bevocc {

// Parameters of an isotropic 2D convolution (cross-correlation). Weight is
// [C_out, C_in, k, k], bias [C_out]. k must be odd so that "same" padding
// (k-1)/2 keeps spatial dims at stride 1.
struct Conv2dParams {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kernel = 1;
  int64_t stride = 1;
  int64_t padding = 0;
  Tensor weight;
  Tensor bias;

  static Conv2dParams make(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride, int64_t padding);
  void validate() const;
};

// 3D analogue; weight [C_out, C_in, k, k, k].
struct Conv3dParams {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kernel = 1;
  int64_t stride = 1;
  int64_t padding = 0;
  Tensor weight;
  Tensor bias;

  static Conv3dParams make(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride, int64_t padding);
  void validate() const;
};

// input [C_in, H, W] -> [C_out, H', W'] with H' = (H + 2p - k)/stride + 1.
// The division must be exact; a remainder is a configuration error.
Tensor conv2d(const Tensor& input, const Conv2dParams& p);

struct Conv2dGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};
// Exact analytic gradients of conv2d for upstream grad_out [C_out, H', W'].
Conv2dGrads conv2d_backward(const Tensor& input, const Conv2dParams& p, const Tensor& grad_out);

// input [C_in, H, W, Z] -> [C_out, H', W', Z']. Forward only; this head-side
// kernel exists for the 3D-FCN comparison path and the FLOPs benchmark.
Tensor conv3d(const Tensor& input, const Conv3dParams& p);

// Elementwise max(0, x); subgradient at exactly 0 is 0.
Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

// [C, H, W] -> [C, 2H, 2W], align-corners-false: output center o samples the
// input at (o + 0.5)/2 - 0.5, clamped to the borders.
Tensor upsample2x_bilinear(const Tensor& input);

// [C, H, W] -> [C, H, W, Z]; every z-slice equals the input.
Tensor repeat_z(const Tensor& input, int64_t z);

// Softmax over the leading (channel) axis of [C, ...], max-subtracted.
Tensor channel_softmax(const Tensor& input);

// Channel concat of [Ca, rest...] and [Cb, rest...] -> [Ca+Cb, rest...],
// a's channels first. Non-channel dims must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// [C, H, W, Z] -> [C, 2H, 2W, 2Z] by nearest neighbor.
Tensor nearest_upsample2x_3d(const Tensor& input);

}  // namespace bevocc
