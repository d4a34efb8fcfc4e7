#include "bevocc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "bevocc/parallel.hpp"

namespace bevocc {

namespace {

int64_t out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad, const char* op) {
  const int64_t span = in + 2 * pad - k;
  if (span < 0)
    throw std::invalid_argument(std::string(op) + ": kernel does not fit input extent " +
                                std::to_string(in) + " with padding " + std::to_string(pad));
  if (span % stride != 0)
    throw std::invalid_argument(std::string(op) + ": non-integral output extent for input " +
                                std::to_string(in) + ", k=" + std::to_string(k) +
                                ", stride=" + std::to_string(stride) + ", pad=" + std::to_string(pad));
  return span / stride + 1;
}

void validate_conv_common(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride, int64_t padding,
                          const char* op) {
  if (in_ch < 1 || out_ch < 1)
    throw std::invalid_argument(std::string(op) + ": channel counts must be >= 1");
  if (k < 1 || k % 2 == 0)
    throw std::invalid_argument(std::string(op) + ": kernel size must be odd, got " + std::to_string(k));
  if (stride < 1) throw std::invalid_argument(std::string(op) + ": stride must be >= 1");
  if (padding < 0) throw std::invalid_argument(std::string(op) + ": padding must be >= 0");
}

}  // namespace

Conv2dParams Conv2dParams::make(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride, int64_t padding) {
  validate_conv_common(in_ch, out_ch, k, stride, padding, "Conv2dParams");
  Conv2dParams p;
  p.in_channels = in_ch;
  p.out_channels = out_ch;
  p.kernel = k;
  p.stride = stride;
  p.padding = padding;
  p.weight = Tensor{{out_ch, in_ch, k, k}};
  p.bias = Tensor{{out_ch}};
  return p;
}

void Conv2dParams::validate() const {
  validate_conv_common(in_channels, out_channels, kernel, stride, padding, "Conv2dParams");
  const std::vector<int64_t> want{out_channels, in_channels, kernel, kernel};
  if (weight.dims() != want)
    throw std::invalid_argument("Conv2dParams: weight shape " + shape_string(weight.dims()) +
                                " does not match declared " + shape_string(want));
  if (bias.dims() != std::vector<int64_t>{out_channels})
    throw std::invalid_argument("Conv2dParams: bias shape " + shape_string(bias.dims()) +
                                " does not match out_channels " + std::to_string(out_channels));
}

Conv3dParams Conv3dParams::make(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride, int64_t padding) {
  validate_conv_common(in_ch, out_ch, k, stride, padding, "Conv3dParams");
  Conv3dParams p;
  p.in_channels = in_ch;
  p.out_channels = out_ch;
  p.kernel = k;
  p.stride = stride;
  p.padding = padding;
  p.weight = Tensor{{out_ch, in_ch, k, k, k}};
  p.bias = Tensor{{out_ch}};
  return p;
}

void Conv3dParams::validate() const {
  validate_conv_common(in_channels, out_channels, kernel, stride, padding, "Conv3dParams");
  const std::vector<int64_t> want{out_channels, in_channels, kernel, kernel, kernel};
  if (weight.dims() != want)
    throw std::invalid_argument("Conv3dParams: weight shape " + shape_string(weight.dims()) +
                                " does not match declared " + shape_string(want));
  if (bias.dims() != std::vector<int64_t>{out_channels})
    throw std::invalid_argument("Conv3dParams: bias shape " + shape_string(bias.dims()) +
                                " does not match out_channels " + std::to_string(out_channels));
}

Tensor conv2d(const Tensor& input, const Conv2dParams& p) {
  p.validate();
  if (input.rank() != 3 || input.dim(0) != p.in_channels)
    throw std::invalid_argument("conv2d: input shape " + shape_string(input.dims()) +
                                " does not match in_channels " + std::to_string(p.in_channels));
  const int64_t ci_n = p.in_channels, co_n = p.out_channels, k = p.kernel, s = p.stride, pad = p.padding;
  const int64_t h = input.dim(1), w = input.dim(2);
  const int64_t oh = out_extent(h, k, s, pad, "conv2d");
  const int64_t ow = out_extent(w, k, s, pad, "conv2d");

  Tensor out{{co_n, oh, ow}};
  const double* in = input.data();
  const double* wt = p.weight.data();
  const double* bs = p.bias.data();
  double* o = out.data();

  parallel_for(0, co_n, [&](int64_t co) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        double acc = bs[co];
        for (int64_t ci = 0; ci < ci_n; ++ci) {
          const double* in_c = in + ci * h * w;
          const double* wt_c = wt + ((co * ci_n + ci) * k) * k;
          for (int64_t ky = 0; ky < k; ++ky) {
            const int64_t iy = oy * s - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int64_t kx = 0; kx < k; ++kx) {
              const int64_t ix = ox * s - pad + kx;
              if (ix < 0 || ix >= w) continue;
              acc += in_c[iy * w + ix] * wt_c[ky * k + kx];
            }
          }
        }
        o[(co * oh + oy) * ow + ox] = acc;
      }
    }
  });
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Conv2dParams& p, const Tensor& grad_out) {
  p.validate();
  if (input.rank() != 3 || input.dim(0) != p.in_channels)
    throw std::invalid_argument("conv2d_backward: input shape " + shape_string(input.dims()) +
                                " does not match in_channels " + std::to_string(p.in_channels));
  const int64_t ci_n = p.in_channels, co_n = p.out_channels, k = p.kernel, s = p.stride, pad = p.padding;
  const int64_t h = input.dim(1), w = input.dim(2);
  const int64_t oh = out_extent(h, k, s, pad, "conv2d_backward");
  const int64_t ow = out_extent(w, k, s, pad, "conv2d_backward");
  if (grad_out.dims() != std::vector<int64_t>{co_n, oh, ow})
    throw std::invalid_argument("conv2d_backward: grad_out shape " + shape_string(grad_out.dims()) +
                                " does not match forward output " +
                                shape_string({co_n, oh, ow}));

  Conv2dGrads g;
  g.input = Tensor{input.dims()};
  g.weight = Tensor{p.weight.dims()};
  g.bias = Tensor{p.bias.dims()};

  const double* in = input.data();
  const double* wt = p.weight.data();
  const double* go = grad_out.data();
  double* gi = g.input.data();
  double* gw = g.weight.data();
  double* gb = g.bias.data();

  for (int64_t co = 0; co < co_n; ++co) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        const double gval = go[(co * oh + oy) * ow + ox];
        if (gval == 0.0) continue;
        gb[co] += gval;
        for (int64_t ci = 0; ci < ci_n; ++ci) {
          const double* in_c = in + ci * h * w;
          double* gi_c = gi + ci * h * w;
          const int64_t wbase = ((co * ci_n + ci) * k) * k;
          for (int64_t ky = 0; ky < k; ++ky) {
            const int64_t iy = oy * s - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int64_t kx = 0; kx < k; ++kx) {
              const int64_t ix = ox * s - pad + kx;
              if (ix < 0 || ix >= w) continue;
              gw[wbase + ky * k + kx] += in_c[iy * w + ix] * gval;
              gi_c[iy * w + ix] += wt[wbase + ky * k + kx] * gval;
            }
          }
        }
      }
    }
  }
  return g;
}

Tensor conv3d(const Tensor& input, const Conv3dParams& p) {
  p.validate();
  if (input.rank() != 4 || input.dim(0) != p.in_channels)
    throw std::invalid_argument("conv3d: input shape " + shape_string(input.dims()) +
                                " does not match in_channels " + std::to_string(p.in_channels));
  const int64_t ci_n = p.in_channels, co_n = p.out_channels, k = p.kernel, s = p.stride, pad = p.padding;
  const int64_t h = input.dim(1), w = input.dim(2), z = input.dim(3);
  const int64_t oh = out_extent(h, k, s, pad, "conv3d");
  const int64_t ow = out_extent(w, k, s, pad, "conv3d");
  const int64_t oz = out_extent(z, k, s, pad, "conv3d");

  Tensor out{{co_n, oh, ow, oz}};
  const double* in = input.data();
  const double* wt = p.weight.data();
  const double* bs = p.bias.data();
  double* o = out.data();

  parallel_for(0, co_n, [&](int64_t co) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        for (int64_t ozi = 0; ozi < oz; ++ozi) {
          double acc = bs[co];
          for (int64_t ci = 0; ci < ci_n; ++ci) {
            const double* in_c = in + ci * h * w * z;
            const double* wt_c = wt + (((co * ci_n + ci) * k) * k) * k;
            for (int64_t ky = 0; ky < k; ++ky) {
              const int64_t iy = oy * s - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t ix = ox * s - pad + kx;
                if (ix < 0 || ix >= w) continue;
                for (int64_t kz = 0; kz < k; ++kz) {
                  const int64_t iz = ozi * s - pad + kz;
                  if (iz < 0 || iz >= z) continue;
                  acc += in_c[(iy * w + ix) * z + iz] * wt_c[(ky * k + kx) * k + kz];
                }
              }
            }
          }
          o[((co * oh + oy) * ow + ox) * oz + ozi] = acc;
        }
      }
    }
  });
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out{input.dims()};
  const double* in = input.data();
  double* o = out.data();
  const int64_t n = input.size();
  for (int64_t i = 0; i < n; ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (!input.same_shape(grad_out))
    throw std::invalid_argument("relu_backward: shape mismatch " + shape_string(input.dims()) +
                                " vs " + shape_string(grad_out.dims()));
  Tensor out{input.dims()};
  const double* in = input.data();
  const double* go = grad_out.data();
  double* o = out.data();
  const int64_t n = input.size();
  for (int64_t i = 0; i < n; ++i) o[i] = in[i] > 0.0 ? go[i] : 0.0;
  return out;
}

Tensor upsample2x_bilinear(const Tensor& input) {
  if (input.rank() != 3)
    throw std::invalid_argument("upsample2x_bilinear: expected [C, H, W], got " +
                                shape_string(input.dims()));
  const int64_t c_n = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h < 1 || w < 1) throw std::invalid_argument("upsample2x_bilinear: empty spatial dims");
  const int64_t oh = 2 * h, ow = 2 * w;
  Tensor out{{c_n, oh, ow}};
  const double* in = input.data();
  double* o = out.data();

  for (int64_t oy = 0; oy < oh; ++oy) {
    double sy = (static_cast<double>(oy) + 0.5) / 2.0 - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    const int64_t y0 = static_cast<int64_t>(std::floor(sy));
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const double wy = sy - static_cast<double>(y0);
    for (int64_t ox = 0; ox < ow; ++ox) {
      double sx = (static_cast<double>(ox) + 0.5) / 2.0 - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      const int64_t x0 = static_cast<int64_t>(std::floor(sx));
      const int64_t x1 = std::min(x0 + 1, w - 1);
      const double wx = sx - static_cast<double>(x0);
      for (int64_t c = 0; c < c_n; ++c) {
        const double* in_c = in + c * h * w;
        const double v = (1.0 - wy) * ((1.0 - wx) * in_c[y0 * w + x0] + wx * in_c[y0 * w + x1]) +
                         wy * ((1.0 - wx) * in_c[y1 * w + x0] + wx * in_c[y1 * w + x1]);
        o[(c * oh + oy) * ow + ox] = v;
      }
    }
  }
  return out;
}

Tensor repeat_z(const Tensor& input, int64_t z) {
  if (input.rank() != 3)
    throw std::invalid_argument("repeat_z: expected [C, H, W], got " + shape_string(input.dims()));
  if (z < 1) throw std::invalid_argument("repeat_z: need Z >= 1");
  const int64_t c_n = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor out{{c_n, h, w, z}};
  const double* in = input.data();
  double* o = out.data();
  for (int64_t i = 0; i < c_n * h * w; ++i)
    for (int64_t zi = 0; zi < z; ++zi) o[i * z + zi] = in[i];
  return out;
}

Tensor channel_softmax(const Tensor& input) {
  if (input.rank() < 1 || input.dim(0) < 1)
    throw std::invalid_argument("channel_softmax: need a non-empty channel axis");
  const int64_t c_n = input.dim(0);
  const int64_t inner = input.size() / c_n;
  Tensor out{input.dims()};
  const double* in = input.data();
  double* o = out.data();
  for (int64_t i = 0; i < inner; ++i) {
    double m = in[i];
    for (int64_t c = 1; c < c_n; ++c) m = std::max(m, in[c * inner + i]);
    double sum = 0.0;
    for (int64_t c = 0; c < c_n; ++c) {
      const double e = std::exp(in[c * inner + i] - m);
      o[c * inner + i] = e;
      sum += e;
    }
    for (int64_t c = 0; c < c_n; ++c) o[c * inner + i] /= sum;
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1)
    throw std::invalid_argument("concat_channels: rank mismatch " + shape_string(a.dims()) + " vs " +
                                shape_string(b.dims()));
  for (size_t axis = 1; axis < a.rank(); ++axis)
    if (a.dim(axis) != b.dim(axis))
      throw std::invalid_argument("concat_channels: non-channel dims differ: " +
                                  shape_string(a.dims()) + " vs " + shape_string(b.dims()));
  std::vector<int64_t> dims = a.dims();
  dims[0] = a.dim(0) + b.dim(0);
  Tensor out{dims};
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

Tensor nearest_upsample2x_3d(const Tensor& input) {
  if (input.rank() != 4)
    throw std::invalid_argument("nearest_upsample2x_3d: expected [C, H, W, Z], got " +
                                shape_string(input.dims()));
  const int64_t c_n = input.dim(0), h = input.dim(1), w = input.dim(2), z = input.dim(3);
  Tensor out{{c_n, 2 * h, 2 * w, 2 * z}};
  const double* in = input.data();
  double* o = out.data();
  for (int64_t c = 0; c < c_n; ++c)
    for (int64_t y = 0; y < 2 * h; ++y)
      for (int64_t x = 0; x < 2 * w; ++x)
        for (int64_t zi = 0; zi < 2 * z; ++zi)
          o[((c * 2 * h + y) * 2 * w + x) * 2 * z + zi] =
              in[((c * h + y / 2) * w + x / 2) * z + zi / 2];
  return out;
}

}  // namespace bevocc
