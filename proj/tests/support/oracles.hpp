#pragma once

// Brute-force reference implementations for the oracle-equivalence tests.
// Everything here is written as directly as possible from the definitions
// and stays independent of the library kernels it checks.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "bevocc/geometry.hpp"
#include "bevocc/nn.hpp"
#include "bevocc/tensor.hpp"

namespace bevocc::testsupport {

// Quadruple-loop cross-correlation.
inline Tensor naive_conv2d(const Tensor& input, const Conv2dParams& p) {
  const int64_t ci_n = p.in_channels, co_n = p.out_channels, k = p.kernel, s = p.stride,
                pad = p.padding;
  const int64_t h = input.dim(1), w = input.dim(2);
  const int64_t oh = (h + 2 * pad - k) / s + 1;
  const int64_t ow = (w + 2 * pad - k) / s + 1;
  Tensor out{{co_n, oh, ow}};
  for (int64_t co = 0; co < co_n; ++co)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        double acc = p.bias(co);
        for (int64_t ci = 0; ci < ci_n; ++ci)
          for (int64_t ky = 0; ky < k; ++ky)
            for (int64_t kx = 0; kx < k; ++kx) {
              const int64_t iy = oy * s - pad + ky;
              const int64_t ix = ox * s - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += input(ci, iy, ix) * p.weight(co, ci, ky, kx);
            }
        out(co, oy, ox) = acc;
      }
  return out;
}

// Seven-loop 3D cross-correlation.
inline Tensor naive_conv3d(const Tensor& input, const Conv3dParams& p) {
  const int64_t ci_n = p.in_channels, co_n = p.out_channels, k = p.kernel, s = p.stride,
                pad = p.padding;
  const int64_t h = input.dim(1), w = input.dim(2), z = input.dim(3);
  const int64_t oh = (h + 2 * pad - k) / s + 1;
  const int64_t ow = (w + 2 * pad - k) / s + 1;
  const int64_t oz = (z + 2 * pad - k) / s + 1;
  Tensor out{{co_n, oh, ow, oz}};
  for (int64_t co = 0; co < co_n; ++co)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox)
        for (int64_t ozi = 0; ozi < oz; ++ozi) {
          double acc = p.bias(co);
          for (int64_t ci = 0; ci < ci_n; ++ci)
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx)
                for (int64_t kz = 0; kz < k; ++kz) {
                  const int64_t iy = oy * s - pad + ky;
                  const int64_t ix = ox * s - pad + kx;
                  const int64_t iz = ozi * s - pad + kz;
                  if (iy < 0 || iy >= h || ix < 0 || ix >= w || iz < 0 || iz >= z) continue;
                  acc += input(ci, iy, ix, iz) * p.weight(co, ci, ky, kx, kz);
                }
          out(co, oy, ox, ozi) = acc;
        }
  return out;
}

// Per-voxel, per-camera brute-force interpolation sampling: project one
// center, test validity, bilinearly sample, average.
struct NaiveInterpResult {
  Tensor features;
  Tensor observed;
};

inline NaiveInterpResult naive_interp_sample(const std::vector<Tensor>& features,
                                             const CameraRig& rig, const VoxelGridSpec& spec) {
  const int64_t c_n = features[0].dim(0);
  NaiveInterpResult out;
  out.features = Tensor{{c_n, spec.dims[0], spec.dims[1], spec.dims[2]}};
  out.observed = Tensor{{spec.dims[0], spec.dims[1], spec.dims[2]}};
  for (int64_t i = 0; i < spec.dims[0]; ++i)
    for (int64_t j = 0; j < spec.dims[1]; ++j)
      for (int64_t k = 0; k < spec.dims[2]; ++k) {
        const Vec3 center{spec.range[0] + (static_cast<double>(i) + 0.5) * spec.step_h(),
                          spec.range[1] + (static_cast<double>(j) + 0.5) * spec.step_w(),
                          spec.range[2] + (static_cast<double>(k) + 0.5) * spec.step_z()};
        std::vector<double> acc(static_cast<size_t>(c_n), 0.0);
        int64_t count = 0;
        for (size_t n = 0; n < rig.size(); ++n) {
          const Camera& cam = rig.cameras[n];
          const Projection pr = project_point(compose_e2i(cam), center, cam.image_h, cam.image_w);
          if (!pr.valid) continue;
          const auto x0 = static_cast<int64_t>(std::floor(pr.u));
          const auto y0 = static_cast<int64_t>(std::floor(pr.v));
          const int64_t x1 = std::min(x0 + 1, cam.image_w - 1);
          const int64_t y1 = std::min(y0 + 1, cam.image_h - 1);
          const double wx = pr.u - static_cast<double>(x0);
          const double wy = pr.v - static_cast<double>(y0);
          for (int64_t c = 0; c < c_n; ++c) {
            const double v = (1.0 - wy) * ((1.0 - wx) * features[n](c, y0, x0) +
                                           wx * features[n](c, y0, x1)) +
                             wy * ((1.0 - wx) * features[n](c, y1, x0) +
                                   wx * features[n](c, y1, x1));
            acc[static_cast<size_t>(c)] += v;
          }
          ++count;
        }
        if (count > 0) {
          for (int64_t c = 0; c < c_n; ++c)
            out.features(c, i, j, k) = acc[static_cast<size_t>(c)] / static_cast<double>(count);
          out.observed(i, j, k) = static_cast<double>(count);
        }
      }
  return out;
}

// Full confusion matrix, then IoU per semantic class.
struct NaiveIou {
  std::vector<double> per_class;  // m in [1, M)
  std::vector<bool> defined;
  double mean = 0.0;
  int64_t defined_classes = 0;
};

inline NaiveIou naive_miou(const Tensor& pred, const Tensor& gt, int64_t m,
                           const Tensor* ignore = nullptr) {
  std::vector<std::vector<int64_t>> confusion(static_cast<size_t>(m),
                                              std::vector<int64_t>(static_cast<size_t>(m), 0));
  for (int64_t i = 0; i < pred.size(); ++i) {
    if (ignore && ignore->data()[i] > 0.5) continue;
    const auto p = static_cast<size_t>(std::llround(pred.data()[i]));
    const auto g = static_cast<size_t>(std::llround(gt.data()[i]));
    ++confusion[g][p];
  }
  NaiveIou out;
  double sum = 0.0;
  for (int64_t c = 1; c < m; ++c) {
    const auto cc = static_cast<size_t>(c);
    int64_t tp = confusion[cc][cc];
    int64_t fp = 0, fn = 0;
    for (size_t other = 0; other < static_cast<size_t>(m); ++other) {
      if (other == cc) continue;
      fp += confusion[other][cc];
      fn += confusion[cc][other];
    }
    const int64_t uni = tp + fp + fn;
    if (uni == 0) {
      out.per_class.push_back(0.0);
      out.defined.push_back(false);
      continue;
    }
    const double iou = static_cast<double>(tp) / static_cast<double>(uni);
    out.per_class.push_back(iou);
    out.defined.push_back(true);
    sum += iou;
    ++out.defined_classes;
  }
  if (out.defined_classes > 0) out.mean = sum / static_cast<double>(out.defined_classes);
  return out;
}

// Lovasz extension evaluated from the prefix-Jaccard definition: for the
// sorted errors, weight j is Delta(S_j) - Delta(S_{j-1}) where Delta(S) is
// the Jaccard loss of "the j largest-error items are wrong", each prefix
// recounted from scratch.
inline double naive_lovasz_softmax(const Tensor& logits, const Tensor& labels,
                                   int64_t ignore_id = -1) {
  const int64_t m = logits.dim(0);
  const int64_t v = logits.size() / m;
  const Tensor prob = channel_softmax(logits);

  std::vector<int64_t> kept;
  for (int64_t i = 0; i < v; ++i)
    if (static_cast<int64_t>(std::llround(labels.data()[i])) != ignore_id) kept.push_back(i);

  std::vector<int64_t> present;
  for (int64_t c = 0; c < m; ++c)
    for (int64_t i : kept)
      if (static_cast<int64_t>(std::llround(labels.data()[i])) == c) {
        present.push_back(c);
        break;
      }
  if (present.empty()) return 0.0;

  double total = 0.0;
  for (int64_t c : present) {
    const size_t n = kept.size();
    std::vector<double> errors(n);
    std::vector<bool> positive(n);
    for (size_t s = 0; s < n; ++s) {
      const int64_t i = kept[s];
      positive[s] = static_cast<int64_t>(std::llround(labels.data()[i])) == c;
      errors[s] = positive[s] ? 1.0 - prob.data()[c * v + i] : prob.data()[c * v + i];
    }
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (errors[a] != errors[b]) return errors[a] > errors[b];
      return a < b;
    });

    // Delta(S) = 1 - |G \ S| / |G u S| for the ground-truth set G.
    auto delta = [&](size_t prefix) -> double {
      if (prefix == 0) return 0.0;
      int64_t g_total = 0, g_minus_s = 0, g_union_s = 0;
      std::vector<bool> in_s(n, false);
      for (size_t r = 0; r < prefix; ++r) in_s[order[r]] = true;
      for (size_t s = 0; s < n; ++s) {
        if (positive[s]) ++g_total;
        if (positive[s] && !in_s[s]) ++g_minus_s;
        if (positive[s] || in_s[s]) ++g_union_s;
      }
      (void)g_total;
      if (g_union_s == 0) return 0.0;
      return 1.0 - static_cast<double>(g_minus_s) / static_cast<double>(g_union_s);
    };

    double loss_c = 0.0;
    for (size_t j = 1; j <= n; ++j)
      loss_c += errors[order[j - 1]] * (delta(j) - delta(j - 1));
    total += loss_c;
  }
  return total / static_cast<double>(present.size());
}

// Per-column scan for the BEV ground truth.
inline Tensor naive_bev_gt(const Tensor& labels, int64_t m) {
  const int64_t h = labels.dim(0), w = labels.dim(1), z = labels.dim(2);
  Tensor out{{m, h, w}};
  for (int64_t x = 0; x < h; ++x)
    for (int64_t y = 0; y < w; ++y)
      for (int64_t c = 0; c < m; ++c) {
        bool any = false;
        for (int64_t k = 0; k < z; ++k)
          if (static_cast<int64_t>(std::llround(labels(x, y, k))) == c) any = true;
        out(c, x, y) = any ? 1.0 : 0.0;
      }
  return out;
}

// Plain cross-entropy (the gamma = 0 focal reference).
inline double naive_cross_entropy(const Tensor& logits, const Tensor& labels, int64_t ignore_id) {
  const int64_t m = logits.dim(0);
  const int64_t v = logits.size() / m;
  const Tensor prob = channel_softmax(logits);
  double total = 0.0;
  int64_t count = 0;
  for (int64_t i = 0; i < v; ++i) {
    const auto t = static_cast<int64_t>(std::llround(labels.data()[i]));
    if (t == ignore_id) continue;
    total += -std::log(prob.data()[t * v + i]);
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace bevocc::testsupport
