#include "bevocc/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "bevocc/nn.hpp"

namespace bevocc {

namespace {

int64_t label_at(const double* labels, int64_t i) {
  return static_cast<int64_t>(std::llround(labels[i]));
}

// Shared view for the [M, ...] logits vs [...] labels pairing.
struct Flattened {
  int64_t classes;
  int64_t voxels;
};

Flattened flatten_check(const Tensor& logits, const Tensor& labels, const char* op) {
  if (logits.rank() < 2)
    throw std::invalid_argument(std::string(op) + ": logits must be [M, ...], got " +
                                shape_string(logits.dims()));
  const int64_t m = logits.dim(0);
  const int64_t v = logits.size() / m;
  if (labels.size() != v)
    throw std::invalid_argument(std::string(op) + ": labels size " + std::to_string(labels.size()) +
                                " does not match logits " + shape_string(logits.dims()));
  return {m, v};
}

void check_label_range(const Tensor& labels, int64_t m, int64_t ignore_id, const char* op) {
  const double* lp = labels.data();
  for (int64_t i = 0; i < labels.size(); ++i) {
    const int64_t id = label_at(lp, i);
    if (id == ignore_id) continue;
    if (id < 0 || id >= m)
      throw std::invalid_argument(std::string(op) + ": label " + std::to_string(id) +
                                  " out of range [0, " + std::to_string(m) + ")");
  }
}

// dL/dlogits from dL/dprob through the softmax Jacobian, one location at a
// time: dL/dz_c = p_c * (dL/dp_c - sum_m p_m dL/dp_m).
Tensor softmax_backward(const Tensor& prob, const Tensor& grad_prob) {
  const int64_t m = prob.dim(0);
  const int64_t v = prob.size() / m;
  Tensor out{prob.dims()};
  const double* p = prob.data();
  const double* gp = grad_prob.data();
  double* o = out.data();
  for (int64_t i = 0; i < v; ++i) {
    double dot = 0.0;
    for (int64_t c = 0; c < m; ++c) dot += p[c * v + i] * gp[c * v + i];
    for (int64_t c = 0; c < m; ++c) o[c * v + i] = p[c * v + i] * (gp[c * v + i] - dot);
  }
  return out;
}

double safe_log(double x) { return std::log(std::max(x, 1e-300)); }

}  // namespace

Tensor bev_gt_from_occ(const Tensor& labels, int64_t num_classes) {
  if (labels.rank() != 3)
    throw std::invalid_argument("bev_gt_from_occ: expected [H, W, Z], got " +
                                shape_string(labels.dims()));
  if (num_classes < 1) throw std::invalid_argument("bev_gt_from_occ: need num_classes >= 1");
  check_label_range(labels, num_classes, -1, "bev_gt_from_occ");
  const int64_t h = labels.dim(0), w = labels.dim(1), z = labels.dim(2);
  Tensor out{{num_classes, h, w}};
  const double* lp = labels.data();
  double* o = out.data();
  for (int64_t x = 0; x < h; ++x)
    for (int64_t y = 0; y < w; ++y)
      for (int64_t k = 0; k < z; ++k) {
        const int64_t id = label_at(lp, (x * w + y) * z + k);
        o[(id * h + x) * w + y] = 1.0;
      }
  return out;
}

Tensor or_pool2x2(const Tensor& bev_gt) {
  if (bev_gt.rank() != 3)
    throw std::invalid_argument("or_pool2x2: expected [M, H, W], got " + shape_string(bev_gt.dims()));
  const int64_t m = bev_gt.dim(0), h = bev_gt.dim(1), w = bev_gt.dim(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("or_pool2x2: spatial dims must be even, got " +
                                shape_string(bev_gt.dims()));
  Tensor out{{m, h / 2, w / 2}};
  const double* in = bev_gt.data();
  double* o = out.data();
  for (int64_t c = 0; c < m; ++c)
    for (int64_t y = 0; y < h / 2; ++y)
      for (int64_t x = 0; x < w / 2; ++x) {
        const double any = in[(c * h + 2 * y) * w + 2 * x] + in[(c * h + 2 * y) * w + 2 * x + 1] +
                           in[(c * h + 2 * y + 1) * w + 2 * x] +
                           in[(c * h + 2 * y + 1) * w + 2 * x + 1];
        o[(c * (h / 2) + y) * (w / 2) + x] = any >= 0.5 ? 1.0 : 0.0;
      }
  return out;
}

LossResult focal_loss(const Tensor& logits, const Tensor& labels, double gamma, int64_t ignore_id) {
  if (gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
  const auto [m, v] = flatten_check(logits, labels, "focal_loss");
  check_label_range(labels, m, ignore_id, "focal_loss");

  const Tensor prob = channel_softmax(logits);
  const double* p = prob.data();
  const double* lp = labels.data();

  int64_t count = 0;
  for (int64_t i = 0; i < v; ++i)
    if (label_at(lp, i) != ignore_id) ++count;

  LossResult out;
  out.grad = Tensor{logits.dims()};
  if (count == 0) return out;

  Tensor grad_prob{prob.dims()};
  double* gp = grad_prob.data();
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  for (int64_t i = 0; i < v; ++i) {
    const int64_t t = label_at(lp, i);
    if (t == ignore_id) continue;
    const double pt = p[t * v + i];
    const double lg = safe_log(pt);
    const double miss = std::max(1.0 - pt, 0.0);
    const double focal_w = std::pow(miss, gamma);
    total += -focal_w * lg;
    double d = -focal_w / std::max(pt, 1e-300);
    if (gamma > 0.0 && miss > 0.0) d += gamma * std::pow(miss, gamma - 1.0) * lg;
    gp[t * v + i] = d * inv;
  }
  out.value = total * inv;
  out.grad = softmax_backward(prob, grad_prob);
  return out;
}

LossResult dice_loss(const Tensor& logits, const Tensor& labels, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("dice_loss: eps must be > 0");
  const auto [m, v] = flatten_check(logits, labels, "dice_loss");
  check_label_range(labels, m, -1, "dice_loss");

  const Tensor prob = channel_softmax(logits);
  const double* p = prob.data();
  const double* lp = labels.data();

  LossResult out;
  Tensor grad_prob{prob.dims()};
  double* gp = grad_prob.data();
  double mean_dice = 0.0;
  for (int64_t c = 0; c < m; ++c) {
    double inter = 0.0, psum = 0.0, ysum = 0.0;
    for (int64_t i = 0; i < v; ++i) {
      const double y = label_at(lp, i) == c ? 1.0 : 0.0;
      inter += p[c * v + i] * y;
      psum += p[c * v + i];
      ysum += y;
    }
    const double num = 2.0 * inter + eps;
    const double den = psum + ysum + eps;
    mean_dice += num / den;
    // d(dice_c)/dp_ci = (2 y_i den - num) / den^2; the loss negates and
    // averages over classes.
    const double inv_m = 1.0 / static_cast<double>(m);
    for (int64_t i = 0; i < v; ++i) {
      const double y = label_at(lp, i) == c ? 1.0 : 0.0;
      gp[c * v + i] = -inv_m * (2.0 * y * den - num) / (den * den);
    }
  }
  out.value = 1.0 - mean_dice / static_cast<double>(m);
  out.grad = softmax_backward(prob, grad_prob);
  return out;
}

LossResult lovasz_softmax(const Tensor& logits, const Tensor& labels, int64_t ignore_id) {
  const auto [m, v] = flatten_check(logits, labels, "lovasz_softmax");
  check_label_range(labels, m, ignore_id, "lovasz_softmax");

  const Tensor prob = channel_softmax(logits);
  const double* p = prob.data();
  const double* lp = labels.data();

  std::vector<int64_t> kept;
  kept.reserve(static_cast<size_t>(v));
  for (int64_t i = 0; i < v; ++i)
    if (label_at(lp, i) != ignore_id) kept.push_back(i);

  std::vector<int64_t> present;
  for (int64_t c = 0; c < m; ++c) {
    for (int64_t i : kept)
      if (label_at(lp, i) == c) {
        present.push_back(c);
        break;
      }
  }

  LossResult out;
  out.grad = Tensor{logits.dims()};
  if (present.empty() || kept.empty()) return out;

  Tensor grad_prob{prob.dims()};
  double* gp = grad_prob.data();
  const double inv_present = 1.0 / static_cast<double>(present.size());
  double total = 0.0;

  const size_t n = kept.size();
  std::vector<double> errors(n);
  std::vector<double> truth(n);
  std::vector<size_t> order(n);
  for (int64_t c : present) {
    double gts = 0.0;
    for (size_t s = 0; s < n; ++s) {
      const int64_t i = kept[s];
      const bool pos = label_at(lp, i) == c;
      truth[s] = pos ? 1.0 : 0.0;
      errors[s] = pos ? 1.0 - p[c * v + i] : p[c * v + i];
      gts += truth[s];
    }
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (errors[a] != errors[b]) return errors[a] > errors[b];
      return a < b;  // deterministic tie-break
    });

    // Discrete Jaccard gradient along the sorted prefix.
    double cum_pos = 0.0, cum_neg = 0.0, prev_jaccard = 0.0;
    for (size_t r = 0; r < n; ++r) {
      const size_t s = order[r];
      cum_pos += truth[s];
      cum_neg += 1.0 - truth[s];
      const double intersection = gts - cum_pos;
      const double uni = gts + cum_neg;
      const double jaccard = 1.0 - intersection / uni;
      const double g = jaccard - prev_jaccard;
      prev_jaccard = jaccard;
      total += inv_present * errors[s] * g;
      const int64_t i = kept[s];
      const double sign = truth[s] > 0.5 ? -1.0 : 1.0;  // de/dp
      gp[c * v + i] += inv_present * sign * g;
    }
  }
  out.value = total;
  out.grad = softmax_backward(prob, grad_prob);
  return out;
}

AffinityResult affinity_losses(const Tensor& logits, const Tensor& labels) {
  const auto [m, v] = flatten_check(logits, labels, "affinity_losses");
  check_label_range(labels, m, -1, "affinity_losses");

  const Tensor prob = channel_softmax(logits);
  const double* p = prob.data();
  const double* lp = labels.data();

  AffinityResult out;
  out.sem.grad = Tensor{logits.dims()};
  out.geo.grad = Tensor{logits.dims()};

  // Semantic affinity over classes m >= 1 present in the labels.
  {
    Tensor grad_prob{prob.dims()};
    double* gp = grad_prob.data();
    std::vector<int64_t> classes;
    std::vector<double> terms;
    for (int64_t c = 1; c < m; ++c) {
      double a = 0.0, b = 0.0, tsum = 0.0, d = 0.0, nsum = 0.0;
      for (int64_t i = 0; i < v; ++i) {
        const double t = label_at(lp, i) == c ? 1.0 : 0.0;
        const double pc = p[c * v + i];
        a += pc * t;
        b += pc;
        tsum += t;
        d += (1.0 - pc) * (1.0 - t);
        nsum += 1.0 - t;
      }
      // Skip degenerate denominators (class absent, no negatives, or a
      // vanishing soft mass).
      if (tsum <= 0.0 || nsum <= 0.0 || a <= 0.0 || b <= 0.0 || d <= 0.0) continue;
      classes.push_back(c);
      terms.push_back(-(std::log(a / b) + std::log(a / tsum) + std::log(d / nsum)));
      for (int64_t i = 0; i < v; ++i) {
        const double t = label_at(lp, i) == c ? 1.0 : 0.0;
        gp[c * v + i] += -(2.0 * t / a - 1.0 / b - (1.0 - t) / d);
      }
    }
    if (!classes.empty()) {
      const double inv = 1.0 / static_cast<double>(classes.size());
      double total = 0.0;
      for (double t : terms) total += t;
      out.sem.value = total * inv;
      for (int64_t i = 0; i < grad_prob.size(); ++i) gp[i] *= inv;
      out.sem.grad = softmax_backward(prob, grad_prob);
    }
  }

  // Geometric affinity on occupied-vs-empty with q = 1 - p_empty.
  {
    double a = 0.0, b = 0.0, tsum = 0.0, d = 0.0, nsum = 0.0;
    for (int64_t i = 0; i < v; ++i) {
      const double t = label_at(lp, i) != 0 ? 1.0 : 0.0;
      const double q = 1.0 - p[i];  // channel 0 is the empty class
      a += q * t;
      b += q;
      tsum += t;
      d += (1.0 - q) * (1.0 - t);
      nsum += 1.0 - t;
    }
    if (tsum > 0.0 && nsum > 0.0 && a > 0.0 && b > 0.0 && d > 0.0) {
      out.geo.value = -(std::log(a / b) + std::log(a / tsum) + std::log(d / nsum));
      Tensor grad_prob{prob.dims()};
      double* gp = grad_prob.data();
      for (int64_t i = 0; i < v; ++i) {
        const double t = label_at(lp, i) != 0 ? 1.0 : 0.0;
        const double dq = -(2.0 * t / a - 1.0 / b - (1.0 - t) / d);
        gp[i] = -dq;  // dq/dp_empty = -1
      }
      out.geo.grad = softmax_backward(prob, grad_prob);
    }
  }
  return out;
}

LossResult depth_loss(const Tensor& depth_logits, const Tensor& targets, const Tensor& valid) {
  if (depth_logits.rank() != 3 || !depth_logits.same_shape(targets))
    throw std::invalid_argument("depth_loss: logits " + shape_string(depth_logits.dims()) +
                                " and targets " + shape_string(targets.dims()) + " must both be [D, H', W']");
  const int64_t d_n = depth_logits.dim(0);
  const int64_t hw = depth_logits.size() / d_n;
  if (valid.size() != hw)
    throw std::invalid_argument("depth_loss: valid mask size does not match the pixel count");

  const Tensor prob = channel_softmax(depth_logits);
  const double* p = prob.data();
  const double* t = targets.data();
  const double* vm = valid.data();

  int64_t count = 0;
  for (int64_t i = 0; i < hw; ++i)
    if (vm[i] > 0.5) ++count;

  LossResult out;
  out.grad = Tensor{depth_logits.dims()};
  if (count == 0) return out;
  const double inv = 1.0 / static_cast<double>(count);

  double total = 0.0;
  double* g = out.grad.data();
  for (int64_t i = 0; i < hw; ++i) {
    if (vm[i] <= 0.5) continue;
    for (int64_t d = 0; d < d_n; ++d) {
      const double y = t[d * hw + i];
      if (y > 0.5) total += -safe_log(p[d * hw + i]);
      g[d * hw + i] = (p[d * hw + i] - y) * inv;  // CE-through-softmax gradient
    }
  }
  out.value = total * inv;
  return out;
}

LossResult bev_bce(const Tensor& bev_logits, const Tensor& bev_gt) {
  if (!bev_logits.same_shape(bev_gt))
    throw std::invalid_argument("bev_bce: logits " + shape_string(bev_logits.dims()) +
                                " and ground truth " + shape_string(bev_gt.dims()) + " must match");
  const int64_t n = bev_logits.size();
  if (n == 0) throw std::invalid_argument("bev_bce: empty input");
  const double* z = bev_logits.data();
  const double* y = bev_gt.data();
  LossResult out;
  out.grad = Tensor{bev_logits.dims()};
  double* g = out.grad.data();
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(n);
  for (int64_t i = 0; i < n; ++i) {
    total += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    const double sigma = z[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-z[i]))
                                     : std::exp(z[i]) / (1.0 + std::exp(z[i]));
    g[i] = (sigma - y[i]) * inv;
  }
  out.value = total * inv;
  return out;
}

}  // namespace bevocc
