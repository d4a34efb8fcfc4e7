#include "bevocc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bevocc/nn.hpp"
#include "bevocc/occupancy_head.hpp"
#include "bevocc/rng.hpp"
#include "bevocc/scenegen.hpp"
#include "bevocc/supervision.hpp"
#include "bevocc/view_transform.hpp"

namespace bevocc {

GradCheckReport check_gradient(const std::string& op, const std::vector<double>& x0,
                               const ScalarFn& f, const GradFn& grad, double tol, double h) {
  const std::vector<double> analytic = grad(x0);
  if (analytic.size() != x0.size())
    throw std::invalid_argument("check_gradient: gradient size mismatch for " + op);
  GradCheckReport report{op, 0.0, tol, true};
  std::vector<double> x = x0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    const double numeric = (fp - fm) / (2.0 * h);
    const double scale = std::max({1.0, std::abs(numeric), std::abs(analytic[i])});
    report.max_rel_err = std::max(report.max_rel_err, std::abs(numeric - analytic[i]) / scale);
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

namespace {

std::vector<double> random_vec(SplitMix64& rng, size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor tensor_from(const std::vector<double>& flat, size_t offset, const std::vector<int64_t>& dims) {
  Tensor t{dims};
  std::copy(flat.begin() + static_cast<ptrdiff_t>(offset),
            flat.begin() + static_cast<ptrdiff_t>(offset) + t.size(), t.data());
  return t;
}

double project(const Tensor& t, const std::vector<double>& w) {
  double s = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) s += t.data()[i] * w[static_cast<size_t>(i)];
  return s;
}

void merge_worst(std::vector<GradCheckReport>& worst, const GradCheckReport& r) {
  for (GradCheckReport& w : worst) {
    if (w.op == r.op) {
      if (r.max_rel_err > w.max_rel_err) w.max_rel_err = r.max_rel_err;
      w.pass = w.pass && r.pass;
      return;
    }
  }
  worst.push_back(r);
}

// --- scenario builders -------------------------------------------------------

void conv2d_rounds(std::vector<GradCheckReport>& out, SplitMix64& rng, double tol, double h) {
  const int64_t ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3);
  const int64_t k = rng.uniform_int(0, 1) == 0 ? 1 : 3;
  const int64_t hh = rng.uniform_int(4, 6), ww = rng.uniform_int(4, 6);
  Conv2dParams p = Conv2dParams::make(ci, co, k, 1, (k - 1) / 2);
  for (int64_t i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = rng.uniform(-1.0, 1.0);
  for (int64_t i = 0; i < p.bias.size(); ++i) p.bias.data()[i] = rng.uniform(-1.0, 1.0);
  const Tensor input = tensor_from(random_vec(rng, static_cast<size_t>(ci * hh * ww), -2.0, 2.0), 0,
                                   {ci, hh, ww});
  const Tensor probe_out = conv2d(input, p);
  const std::vector<double> probe = random_vec(rng, static_cast<size_t>(probe_out.size()), -1.0, 1.0);
  Tensor grad_out = tensor_from(probe, 0, probe_out.dims());

  // d/d input
  {
    std::vector<double> x0(input.data(), input.data() + input.size());
    merge_worst(out, check_gradient(
                         "conv2d_input", x0,
                         [&](const std::vector<double>& x) {
                           return project(conv2d(tensor_from(x, 0, input.dims()), p), probe);
                         },
                         [&](const std::vector<double>& x) {
                           const Conv2dGrads g =
                               conv2d_backward(tensor_from(x, 0, input.dims()), p, grad_out);
                           return std::vector<double>(g.input.data(), g.input.data() + g.input.size());
                         },
                         tol, h));
  }
  // d/d weight
  {
    std::vector<double> x0(p.weight.data(), p.weight.data() + p.weight.size());
    merge_worst(out, check_gradient(
                         "conv2d_weight", x0,
                         [&](const std::vector<double>& x) {
                           Conv2dParams q = p;
                           q.weight = tensor_from(x, 0, p.weight.dims());
                           return project(conv2d(input, q), probe);
                         },
                         [&](const std::vector<double>& x) {
                           Conv2dParams q = p;
                           q.weight = tensor_from(x, 0, p.weight.dims());
                           const Conv2dGrads g = conv2d_backward(input, q, grad_out);
                           return std::vector<double>(g.weight.data(),
                                                      g.weight.data() + g.weight.size());
                         },
                         tol, h));
  }
  // d/d bias
  {
    std::vector<double> x0(p.bias.data(), p.bias.data() + p.bias.size());
    merge_worst(out, check_gradient(
                         "conv2d_bias", x0,
                         [&](const std::vector<double>& x) {
                           Conv2dParams q = p;
                           q.bias = tensor_from(x, 0, p.bias.dims());
                           return project(conv2d(input, q), probe);
                         },
                         [&](const std::vector<double>& x) {
                           Conv2dParams q = p;
                           q.bias = tensor_from(x, 0, p.bias.dims());
                           const Conv2dGrads g = conv2d_backward(input, q, grad_out);
                           return std::vector<double>(g.bias.data(), g.bias.data() + g.bias.size());
                         },
                         tol, h));
  }
}

void relu_rounds(std::vector<GradCheckReport>& out, SplitMix64& rng, double tol, double h) {
  // Sample away from the kink at 0.
  std::vector<double> x0(24);
  for (double& x : x0) {
    do {
      x = rng.uniform(-2.0, 2.0);
    } while (std::abs(x) <= 1e-3);
  }
  const std::vector<double> probe = random_vec(rng, x0.size(), -1.0, 1.0);
  const std::vector<int64_t> dims{static_cast<int64_t>(x0.size())};
  merge_worst(out, check_gradient(
                       "relu", x0,
                       [&](const std::vector<double>& x) {
                         return project(relu(tensor_from(x, 0, dims)), probe);
                       },
                       [&](const std::vector<double>& x) {
                         const Tensor g =
                             relu_backward(tensor_from(x, 0, dims), tensor_from(probe, 0, dims));
                         return std::vector<double>(g.data(), g.data() + g.size());
                       },
                       tol, h));
}

CameraRig small_rig(int64_t cameras, int64_t image_h, int64_t image_w) {
  RingRigSpec spec;
  spec.cameras = cameras;
  spec.image_h = image_h;
  spec.image_w = image_w;
  spec.fov_deg = 100.0;
  spec.height = 1.0;
  spec.pitch_deg = 15.0;
  spec.radius = 0.3;
  return make_ring_rig(spec);
}

void interp_rounds(std::vector<GradCheckReport>& out, SplitMix64& rng, double tol, double h) {
  const CameraRig rig = small_rig(2, 8, 10);
  VoxelGridSpec grid;
  grid.range = {-3.0, -3.0, 0.0, 3.0, 3.0, 2.0};
  grid.dims = {6, 6, 4};
  const int64_t c1 = 2;
  const int64_t per_cam = c1 * 8 * 10;
  std::vector<double> x0 = random_vec(rng, static_cast<size_t>(2 * per_cam), -2.0, 2.0);
  const std::vector<double> probe =
      random_vec(rng, static_cast<size_t>(c1 * grid.voxel_count()), -1.0, 1.0);

  auto unpack = [&](const std::vector<double>& x) {
    std::vector<Tensor> feats;
    feats.push_back(tensor_from(x, 0, {c1, 8, 10}));
    feats.push_back(tensor_from(x, static_cast<size_t>(per_cam), {c1, 8, 10}));
    return feats;
  };
  merge_worst(out, check_gradient(
                       "interp_sample_features", x0,
                       [&](const std::vector<double>& x) {
                         return project(interp_sample(unpack(x), rig, grid).features, probe);
                       },
                       [&](const std::vector<double>& x) {
                         const std::vector<Tensor> feats = unpack(x);
                         const Tensor grad_out =
                             tensor_from(probe, 0, {c1, grid.dims[0], grid.dims[1], grid.dims[2]});
                         const std::vector<Tensor> g =
                             interp_sample_backward(feats, rig, grid, grad_out);
                         std::vector<double> flat;
                         for (const Tensor& t : g)
                           flat.insert(flat.end(), t.data(), t.data() + t.size());
                         return flat;
                       },
                       tol, h));
}

void voxel_pool_rounds(std::vector<GradCheckReport>& out, SplitMix64& rng, double tol, double h) {
  const CameraRig rig = small_rig(2, 4, 5);
  DepthBinSpec bins;
  bins.d_min = 0.5;
  bins.d_max = 4.0;
  bins.count = 3;
  VoxelGridSpec grid;
  grid.range = {-3.0, -3.0, 0.0, 3.0, 3.0, 2.0};
  grid.dims = {6, 6, 4};
  const int64_t c2 = 2;
  std::vector<Tensor> frustums;
  for (const Camera& cam : rig.cameras) frustums.push_back(build_frustum(cam, bins));
  const int64_t per_cam = 4 * 5 * bins.count * c2;
  std::vector<double> x0 = random_vec(rng, static_cast<size_t>(2 * per_cam), -2.0, 2.0);
  const std::vector<double> probe =
      random_vec(rng, static_cast<size_t>(c2 * grid.voxel_count()), -1.0, 1.0);

  auto unpack = [&](const std::vector<double>& x) {
    std::vector<Tensor> lifted;
    lifted.push_back(tensor_from(x, 0, {4, 5, bins.count, c2}));
    lifted.push_back(tensor_from(x, static_cast<size_t>(per_cam), {4, 5, bins.count, c2}));
    return lifted;
  };
  merge_worst(out, check_gradient(
                       "voxel_pool_lifted", x0,
                       [&](const std::vector<double>& x) {
                         return project(voxel_pool(frustums, unpack(x), grid), probe);
                       },
                       [&](const std::vector<double>& x) {
                         (void)x;  // linear map: gradient is feature-independent
                         const Tensor grad_out =
                             tensor_from(probe, 0, {c2, grid.dims[0], grid.dims[1], grid.dims[2]});
                         const std::vector<Tensor> g = voxel_pool_backward(frustums, grid, c2, grad_out);
                         std::vector<double> flat;
                         for (const Tensor& t : g)
                           flat.insert(flat.end(), t.data(), t.data() + t.size());
                         return flat;
                       },
                       tol, h));
}

void seg_head_rounds(std::vector<GradCheckReport>& out, SplitMix64& rng, double tol, double h) {
  const int64_t c3 = 3, m = 4, hh = 5, ww = 5;
  BevSegWeights w;
  w.conv = Conv2dParams::make(c3, c3, 3, 1, 1);
  w.classifier = Conv2dParams::make(c3, m, 1, 1, 0);

  Tensor bev{{c3, hh, ww}};
  // Redraw until every pre-activation is away from the ReLU kink.
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (int64_t i = 0; i < w.conv.weight.size(); ++i) w.conv.weight.data()[i] = rng.uniform(-1.0, 1.0);
    for (int64_t i = 0; i < w.conv.bias.size(); ++i) w.conv.bias.data()[i] = rng.uniform(-1.0, 1.0);
    for (int64_t i = 0; i < w.classifier.weight.size(); ++i)
      w.classifier.weight.data()[i] = rng.uniform(-1.0, 1.0);
    for (int64_t i = 0; i < w.classifier.bias.size(); ++i)
      w.classifier.bias.data()[i] = rng.uniform(-1.0, 1.0);
    for (int64_t i = 0; i < bev.size(); ++i) bev.data()[i] = rng.uniform(-2.0, 2.0);
    const Tensor pre = conv2d(bev, w.conv);
    double min_abs = 1e9;
    for (int64_t i = 0; i < pre.size(); ++i) min_abs = std::min(min_abs, std::abs(pre.data()[i]));
    if (min_abs > 1e-3) break;
  }

  const Tensor probe_out = bev_seg_head(bev, w);
  const std::vector<double> probe = random_vec(rng, static_cast<size_t>(probe_out.size()), -1.0, 1.0);
  const Tensor grad_logits = tensor_from(probe, 0, probe_out.dims());

  // One flat parameter vector: [bev, conv.w, conv.b, cls.w, cls.b].
  const std::vector<std::vector<int64_t>> shapes = {bev.dims(), w.conv.weight.dims(),
                                                    w.conv.bias.dims(), w.classifier.weight.dims(),
                                                    w.classifier.bias.dims()};
  std::vector<double> x0;
  auto append = [&x0](const Tensor& t) { x0.insert(x0.end(), t.data(), t.data() + t.size()); };
  append(bev);
  append(w.conv.weight);
  append(w.conv.bias);
  append(w.classifier.weight);
  append(w.classifier.bias);

  auto unpack = [&](const std::vector<double>& x, Tensor& b, BevSegWeights& ws) {
    size_t off = 0;
    b = tensor_from(x, off, shapes[0]);
    off += static_cast<size_t>(b.size());
    ws = w;
    ws.conv.weight = tensor_from(x, off, shapes[1]);
    off += static_cast<size_t>(ws.conv.weight.size());
    ws.conv.bias = tensor_from(x, off, shapes[2]);
    off += static_cast<size_t>(ws.conv.bias.size());
    ws.classifier.weight = tensor_from(x, off, shapes[3]);
    off += static_cast<size_t>(ws.classifier.weight.size());
    ws.classifier.bias = tensor_from(x, off, shapes[4]);
  };

  merge_worst(out, check_gradient(
                       "bev_seg_head_path", x0,
                       [&](const std::vector<double>& x) {
                         Tensor b;
                         BevSegWeights ws;
                         unpack(x, b, ws);
                         return project(bev_seg_head(b, ws), probe);
                       },
                       [&](const std::vector<double>& x) {
                         Tensor b;
                         BevSegWeights ws;
                         unpack(x, b, ws);
                         const BevSegGrads g = bev_seg_head_backward(b, ws, grad_logits);
                         std::vector<double> flat;
                         auto add = [&flat](const Tensor& t) {
                           flat.insert(flat.end(), t.data(), t.data() + t.size());
                         };
                         add(g.input);
                         add(g.conv.weight);
                         add(g.conv.bias);
                         add(g.classifier.weight);
                         add(g.classifier.bias);
                         return flat;
                       },
                       tol, h));
}

struct LossInstance {
  std::vector<int64_t> dims;
  std::vector<double> logits;
  Tensor labels;
};

LossInstance make_loss_instance(SplitMix64& rng, bool avoid_lovasz_ties) {
  LossInstance inst;
  const int64_t m = 3;
  inst.dims = {m, 4, 4, 2};  // 32 voxels
  const int64_t v = 32;
  inst.labels = Tensor{{4, 4, 2}};
  for (int64_t i = 0; i < v; ++i)
    inst.labels.data()[i] = static_cast<double>(rng.uniform_int(0, m - 1));
  // Retry until no two per-class errors sit within the finite-difference
  // window of each other (the Lovasz extension is piecewise linear; its
  // gradient is only defined away from sorting ties).
  for (int attempt = 0; attempt < 64; ++attempt) {
    inst.logits = random_vec(rng, static_cast<size_t>(m * v), -2.0, 2.0);
    if (!avoid_lovasz_ties) break;
    const Tensor prob = channel_softmax(tensor_from(inst.logits, 0, inst.dims));
    bool ok = true;
    for (int64_t c = 0; c < m && ok; ++c) {
      std::vector<double> errors;
      for (int64_t i = 0; i < v; ++i) {
        const bool pos = static_cast<int64_t>(inst.labels.data()[i]) == c;
        errors.push_back(pos ? 1.0 - prob.data()[c * v + i] : prob.data()[c * v + i]);
      }
      std::sort(errors.begin(), errors.end());
      for (size_t i = 1; i < errors.size(); ++i)
        if (errors[i] - errors[i - 1] < 1e-4) {
          ok = false;
          break;
        }
    }
    if (ok) break;
  }
  return inst;
}

void loss_rounds(std::vector<GradCheckReport>& out, SplitMix64& rng, double tol, double h) {
  {
    const LossInstance inst = make_loss_instance(rng, false);
    merge_worst(out, check_gradient(
                         "loss_focal", inst.logits,
                         [&](const std::vector<double>& x) {
                           return focal_loss(tensor_from(x, 0, inst.dims), inst.labels, 2.0).value;
                         },
                         [&](const std::vector<double>& x) {
                           const LossResult r =
                               focal_loss(tensor_from(x, 0, inst.dims), inst.labels, 2.0);
                           return std::vector<double>(r.grad.data(), r.grad.data() + r.grad.size());
                         },
                         tol, h));
  }
  {
    const LossInstance inst = make_loss_instance(rng, false);
    merge_worst(out, check_gradient(
                         "loss_dice", inst.logits,
                         [&](const std::vector<double>& x) {
                           return dice_loss(tensor_from(x, 0, inst.dims), inst.labels).value;
                         },
                         [&](const std::vector<double>& x) {
                           const LossResult r = dice_loss(tensor_from(x, 0, inst.dims), inst.labels);
                           return std::vector<double>(r.grad.data(), r.grad.data() + r.grad.size());
                         },
                         tol, h));
  }
  {
    const LossInstance inst = make_loss_instance(rng, true);
    merge_worst(out, check_gradient(
                         "loss_lovasz", inst.logits,
                         [&](const std::vector<double>& x) {
                           return lovasz_softmax(tensor_from(x, 0, inst.dims), inst.labels).value;
                         },
                         [&](const std::vector<double>& x) {
                           const LossResult r =
                               lovasz_softmax(tensor_from(x, 0, inst.dims), inst.labels);
                           return std::vector<double>(r.grad.data(), r.grad.data() + r.grad.size());
                         },
                         tol, h));
  }
  {
    const LossInstance inst = make_loss_instance(rng, false);
    merge_worst(out, check_gradient(
                         "loss_affinity_sem", inst.logits,
                         [&](const std::vector<double>& x) {
                           return affinity_losses(tensor_from(x, 0, inst.dims), inst.labels).sem.value;
                         },
                         [&](const std::vector<double>& x) {
                           const AffinityResult r =
                               affinity_losses(tensor_from(x, 0, inst.dims), inst.labels);
                           return std::vector<double>(r.sem.grad.data(),
                                                      r.sem.grad.data() + r.sem.grad.size());
                         },
                         tol, h));
    merge_worst(out, check_gradient(
                         "loss_affinity_geo", inst.logits,
                         [&](const std::vector<double>& x) {
                           return affinity_losses(tensor_from(x, 0, inst.dims), inst.labels).geo.value;
                         },
                         [&](const std::vector<double>& x) {
                           const AffinityResult r =
                               affinity_losses(tensor_from(x, 0, inst.dims), inst.labels);
                           return std::vector<double>(r.geo.grad.data(),
                                                      r.geo.grad.data() + r.geo.grad.size());
                         },
                         tol, h));
  }
  {
    // Depth loss on a [D, 3, 4] image with a random valid mask.
    const int64_t d_n = 4, hh = 3, ww = 4;
    const std::vector<int64_t> dims{d_n, hh, ww};
    std::vector<double> x0 = random_vec(rng, static_cast<size_t>(d_n * hh * ww), -2.0, 2.0);
    Tensor targets{{d_n, hh, ww}};
    Tensor valid{{hh, ww}};
    for (int64_t i = 0; i < hh * ww; ++i) {
      const int64_t bin = rng.uniform_int(0, d_n - 1);
      if (rng.next_double() < 0.75) {
        targets.data()[bin * hh * ww + i] = 1.0;
        valid.data()[i] = 1.0;
      }
    }
    merge_worst(out, check_gradient(
                         "loss_depth", x0,
                         [&](const std::vector<double>& x) {
                           return depth_loss(tensor_from(x, 0, dims), targets, valid).value;
                         },
                         [&](const std::vector<double>& x) {
                           const LossResult r = depth_loss(tensor_from(x, 0, dims), targets, valid);
                           return std::vector<double>(r.grad.data(), r.grad.data() + r.grad.size());
                         },
                         tol, h));
  }
  {
    const int64_t m = 3, hh = 4, ww = 4;
    const std::vector<int64_t> dims{m, hh, ww};
    std::vector<double> x0 = random_vec(rng, static_cast<size_t>(m * hh * ww), -2.0, 2.0);
    Tensor gt{{m, hh, ww}};
    for (int64_t i = 0; i < gt.size(); ++i) gt.data()[i] = rng.uniform_int(0, 1);
    merge_worst(out, check_gradient(
                         "loss_bev_bce", x0,
                         [&](const std::vector<double>& x) {
                           return bev_bce(tensor_from(x, 0, dims), gt).value;
                         },
                         [&](const std::vector<double>& x) {
                           const LossResult r = bev_bce(tensor_from(x, 0, dims), gt);
                           return std::vector<double>(r.grad.data(), r.grad.data() + r.grad.size());
                         },
                         tol, h));
  }
}

}  // namespace

std::vector<GradCheckReport> run_gradient_suite(uint64_t seed, int rounds, double tol, double h) {
  if (rounds < 1) throw std::invalid_argument("run_gradient_suite: need rounds >= 1");
  std::vector<GradCheckReport> worst;
  for (int round = 0; round < rounds; ++round) {
    SplitMix64 rng{seed + static_cast<uint64_t>(round) * 0x51ed2701ull};
    conv2d_rounds(worst, rng, tol, h);
    relu_rounds(worst, rng, tol, h);
    interp_rounds(worst, rng, tol, h);
    voxel_pool_rounds(worst, rng, tol, h);
    seg_head_rounds(worst, rng, tol, h);
    loss_rounds(worst, rng, tol, h);
  }
  return worst;
}

}  // namespace bevocc
