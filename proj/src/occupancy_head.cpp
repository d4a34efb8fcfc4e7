#include "bevocc/occupancy_head.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "bevocc/parallel.hpp"
#include "bevocc/rng.hpp"

namespace bevocc {

void HeadConfig::validate() const {
  if (c1 < 1 || c2 < 1 || c3 < 1) throw std::invalid_argument("HeadConfig: channel counts must be >= 1");
  if (num_classes < 1) throw std::invalid_argument("HeadConfig: need at least one class");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("HeadConfig: kernel must be odd");
  if (conv3d_layers < 1) throw std::invalid_argument("HeadConfig: need at least one 3D conv layer");
  if (fused_channels < 0) throw std::invalid_argument("HeadConfig: fused_channels must be >= 0");
  if (decoder_widths.empty()) throw std::invalid_argument("HeadConfig: decoder needs at least one stage");
  for (int64_t w : decoder_widths)
    if (w < 1) throw std::invalid_argument("HeadConfig: decoder stage widths must be >= 1");
  for (int64_t g : grid) {
    if (g < 2 || g % 2 != 0)
      throw std::invalid_argument("HeadConfig: grid dims must be even and >= 2, got " +
                                  shape_string({grid[0], grid[1], grid[2]}));
  }
  // Each stage past the first halves the BEV plane.
  int64_t h = grid[0] / 2, w = grid[1] / 2;
  for (size_t s = 1; s < decoder_widths.size(); ++s) {
    if (h % 2 != 0 || w % 2 != 0)
      throw std::invalid_argument("HeadConfig: BEV plane not divisible by decoder downsampling");
    h /= 2;
    w /= 2;
  }
}

namespace {

Tensor tensor_add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("tensor_add: shape mismatch " + shape_string(a.dims()) + " vs " +
                                shape_string(b.dims()));
  Tensor out{a.dims()};
  const double* pa = a.data();
  const double* pb = b.data();
  double* o = out.data();
  for (int64_t i = 0; i < a.size(); ++i) o[i] = pa[i] + pb[i];
  return out;
}

int64_t pad_for(int64_t k) { return (k - 1) / 2; }

}  // namespace

PipelineWeights make_zero_weights(const HeadConfig& cfg) {
  cfg.validate();
  PipelineWeights w;
  const int64_t k = cfg.kernel;
  const size_t stages = cfg.decoder_widths.size();

  w.decoder.stem = Conv2dParams::make(cfg.collapsed_channels(), cfg.decoder_widths[0], k, 1, pad_for(k));
  int64_t prev = cfg.decoder_widths[0];
  for (size_t s = 0; s < stages; ++s) {
    const int64_t width = cfg.decoder_widths[s];
    const int64_t stride = s == 0 ? 1 : 2;
    ResidualStage stage;
    stage.conv_a = Conv2dParams::make(prev, width, k, stride, pad_for(k));
    stage.conv_b = Conv2dParams::make(width, width, k, 1, pad_for(k));
    if (stride != 1 || prev != width) stage.proj = Conv2dParams::make(prev, width, 1, stride, 0);
    w.decoder.stages.push_back(std::move(stage));
    w.decoder.laterals.push_back(Conv2dParams::make(width, cfg.c3, 1, 1, 0));
    prev = width;
  }

  w.seg.conv = Conv2dParams::make(cfg.c3, cfg.c3, k, 1, pad_for(k));
  w.seg.classifier = Conv2dParams::make(cfg.c3, cfg.num_classes, 1, 1, 0);

  w.fuse.fuse = Conv3dParams::make(cfg.c3 + cfg.c1, cfg.fused_out(), 1, 1, 0);
  w.fuse.classifier = Conv3dParams::make(cfg.fused_out(), cfg.num_classes, 1, 1, 0);

  for (int64_t l = 0; l < cfg.conv3d_layers; ++l)
    w.head3d.layers.push_back(Conv3dParams::make(cfg.c2, cfg.c2, k, 1, pad_for(k)));
  w.head3d.classifier = Conv3dParams::make(cfg.c2, cfg.num_classes, 1, 1, 0);
  return w;
}

std::vector<std::pair<std::string, Tensor*>> named_tensors(PipelineWeights& w) {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add2 = [&out](const std::string& name, Conv2dParams& p) {
    out.emplace_back(name + ".weight", &p.weight);
    out.emplace_back(name + ".bias", &p.bias);
  };
  auto add3 = [&out](const std::string& name, Conv3dParams& p) {
    out.emplace_back(name + ".weight", &p.weight);
    out.emplace_back(name + ".bias", &p.bias);
  };
  add2("decoder.stem", w.decoder.stem);
  for (size_t s = 0; s < w.decoder.stages.size(); ++s) {
    const std::string base = "decoder.stage" + std::to_string(s);
    add2(base + ".conv_a", w.decoder.stages[s].conv_a);
    add2(base + ".conv_b", w.decoder.stages[s].conv_b);
    if (w.decoder.stages[s].proj) add2(base + ".proj", *w.decoder.stages[s].proj);
  }
  for (size_t s = 0; s < w.decoder.laterals.size(); ++s)
    add2("decoder.lateral" + std::to_string(s), w.decoder.laterals[s]);
  add2("seg.conv", w.seg.conv);
  add2("seg.classifier", w.seg.classifier);
  add3("fuse.conv", w.fuse.fuse);
  add3("fuse.classifier", w.fuse.classifier);
  for (size_t l = 0; l < w.head3d.layers.size(); ++l)
    add3("head3d.layer" + std::to_string(l), w.head3d.layers[l]);
  add3("head3d.classifier", w.head3d.classifier);
  return out;
}

PipelineWeights make_random_weights(const HeadConfig& cfg, uint64_t seed) {
  PipelineWeights w = make_zero_weights(cfg);
  SplitMix64 rng{seed};
  for (auto& [name, tensor] : named_tensors(w)) {
    const bool is_bias = tensor->rank() == 1;
    double scale = 0.05;
    if (!is_bias) {
      int64_t fan_in = 1;
      for (size_t a = 1; a < tensor->rank(); ++a) fan_in *= tensor->dim(a);
      scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    }
    double* p = tensor->data();
    for (int64_t i = 0; i < tensor->size(); ++i) p[i] = rng.uniform(-scale, scale);
  }
  return w;
}

Tensor bev_collapse(const Tensor& vb) {
  if (vb.rank() != 4)
    throw std::invalid_argument("bev_collapse: expected [C, H, W, Z], got " + shape_string(vb.dims()));
  const int64_t c_n = vb.dim(0), h = vb.dim(1), w = vb.dim(2), z = vb.dim(3);
  Tensor out{{c_n * z, h, w}};
  const double* in = vb.data();
  double* o = out.data();
  for (int64_t c = 0; c < c_n; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t zi = 0; zi < z; ++zi)
          o[((c * z + zi) * h + y) * w + x] = in[((c * h + y) * w + x) * z + zi];
  return out;
}

Tensor bev_uncollapse(const Tensor& bev, int64_t channels) {
  if (bev.rank() != 3)
    throw std::invalid_argument("bev_uncollapse: expected [(C*Z), H, W], got " +
                                shape_string(bev.dims()));
  if (channels < 1 || bev.dim(0) % channels != 0)
    throw std::invalid_argument("bev_uncollapse: channel count " + std::to_string(channels) +
                                " does not divide " + std::to_string(bev.dim(0)));
  const int64_t c_n = channels, z = bev.dim(0) / channels, h = bev.dim(1), w = bev.dim(2);
  Tensor out{{c_n, h, w, z}};
  const double* in = bev.data();
  double* o = out.data();
  for (int64_t c = 0; c < c_n; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t zi = 0; zi < z; ++zi)
          o[((c * h + y) * w + x) * z + zi] = in[((c * z + zi) * h + y) * w + x];
  return out;
}

namespace {

Tensor residual_stage_forward(const Tensor& x, const ResidualStage& stage) {
  const Tensor a = relu(conv2d(x, stage.conv_a));
  const Tensor b = conv2d(a, stage.conv_b);
  const Tensor skip = stage.proj ? conv2d(x, *stage.proj) : x;
  return relu(tensor_add(b, skip));
}

}  // namespace

Tensor bev_decode(const Tensor& bprime, const BevDecoderWeights& w) {
  if (bprime.rank() != 3)
    throw std::invalid_argument("bev_decode: expected [(C2*Z/2), H/2, W/2], got " +
                                shape_string(bprime.dims()));
  if (w.stages.empty() || w.stages.size() != w.laterals.size())
    throw std::invalid_argument("bev_decode: weights need one lateral per stage");

  std::vector<Tensor> pyramid;
  pyramid.reserve(w.stages.size());
  Tensor x = relu(conv2d(bprime, w.stem));
  for (const ResidualStage& stage : w.stages) {
    x = residual_stage_forward(x, stage);
    pyramid.push_back(x);
  }

  Tensor top = conv2d(pyramid.back(), w.laterals.back());
  for (size_t s = pyramid.size() - 1; s-- > 0;)
    top = tensor_add(conv2d(pyramid[s], w.laterals[s]), upsample2x_bilinear(top));
  return top;
}

namespace {

struct BilinearTap {
  int64_t x0, x1, y0, y1;
  double wx, wy;
};

inline BilinearTap bilinear_tap(double u, double v, int64_t image_h, int64_t image_w) {
  BilinearTap t;
  t.x0 = static_cast<int64_t>(std::floor(u));
  t.y0 = static_cast<int64_t>(std::floor(v));
  t.x1 = std::min(t.x0 + 1, image_w - 1);
  t.y1 = std::min(t.y0 + 1, image_h - 1);
  t.wx = u - static_cast<double>(t.x0);
  t.wy = v - static_cast<double>(t.y0);
  return t;
}

}  // namespace

InterpolatedVolume interp_sample(const std::vector<Tensor>& features, const CameraRig& rig,
                                 const VoxelGridSpec& spec) {
  rig.validate();
  spec.validate();
  if (features.size() != rig.size())
    throw std::invalid_argument("interp_sample: feature map count does not match rig size");
  if (features.empty() || features[0].rank() != 3)
    throw std::invalid_argument("interp_sample: per-camera features must be [C1, H', W']");
  const int64_t c_n = features[0].dim(0);
  for (size_t n = 0; n < features.size(); ++n) {
    if (features[n].dims() != features[0].dims())
      throw std::invalid_argument("interp_sample: cameras must share feature dims");
    if (features[n].dim(1) != rig.cameras[n].image_h || features[n].dim(2) != rig.cameras[n].image_w)
      throw std::invalid_argument("interp_sample: feature dims disagree with camera image dims");
  }

  const Tensor centers = voxel_centers(spec);
  const int64_t voxels = spec.voxel_count();
  std::vector<Mat34> e2i;
  e2i.reserve(rig.size());
  for (const Camera& cam : rig.cameras) e2i.push_back(compose_e2i(cam));

  InterpolatedVolume out;
  out.features = Tensor{{c_n, spec.dims[0], spec.dims[1], spec.dims[2]}};
  out.observed = Tensor{{spec.dims[0], spec.dims[1], spec.dims[2]}};
  const double* ctr = centers.data();
  double* of = out.features.data();
  double* oc = out.observed.data();

  parallel_for(0, voxels, [&](int64_t voxel) {
    const Vec3 p{ctr[voxel * 3], ctr[voxel * 3 + 1], ctr[voxel * 3 + 2]};
    int64_t count = 0;
    for (size_t n = 0; n < rig.size(); ++n) {
      const Camera& cam = rig.cameras[n];
      const Projection pr = project_point(e2i[n], p, cam.image_h, cam.image_w);
      if (!pr.valid) continue;
      const BilinearTap t = bilinear_tap(pr.u, pr.v, cam.image_h, cam.image_w);
      const double* f = features[n].data();
      const int64_t hw = cam.image_h * cam.image_w;
      for (int64_t c = 0; c < c_n; ++c) {
        const double* fc = f + c * hw;
        const double v =
            (1.0 - t.wy) * ((1.0 - t.wx) * fc[t.y0 * cam.image_w + t.x0] +
                            t.wx * fc[t.y0 * cam.image_w + t.x1]) +
            t.wy * ((1.0 - t.wx) * fc[t.y1 * cam.image_w + t.x0] +
                    t.wx * fc[t.y1 * cam.image_w + t.x1]);
        of[c * voxels + voxel] += v;
      }
      ++count;
    }
    if (count > 0) {
      const double inv = 1.0 / static_cast<double>(count);
      for (int64_t c = 0; c < c_n; ++c) of[c * voxels + voxel] *= inv;
      oc[voxel] = static_cast<double>(count);
    }
  });
  return out;
}

std::vector<Tensor> interp_sample_backward(const std::vector<Tensor>& features,
                                           const CameraRig& rig, const VoxelGridSpec& spec,
                                           const Tensor& grad_out) {
  rig.validate();
  spec.validate();
  if (features.size() != rig.size())
    throw std::invalid_argument("interp_sample_backward: feature count does not match rig size");
  const int64_t c_n = features[0].dim(0);
  const int64_t voxels = spec.voxel_count();
  if (grad_out.dims() != std::vector<int64_t>{c_n, spec.dims[0], spec.dims[1], spec.dims[2]})
    throw std::invalid_argument("interp_sample_backward: grad_out shape " +
                                shape_string(grad_out.dims()) + " does not match output");

  const Tensor centers = voxel_centers(spec);
  std::vector<Mat34> e2i;
  e2i.reserve(rig.size());
  for (const Camera& cam : rig.cameras) e2i.push_back(compose_e2i(cam));

  std::vector<Tensor> grads;
  grads.reserve(features.size());
  for (const Tensor& f : features) grads.emplace_back(f.dims());

  const double* ctr = centers.data();
  const double* go = grad_out.data();

  for (int64_t voxel = 0; voxel < voxels; ++voxel) {
    const Vec3 p{ctr[voxel * 3], ctr[voxel * 3 + 1], ctr[voxel * 3 + 2]};
    // First pass: observing-camera count fixes the mean weight.
    int64_t count = 0;
    for (size_t n = 0; n < rig.size(); ++n) {
      const Camera& cam = rig.cameras[n];
      if (project_point(e2i[n], p, cam.image_h, cam.image_w).valid) ++count;
    }
    if (count == 0) continue;
    const double inv = 1.0 / static_cast<double>(count);
    for (size_t n = 0; n < rig.size(); ++n) {
      const Camera& cam = rig.cameras[n];
      const Projection pr = project_point(e2i[n], p, cam.image_h, cam.image_w);
      if (!pr.valid) continue;
      const BilinearTap t = bilinear_tap(pr.u, pr.v, cam.image_h, cam.image_w);
      double* g = grads[n].data();
      const int64_t hw = cam.image_h * cam.image_w;
      for (int64_t c = 0; c < c_n; ++c) {
        const double gval = go[c * voxels + voxel] * inv;
        double* gc = g + c * hw;
        gc[t.y0 * cam.image_w + t.x0] += (1.0 - t.wy) * (1.0 - t.wx) * gval;
        gc[t.y0 * cam.image_w + t.x1] += (1.0 - t.wy) * t.wx * gval;
        gc[t.y1 * cam.image_w + t.x0] += t.wy * (1.0 - t.wx) * gval;
        gc[t.y1 * cam.image_w + t.x1] += t.wy * t.wx * gval;
      }
    }
  }
  return grads;
}

FusedVolume integrate(const Tensor& bev, const InterpolatedVolume& p, const FuseWeights& w) {
  if (bev.rank() != 3)
    throw std::invalid_argument("integrate: expected BEV [C3, H/2, W/2], got " +
                                shape_string(bev.dims()));
  if (p.features.rank() != 4)
    throw std::invalid_argument("integrate: expected P [C1, H, W, Z], got " +
                                shape_string(p.features.dims()));
  const int64_t h = p.features.dim(1), w_dim = p.features.dim(2), z = p.features.dim(3);
  if (bev.dim(1) * 2 != h || bev.dim(2) * 2 != w_dim)
    throw std::invalid_argument("integrate: BEV " + shape_string(bev.dims()) +
                                " is not the half-scale plane of P " +
                                shape_string(p.features.dims()));

  const Tensor bz = repeat_z(upsample2x_bilinear(bev), z);
  const Tensor cat = concat_channels(bz, p.features);
  FusedVolume out;
  out.features = conv3d(cat, w.fuse);
  out.logits = conv3d(out.features, w.classifier);
  return out;
}

Tensor bev_seg_head(const Tensor& bev, const BevSegWeights& w) {
  return conv2d(relu(conv2d(bev, w.conv)), w.classifier);
}

BevSegGrads bev_seg_head_backward(const Tensor& bev, const BevSegWeights& w,
                                  const Tensor& grad_logits) {
  const Tensor pre = conv2d(bev, w.conv);
  const Tensor act = relu(pre);
  BevSegGrads g;
  g.classifier = conv2d_backward(act, w.classifier, grad_logits);
  const Tensor grad_pre = relu_backward(pre, g.classifier.input);
  g.conv = conv2d_backward(bev, w.conv, grad_pre);
  g.input = g.conv.input;
  return g;
}

Tensor head_3dfcn(const Tensor& vb, const Head3dWeights& w) {
  Tensor x = nearest_upsample2x_3d(vb);
  for (const Conv3dParams& layer : w.layers) x = relu(conv3d(x, layer));
  return conv3d(x, w.classifier);
}

ForwardResult forward_pipeline(const std::vector<Tensor>& features, const CameraRig& rig,
                               const std::vector<Tensor>& depth_logits,
                               const std::vector<Tensor>& context, const VoxelGridSpec& grid,
                               const DepthBinSpec& bins, const HeadConfig& cfg,
                               const PipelineWeights& w) {
  cfg.validate();
  rig.validate();
  grid.validate();
  bins.validate();
  if (grid.dims != cfg.grid)
    throw std::invalid_argument("forward_pipeline: grid dims do not match HeadConfig");
  const size_t n = rig.size();
  if (features.size() != n || depth_logits.size() != n || context.size() != n)
    throw std::invalid_argument("forward_pipeline: per-camera input counts must match rig size");
  for (size_t i = 0; i < n; ++i) {
    if (features[i].rank() != 3 || features[i].dim(0) != cfg.c1)
      throw std::invalid_argument("forward_pipeline: features must be [C1, H', W']");
    if (depth_logits[i].rank() != 3 || depth_logits[i].dim(0) != bins.count)
      throw std::invalid_argument("forward_pipeline: depth logits must be [D, H', W']");
    if (context[i].rank() != 3 || context[i].dim(0) != cfg.c2)
      throw std::invalid_argument("forward_pipeline: context must be [C2, H', W']");
  }

  const VoxelGridSpec half = grid.half();
  std::vector<Tensor> frustums;
  std::vector<Tensor> lifted;
  frustums.reserve(n);
  lifted.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    frustums.push_back(build_frustum(rig.cameras[i], bins));
    lifted.push_back(lift(depth_logits[i], context[i]));
  }
  const Tensor vb = voxel_pool(frustums, lifted, half);
  const Tensor bprime = bev_collapse(vb);
  const Tensor bev = bev_decode(bprime, w.decoder);

  ForwardResult out;
  out.bev_logits = bev_seg_head(bev, w.seg);
  const InterpolatedVolume p = interp_sample(features, rig, grid);
  out.logits = integrate(bev, p, w.fuse).logits;
  return out;
}

std::vector<ConvLayerInfo> decoder_conv_layers(const HeadConfig& cfg) {
  cfg.validate();
  std::vector<ConvLayerInfo> out;
  const int64_t k = cfg.kernel;
  int64_t h = cfg.grid[0] / 2, w = cfg.grid[1] / 2;
  out.push_back({"decoder.stem", false, cfg.collapsed_channels(), cfg.decoder_widths[0], k, h, w, 1});
  int64_t prev = cfg.decoder_widths[0];
  for (size_t s = 0; s < cfg.decoder_widths.size(); ++s) {
    const int64_t width = cfg.decoder_widths[s];
    if (s > 0) {
      h /= 2;
      w /= 2;
    }
    const std::string base = "decoder.stage" + std::to_string(s);
    out.push_back({base + ".conv_a", false, prev, width, k, h, w, 1});
    out.push_back({base + ".conv_b", false, width, width, k, h, w, 1});
    if (s > 0 || prev != width) out.push_back({base + ".proj", false, prev, width, 1, h, w, 1});
    out.push_back({"decoder.lateral" + std::to_string(s), false, width, cfg.c3, 1, h, w, 1});
    prev = width;
  }
  return out;
}

std::vector<ConvLayerInfo> seg_head_conv_layers(const HeadConfig& cfg) {
  cfg.validate();
  const int64_t h = cfg.grid[0] / 2, w = cfg.grid[1] / 2;
  return {{"seg.conv", false, cfg.c3, cfg.c3, cfg.kernel, h, w, 1},
          {"seg.classifier", false, cfg.c3, cfg.num_classes, 1, h, w, 1}};
}

std::vector<ConvLayerInfo> fuse_conv_layers(const HeadConfig& cfg) {
  cfg.validate();
  const int64_t h = cfg.grid[0], w = cfg.grid[1], z = cfg.grid[2];
  return {{"fuse.conv", true, cfg.c3 + cfg.c1, cfg.fused_out(), 1, h, w, z},
          {"fuse.classifier", true, cfg.fused_out(), cfg.num_classes, 1, h, w, z}};
}

std::vector<ConvLayerInfo> head3d_conv_layers(const HeadConfig& cfg) {
  cfg.validate();
  std::vector<ConvLayerInfo> out;
  const int64_t h = cfg.grid[0], w = cfg.grid[1], z = cfg.grid[2];
  for (int64_t l = 0; l < cfg.conv3d_layers; ++l)
    out.push_back({"head3d.layer" + std::to_string(l), true, cfg.c2, cfg.c2, cfg.kernel, h, w, z});
  out.push_back({"head3d.classifier", true, cfg.c2, cfg.num_classes, 1, h, w, z});
  return out;
}

}  // namespace bevocc
