#include "bevocc/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "bevocc/parallel.hpp"
#include "bevocc/rng.hpp"

namespace bevocc {

namespace {

void check_positive_dims(const FlopsLayerSpec& s, const char* op) {
  if (s.c_in < 1 || s.c_out < 1 || s.k < 1 || s.k % 2 == 0 || s.out_h < 1 || s.out_w < 1 ||
      s.out_z < 1)
    throw std::invalid_argument(std::string(op) + ": layer spec needs positive dims and odd k");
}

}  // namespace

FlopsLayerSpec FlopsLayerSpec::conv2d_spec(int64_t c_in, int64_t c_out, int64_t k, int64_t h,
                                           int64_t w) {
  FlopsLayerSpec s;
  s.kind = Kind::conv2d;
  s.c_in = c_in;
  s.c_out = c_out;
  s.k = k;
  s.out_h = h;
  s.out_w = w;
  return s;
}

FlopsLayerSpec FlopsLayerSpec::conv3d_spec(int64_t c_in, int64_t c_out, int64_t k, int64_t h,
                                           int64_t w, int64_t z) {
  FlopsLayerSpec s;
  s.kind = Kind::conv3d;
  s.c_in = c_in;
  s.c_out = c_out;
  s.k = k;
  s.out_h = h;
  s.out_w = w;
  s.out_z = z;
  return s;
}

FlopsLayerSpec FlopsLayerSpec::interp_spec(int64_t cameras, int64_t c, int64_t h, int64_t w,
                                           int64_t z) {
  FlopsLayerSpec s;
  s.kind = Kind::interp;
  s.cameras = cameras;
  s.c_in = c;
  s.c_out = c;
  s.out_h = h;
  s.out_w = w;
  s.out_z = z;
  return s;
}

FlopsLayerSpec FlopsLayerSpec::from_conv_layer(const ConvLayerInfo& info) {
  return info.is_3d ? conv3d_spec(info.c_in, info.c_out, info.k, info.out_h, info.out_w, info.out_z)
                    : conv2d_spec(info.c_in, info.c_out, info.k, info.out_h, info.out_w);
}

int64_t flops_conv3d(const FlopsLayerSpec& spec) {
  if (spec.kind != FlopsLayerSpec::Kind::conv3d)
    throw std::invalid_argument("flops_conv3d: spec kind is not conv3d");
  check_positive_dims(spec, "flops_conv3d");
  return spec.c_in * spec.k * spec.k * spec.k * spec.c_out * spec.out_h * spec.out_w * spec.out_z;
}

int64_t flops_conv2d(const FlopsLayerSpec& spec) {
  if (spec.kind != FlopsLayerSpec::Kind::conv2d)
    throw std::invalid_argument("flops_conv2d: spec kind is not conv2d");
  check_positive_dims(spec, "flops_conv2d");
  return spec.c_in * spec.k * spec.k * spec.c_out * spec.out_h * spec.out_w;
}

int64_t flops_interp(int64_t cameras, int64_t c, int64_t h, int64_t w, int64_t z) {
  if (cameras < 1 || c < 1 || h < 1 || w < 1 || z < 1)
    throw std::invalid_argument("flops_interp: all arguments must be positive");
  return 4 * cameras * c * h * w * z;
}

int64_t flops_interp(const FlopsLayerSpec& spec) {
  if (spec.kind != FlopsLayerSpec::Kind::interp)
    throw std::invalid_argument("flops_interp: spec kind is not interp");
  return flops_interp(spec.cameras, spec.c_in, spec.out_h, spec.out_w, spec.out_z);
}

int64_t speedup_ratio(const FlopsLayerSpec& spec3d, const FlopsLayerSpec& spec2d) {
  if (spec3d.kind != FlopsLayerSpec::Kind::conv3d || spec2d.kind != FlopsLayerSpec::Kind::conv2d)
    throw std::invalid_argument("speedup_ratio: expected a (conv3d, conv2d) pair");
  if (spec3d.c_in != spec2d.c_in || spec3d.c_out != spec2d.c_out || spec3d.k != spec2d.k ||
      spec3d.out_h != spec2d.out_h || spec3d.out_w != spec2d.out_w)
    throw std::invalid_argument("speedup_ratio: layer pair is not matched on channels, k, H, W");
  const int64_t f3 = flops_conv3d(spec3d);
  const int64_t f2 = flops_conv2d(spec2d);
  if (f3 % f2 != 0) throw std::invalid_argument("speedup_ratio: non-integral ratio");
  return f3 / f2;  // k * Z by construction
}

IouReport miou(const Tensor& pred_labels, const Tensor& gt_labels, int64_t num_classes,
               const Tensor* ignore_mask) {
  if (!pred_labels.same_shape(gt_labels))
    throw std::invalid_argument("miou: prediction " + shape_string(pred_labels.dims()) +
                                " and ground truth " + shape_string(gt_labels.dims()) + " differ");
  if (num_classes < 2)
    throw std::invalid_argument("miou: need at least one semantic class besides empty");
  if (ignore_mask && ignore_mask->size() != pred_labels.size())
    throw std::invalid_argument("miou: ignore mask size mismatch");

  const double* pp = pred_labels.data();
  const double* gp = gt_labels.data();
  const double* im = ignore_mask ? ignore_mask->data() : nullptr;
  std::vector<int64_t> tp(static_cast<size_t>(num_classes), 0);
  std::vector<int64_t> fp(static_cast<size_t>(num_classes), 0);
  std::vector<int64_t> fn(static_cast<size_t>(num_classes), 0);
  for (int64_t i = 0; i < pred_labels.size(); ++i) {
    if (im && im[i] > 0.5) continue;
    const auto pred = static_cast<int64_t>(std::llround(pp[i]));
    const auto gt = static_cast<int64_t>(std::llround(gp[i]));
    if (pred < 0 || pred >= num_classes || gt < 0 || gt >= num_classes)
      throw std::invalid_argument("miou: label out of range [0, " + std::to_string(num_classes) + ")");
    if (pred == gt) {
      ++tp[static_cast<size_t>(gt)];
    } else {
      ++fp[static_cast<size_t>(pred)];
      ++fn[static_cast<size_t>(gt)];
    }
  }

  IouReport report;
  report.per_class.assign(static_cast<size_t>(num_classes - 1), 0.0);
  report.defined.assign(static_cast<size_t>(num_classes - 1), false);
  double sum = 0.0;
  for (int64_t c = 1; c < num_classes; ++c) {
    const int64_t uni = tp[static_cast<size_t>(c)] + fp[static_cast<size_t>(c)] + fn[static_cast<size_t>(c)];
    if (uni == 0) continue;  // class absent from both; excluded from the mean
    const double iou = static_cast<double>(tp[static_cast<size_t>(c)]) / static_cast<double>(uni);
    report.per_class[static_cast<size_t>(c - 1)] = iou;
    report.defined[static_cast<size_t>(c - 1)] = true;
    sum += iou;
    ++report.defined_classes;
  }
  if (report.defined_classes > 0) report.mean = sum / static_cast<double>(report.defined_classes);
  return report;
}

const BenchStage* BenchReport::find(const std::string& name) const {
  for (const BenchStage& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

namespace {

struct TimedStats {
  double median_ms = 0.0;
  double p10_ms = 0.0;
  double p90_ms = 0.0;
};

double percentile(std::vector<double> sorted, double q) {
  // Nearest-rank on the sorted sample.
  const size_t n = sorted.size();
  const size_t idx = std::min(n - 1, static_cast<size_t>(std::ceil(q * static_cast<double>(n))) -
                                         (q > 0.0 ? 1 : 0));
  return sorted[idx];
}

TimedStats time_fn(const std::function<void()>& fn, int64_t repeats) {
  for (int i = 0; i < 2; ++i) fn();  // warmup
  std::vector<double> samples;
  samples.reserve(static_cast<size_t>(repeats));
  for (int64_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  TimedStats s;
  s.median_ms = samples[samples.size() / 2];
  s.p10_ms = percentile(samples, 0.10);
  s.p90_ms = percentile(samples, 0.90);
  return s;
}

int64_t conv_layer_flops(const ConvLayerInfo& info) {
  const FlopsLayerSpec spec = FlopsLayerSpec::from_conv_layer(info);
  return info.is_3d ? flops_conv3d(spec) : flops_conv2d(spec);
}

int64_t sum_conv_flops(const std::vector<ConvLayerInfo>& layers) {
  int64_t total = 0;
  for (const ConvLayerInfo& l : layers) total += conv_layer_flops(l);
  return total;
}

Tensor random_tensor(const std::vector<int64_t>& dims, SplitMix64& rng, double lo, double hi) {
  Tensor t{dims};
  double* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i) p[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

BenchReport bench_heads(const HeadConfig& cfg, const VoxelGridSpec& grid, const CameraRig& rig,
                        uint64_t seed, int64_t repeats) {
  cfg.validate();
  grid.validate();
  rig.validate();
  if (repeats < 5) throw std::invalid_argument("bench_heads: need repeats >= 5");
  if (grid.dims != cfg.grid)
    throw std::invalid_argument("bench_heads: grid dims do not match HeadConfig");

  SplitMix64 rng{seed};
  const VoxelGridSpec half = grid.half();
  const Tensor vb =
      random_tensor({cfg.c2, half.dims[0], half.dims[1], half.dims[2]}, rng, -1.0, 1.0);
  std::vector<Tensor> features;
  features.reserve(rig.size());
  for (const Camera& cam : rig.cameras)
    features.push_back(random_tensor({cfg.c1, cam.image_h, cam.image_w}, rng, -1.0, 1.0));
  const PipelineWeights weights = make_random_weights(cfg, seed ^ 0x9d5f61c2a3b84e17ull);

  BenchReport report;
  report.repeats = repeats;
  report.parallel = thread_count() > 1;
  {
    std::ostringstream os;
    os << "grid=" << grid.dims[0] << "x" << grid.dims[1] << "x" << grid.dims[2]
       << " c1=" << cfg.c1 << " c2=" << cfg.c2 << " c3=" << cfg.c3 << " k=" << cfg.kernel
       << " cameras=" << rig.size() << " repeats=" << repeats
       << " threads=" << thread_count();
    report.config_echo = os.str();
  }

  const int64_t flops_decode = sum_conv_flops(decoder_conv_layers(cfg));
  const int64_t flops_fuse = sum_conv_flops(fuse_conv_layers(cfg));
  const int64_t flops_head3d = sum_conv_flops(head3d_conv_layers(cfg));
  const int64_t flops_interp_stage =
      flops_interp(static_cast<int64_t>(rig.size()), cfg.c1, grid.dims[0], grid.dims[1], grid.dims[2]);

  auto add_stage = [&report](const std::string& name, int64_t flops, const TimedStats& t) {
    report.stages.push_back({name, flops, t.median_ms, t.p10_ms, t.p90_ms});
  };

  // Keep intermediate results alive so stage timings compose into the total.
  Tensor bprime = bev_collapse(vb);
  Tensor bev = bev_decode(bprime, weights.decoder);
  InterpolatedVolume interp = interp_sample(features, rig, grid);

  add_stage("bev_collapse", 0, time_fn([&] { bprime = bev_collapse(vb); }, repeats));
  add_stage("bev_decode", flops_decode,
            time_fn([&] { bev = bev_decode(bprime, weights.decoder); }, repeats));
  add_stage("interp_sample", flops_interp_stage,
            time_fn([&] { interp = interp_sample(features, rig, grid); }, repeats));
  add_stage("integrate", flops_fuse,
            time_fn([&] { integrate(bev, interp, weights.fuse); }, repeats));

  const TimedStats total2d = time_fn(
      [&] {
        const Tensor bp = bev_collapse(vb);
        const Tensor b = bev_decode(bp, weights.decoder);
        const InterpolatedVolume p = interp_sample(features, rig, grid);
        integrate(b, p, weights.fuse);
      },
      repeats);
  add_stage("head2d_total", flops_decode + flops_interp_stage + flops_fuse, total2d);

  const TimedStats total3d =
      time_fn([&] { head_3dfcn(vb, weights.head3d); }, repeats);
  add_stage("head3d_total", flops_head3d, total3d);

  return report;
}

BenchStage time_stage(const std::string& name, int64_t flops, const std::function<void()>& fn,
                      int64_t repeats) {
  if (repeats < 5) throw std::invalid_argument("time_stage: need repeats >= 5");
  const TimedStats t = time_fn(fn, repeats);
  return {name, flops, t.median_ms, t.p10_ms, t.p90_ms};
}

TableFormat parse_table_format(const std::string& name) {
  if (name == "csv") return TableFormat::csv;
  if (name == "markdown") return TableFormat::markdown;
  throw std::invalid_argument("unknown table format '" + name + "' (expected csv or markdown)");
}

std::string emit_table(const BenchReport& report, TableFormat format) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  if (format == TableFormat::csv) {
    os << "stage,flops,median_ms,p10_ms,p90_ms\n";
    for (const BenchStage& s : report.stages)
      os << s.name << "," << s.flops << "," << s.median_ms << "," << s.p10_ms << "," << s.p90_ms
         << "\n";
  } else {
    os << "| stage | flops | median_ms | p10_ms | p90_ms |\n";
    os << "| --- | --- | --- | --- | --- |\n";
    for (const BenchStage& s : report.stages)
      os << "| " << s.name << " | " << s.flops << " | " << s.median_ms << " | " << s.p10_ms
         << " | " << s.p90_ms << " |\n";
  }
  return os.str();
}

}  // namespace bevocc
