// Command-line front end wiring scene generation, the forward pipeline,
// benchmarks, gradient checks, FLOPs reports, and evaluation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bevocc/config.hpp"
#include "bevocc/gradcheck.hpp"
#include "bevocc/metrics.hpp"
#include "bevocc/occupancy_head.hpp"
#include "bevocc/parallel.hpp"
#include "bevocc/rng.hpp"
#include "bevocc/scenegen.hpp"
#include "bevocc/supervision.hpp"
#include "bevocc/tensor.hpp"
#include "bevocc/view_transform.hpp"

namespace {

using namespace bevocc;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct CommonOpts {
  std::string config_path;
  std::string out;
  std::string format = "csv";
  int64_t repeats = 0;  // 0 = use config
  int64_t seed = -1;    // -1 = use config
  bool parallel = false;
};

RunConfig load_config(CommonOpts& opts) {
  RunConfig cfg = load_run_config(opts.config_path);
  if (opts.seed >= 0) cfg.seed = static_cast<uint64_t>(opts.seed);
  if (opts.repeats > 0) cfg.bench_repeats = opts.repeats;
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  if (opts.parallel) set_thread_count(4);
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path);
}

// Per-camera depth logits and context drawn from the config seed; the
// pipeline takes these as inputs at desk scale (there is no learned
// depth/context network).
struct SyntheticInputs {
  std::vector<Tensor> depth_logits;
  std::vector<Tensor> context;
};

SyntheticInputs make_synthetic_inputs(const RunConfig& cfg, const CameraRig& rig) {
  SyntheticInputs inputs;
  SplitMix64 rng{cfg.seed ^ 0x5e110f00dfeedull};
  for (const Camera& cam : rig.cameras) {
    Tensor d{{cfg.bins.count, cam.image_h, cam.image_w}};
    for (int64_t i = 0; i < d.size(); ++i) d.data()[i] = rng.uniform(-1.0, 1.0);
    Tensor c{{cfg.head.c2, cam.image_h, cam.image_w}};
    for (int64_t i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform(-1.0, 1.0);
    inputs.depth_logits.push_back(std::move(d));
    inputs.context.push_back(std::move(c));
  }
  return inputs;
}

int cmd_gen_scene(CommonOpts& opts) {
  RunConfig cfg = load_config(opts);
  const std::string dir = opts.out.empty() ? cfg.scene_dir : opts.out;
  SceneBundle bundle;
  bundle.grid = cfg.grid;
  bundle.scene = gen_scene(cfg.scene_spec());
  bundle.rig = cfg.rig();
  bundle.views = render_views(bundle.scene, bundle.rig, cfg.grid, cfg.noise_sigma, cfg.seed);
  write_scene_bundle(bundle, dir);
  std::cout << dir << "/manifest.json\n";
  return kExitOk;
}

int cmd_forward(CommonOpts& opts) {
  RunConfig cfg = load_config(opts);
  const SceneBundle bundle = load_scene_bundle(cfg.scene_dir);
  if (bundle.scene.num_classes != cfg.head.num_classes)
    throw std::invalid_argument("forward: scene has " + std::to_string(bundle.scene.num_classes) +
                                " classes but config.head.classes is " +
                                std::to_string(cfg.head.num_classes));
  if (bundle.views.empty() || bundle.views[0].features.dim(0) != cfg.head.c1)
    throw std::invalid_argument("forward: scene feature channels do not match config.head.c1");
  if (bundle.grid.dims != cfg.grid.dims)
    throw std::invalid_argument("forward: scene grid dims do not match config grid");

  const CameraRig& rig = bundle.rig;
  std::vector<Tensor> features;
  for (const RenderedView& view : bundle.views) features.push_back(view.features);
  const SyntheticInputs inputs = make_synthetic_inputs(cfg, rig);
  const PipelineWeights weights = cfg.weights();

  const ForwardResult result = forward_pipeline(features, rig, inputs.depth_logits, inputs.context,
                                                cfg.grid, cfg.bins, cfg.head, weights);

  // Eq-style loss report against the scene ground truth.
  const Tensor& labels = bundle.scene.labels;
  LossBreakdown losses;
  losses.focal = focal_loss(result.logits, labels, 2.0).value;
  const AffinityResult aff = affinity_losses(result.logits, labels);
  losses.sem = aff.sem.value;
  losses.geo = aff.geo.value;
  losses.dice = dice_loss(result.logits, labels).value;
  losses.lovasz = lovasz_softmax(result.logits, labels).value;
  double depth_total = 0.0;
  for (size_t n = 0; n < bundle.views.size(); ++n) {
    const DepthTargets targets = depth_targets(bundle.views[n].depth, cfg.bins);
    depth_total += depth_loss(inputs.depth_logits[n], targets.one_hot, targets.valid).value;
  }
  losses.depth = depth_total / static_cast<double>(bundle.views.size());
  const Tensor bev_gt = or_pool2x2(bev_gt_from_occ(labels, cfg.head.num_classes));
  losses.bev = bev_bce(result.bev_logits, bev_gt).value;

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  save_occt(cfg.out_dir + "/logits.occt", result.logits, OcctDtype::f64);
  save_occt(cfg.out_dir + "/bev_logits.occt", result.bev_logits, OcctDtype::f64);
  save_weights_manifest(weights, cfg.out_dir + "/weights");

  json loss_json{{"focal", losses.focal}, {"sem", losses.sem},       {"geo", losses.geo},
                 {"dice", losses.dice},   {"lovasz", losses.lovasz}, {"depth", losses.depth},
                 {"bev_bce", losses.bev}, {"total", losses.total()}};
  write_text(cfg.out_dir + "/loss.json", loss_json.dump(2) + "\n");
  std::cout << cfg.out_dir << "/loss.json\n";
  return kExitOk;
}

int cmd_bench(CommonOpts& opts) {
  RunConfig cfg = load_config(opts);
  const CameraRig rig = cfg.rig();
  const int64_t repeats = cfg.bench_repeats;

  BenchReport heads = bench_heads(cfg.head, cfg.grid, rig, cfg.seed, repeats);

  // View-transform stages, then the latency breakdown groups
  // (2D per-image work / 2D-to-3D scatter / 3D heads / totals).
  const SyntheticInputs inputs = make_synthetic_inputs(cfg, rig);
  std::vector<Tensor> frustums;
  for (const Camera& cam : rig.cameras) frustums.push_back(build_frustum(cam, cfg.bins));
  std::vector<Tensor> lifted;
  for (size_t n = 0; n < rig.size(); ++n)
    lifted.push_back(lift(inputs.depth_logits[n], inputs.context[n]));
  const VoxelGridSpec half = cfg.grid.half();

  BenchReport report;
  report.repeats = repeats;
  report.parallel = thread_count() > 1;
  report.config_echo = heads.config_echo;
  report.stages.push_back(time_stage(
      "lift", 0,
      [&] {
        for (size_t n = 0; n < rig.size(); ++n) lift(inputs.depth_logits[n], inputs.context[n]);
      },
      repeats));
  report.stages.push_back(
      time_stage("voxel_pool", 0, [&] { voxel_pool(frustums, lifted, half); }, repeats));
  for (const BenchStage& s : heads.stages) report.stages.push_back(s);

  auto median_of = [&report](const std::string& name) { return report.find(name)->median_ms; };
  auto flops_of = [&report](const std::string& name) { return report.find(name)->flops; };
  const double t_lift = median_of("lift");
  const double t_pool = median_of("voxel_pool");
  const double t_2d = median_of("head2d_total");
  const double t_3d = median_of("head3d_total");
  report.stages.push_back({"group_2d", 0, t_lift, 0.0, 0.0});
  report.stages.push_back({"group_2d_to_3d", 0, t_pool, 0.0, 0.0});
  report.stages.push_back({"group_3d_head2d", flops_of("head2d_total"), t_2d, 0.0, 0.0});
  report.stages.push_back({"group_3d_head3d", flops_of("head3d_total"), t_3d, 0.0, 0.0});
  report.stages.push_back(
      {"total_head2d", flops_of("head2d_total"), t_lift + t_pool + t_2d, 0.0, 0.0});
  report.stages.push_back(
      {"total_head3d", flops_of("head3d_total"), t_lift + t_pool + t_3d, 0.0, 0.0});

  const std::string table = emit_table(report, parse_table_format(opts.format));
  std::cerr << "# " << report.config_echo << "\n";
  if (!opts.out.empty() && opts.out != cfg.out_dir) {
    write_text(opts.out, table);
  } else {
    std::cout << table;
  }
  return kExitOk;
}

int cmd_gradcheck(CommonOpts& opts, int rounds) {
  RunConfig cfg = load_config(opts);
  const auto reports = run_gradient_suite(cfg.seed, rounds);
  bool all_pass = true;
  std::cout << "op,max_rel_err,tol,status\n";
  for (const GradCheckReport& r : reports) {
    std::cout << r.op << "," << r.max_rel_err << "," << r.tol << ","
              << (r.pass ? "PASS" : "FAIL") << "\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass ? kExitOk : kExitValidation;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, int64_t classes,
             const std::string& format) {
  const Tensor pred = load_occt(pred_path);
  const Tensor gt = load_occt(gt_path);
  if (!pred.same_shape(gt))
    throw std::invalid_argument("eval: prediction " + shape_string(pred.dims()) +
                                " and ground truth " + shape_string(gt.dims()) + " differ");
  const IouReport report = miou(pred, gt, classes);
  const TableFormat fmt = parse_table_format(format);
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  if (fmt == TableFormat::csv) {
    os << "class,iou,defined\n";
    for (size_t c = 0; c < report.per_class.size(); ++c)
      os << (c + 1) << "," << report.per_class[c] << "," << (report.defined[c] ? 1 : 0) << "\n";
    os << "mean," << report.mean << "," << report.defined_classes << "\n";
  } else {
    os << "| class | iou | defined |\n| --- | --- | --- |\n";
    for (size_t c = 0; c < report.per_class.size(); ++c)
      os << "| " << (c + 1) << " | " << report.per_class[c] << " | " << (report.defined[c] ? 1 : 0)
         << " |\n";
    os << "| mean | " << report.mean << " | " << report.defined_classes << " |\n";
  }
  std::cout << os.str();
  return kExitOk;
}

int cmd_flops(CommonOpts& opts) {
  RunConfig cfg = load_config(opts);
  const CameraRig rig = cfg.rig();
  const int64_t cameras = static_cast<int64_t>(rig.size());

  struct Row {
    std::string name;
    std::string kind;
    int64_t flops;
    int64_t ratio;  // Eq-5 ratio vs the matched 2D layer; 0 = not applicable
  };
  std::vector<Row> rows;
  int64_t decoder_total = 0, fuse_total = 0, head3d_total = 0, seg_total = 0;

  auto add_conv = [&rows](const ConvLayerInfo& info) -> int64_t {
    const FlopsLayerSpec spec = FlopsLayerSpec::from_conv_layer(info);
    int64_t ratio = 0;
    int64_t flops = 0;
    if (info.is_3d) {
      flops = flops_conv3d(spec);
      const FlopsLayerSpec matched =
          FlopsLayerSpec::conv2d_spec(info.c_in, info.c_out, info.k, info.out_h, info.out_w);
      ratio = speedup_ratio(spec, matched);
    } else {
      flops = flops_conv2d(spec);
    }
    rows.push_back({info.name, info.is_3d ? "conv3d" : "conv2d", flops, ratio});
    return flops;
  };

  for (const ConvLayerInfo& info : decoder_conv_layers(cfg.head)) decoder_total += add_conv(info);
  for (const ConvLayerInfo& info : seg_head_conv_layers(cfg.head)) seg_total += add_conv(info);
  const int64_t interp_total = flops_interp(cameras, cfg.head.c1, cfg.grid.dims[0],
                                            cfg.grid.dims[1], cfg.grid.dims[2]);
  rows.push_back({"interp", "interp", interp_total, 0});
  for (const ConvLayerInfo& info : fuse_conv_layers(cfg.head)) fuse_total += add_conv(info);
  for (const ConvLayerInfo& info : head3d_conv_layers(cfg.head)) head3d_total += add_conv(info);

  rows.push_back({"decoder_total", "", decoder_total, 0});
  rows.push_back({"seg_total", "", seg_total, 0});
  rows.push_back({"interp_total", "", interp_total, 0});
  rows.push_back({"fuse_total", "", fuse_total, 0});
  rows.push_back({"head2d_total", "", decoder_total + interp_total + fuse_total, 0});
  rows.push_back({"head3d_total", "", head3d_total, 0});

  const TableFormat fmt = parse_table_format(opts.format);
  std::ostringstream os;
  if (fmt == TableFormat::csv) {
    os << "name,kind,flops,eq5_ratio\n";
    for (const Row& r : rows) {
      os << r.name << "," << r.kind << "," << r.flops << ",";
      if (r.ratio > 0) os << r.ratio;
      os << "\n";
    }
  } else {
    os << "| name | kind | flops | eq5_ratio |\n| --- | --- | --- | --- |\n";
    for (const Row& r : rows) {
      os << "| " << r.name << " | " << r.kind << " | " << r.flops << " | ";
      if (r.ratio > 0) os << r.ratio;
      os << " |\n";
    }
  }
  if (!opts.out.empty()) {
    write_text(opts.out, os.str());
  } else {
    std::cout << os.str();
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-camera voxel occupancy pipeline: scene generation, forward passes, "
               "benchmarks, gradient checks, FLOPs reports, and evaluation"};
  app.require_subcommand(1);

  CommonOpts opts;
  int gradcheck_rounds = 20;
  std::string eval_pred, eval_gt;
  int64_t eval_classes = 0;

  auto add_common = [&opts](CLI::App* cmd, bool needs_config) {
    auto* conf = cmd->add_option("--config", opts.config_path, "JSON run config path");
    if (needs_config) conf->required();
    cmd->add_option("--out", opts.out, "output directory or file");
    cmd->add_option("--format", opts.format, "table format: csv or markdown");
    cmd->add_option("--repeats", opts.repeats, "benchmark repeats (overrides config)");
    cmd->add_option("--seed", opts.seed, "seed override");
    cmd->add_flag("--parallel", opts.parallel, "enable kernel-internal parallelism");
  };

  CLI::App* gen = app.add_subcommand("gen-scene", "generate a synthetic scene and renders");
  add_common(gen, true);
  CLI::App* fwd = app.add_subcommand("forward", "run the pipeline on a generated scene");
  add_common(fwd, true);
  CLI::App* bench = app.add_subcommand("bench", "benchmark the 2D-collapsed vs 3D FCN heads");
  add_common(bench, true);
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common(grad, true);
  grad->add_option("--rounds", gradcheck_rounds, "randomized rounds per op");
  CLI::App* eval = app.add_subcommand("eval", "per-class IoU between two label volumes");
  eval->add_option("--pred", eval_pred, "predicted labels (.occt)")->required();
  eval->add_option("--gt", eval_gt, "ground-truth labels (.occt)")->required();
  eval->add_option("--classes", eval_classes, "class count M incl. empty")->required();
  eval->add_option("--format", opts.format, "table format: csv or markdown");
  CLI::App* flops = app.add_subcommand("flops", "analytic FLOPs table");
  add_common(flops, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_gen_scene(opts);
    if (fwd->parsed()) return cmd_forward(opts);
    if (bench->parsed()) return cmd_bench(opts);
    if (grad->parsed()) return cmd_gradcheck(opts, gradcheck_rounds);
    if (eval->parsed()) return cmd_eval(eval_pred, eval_gt, eval_classes, opts.format);
    if (flops->parsed()) return cmd_flops(opts);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
