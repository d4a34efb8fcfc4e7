#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevocc/geometry.hpp"
#include "bevocc/occupancy_head.hpp"
#include "bevocc/tensor.hpp"

namespace bevocc {

// One layer of the analytic FLOPs model. Only multiply-accumulates count;
// bias adds and activations are excluded.
struct FlopsLayerSpec {
  enum class Kind { conv2d, conv3d, interp };
  Kind kind = Kind::conv2d;
  int64_t c_in = 0;
  int64_t c_out = 0;
  int64_t k = 1;
  int64_t out_h = 0;
  int64_t out_w = 0;
  int64_t out_z = 1;       // conv3d only
  int64_t cameras = 0;     // interp only

  static FlopsLayerSpec conv2d_spec(int64_t c_in, int64_t c_out, int64_t k, int64_t h, int64_t w);
  static FlopsLayerSpec conv3d_spec(int64_t c_in, int64_t c_out, int64_t k, int64_t h, int64_t w,
                                    int64_t z);
  static FlopsLayerSpec interp_spec(int64_t cameras, int64_t c, int64_t h, int64_t w, int64_t z);
  static FlopsLayerSpec from_conv_layer(const ConvLayerInfo& info);
};

// C_in * k^3 * C_out * H * W * Z.
int64_t flops_conv3d(const FlopsLayerSpec& spec);
// C_in * k^2 * C_out * H * W.
int64_t flops_conv2d(const FlopsLayerSpec& spec);
// 4 * N * C * H * W * Z for bilinear sampling over N cameras.
int64_t flops_interp(int64_t cameras, int64_t c, int64_t h, int64_t w, int64_t z);
int64_t flops_interp(const FlopsLayerSpec& spec);

// FLOPs3D / FLOPs2D for a matched layer pair; equals k * Z exactly. The pair
// must agree on C_in, C_out, k, H, W.
int64_t speedup_ratio(const FlopsLayerSpec& spec3d, const FlopsLayerSpec& spec2d);

struct IouReport {
  std::vector<double> per_class;  // index m in [1, M); 0.0 when undefined
  std::vector<bool> defined;      // false when the class union is empty
  double mean = 0.0;              // over defined classes; 0 when none
  int64_t defined_classes = 0;
};

// Per-class intersection over union with the empty class (0) excluded.
// Classes with zero union are reported undefined and excluded from the mean.
IouReport miou(const Tensor& pred_labels, const Tensor& gt_labels, int64_t num_classes,
               const Tensor* ignore_mask = nullptr);

struct BenchStage {
  std::string name;
  int64_t flops = 0;
  double median_ms = 0.0;
  double p10_ms = 0.0;
  double p90_ms = 0.0;
};

struct BenchReport {
  std::vector<BenchStage> stages;
  int64_t repeats = 0;
  bool parallel = false;
  std::string config_echo;

  const BenchStage* find(const std::string& name) const;
};

// Times the collapsed-BEV 2D head path (bev_collapse + bev_decode +
// interp_sample + integrate) against the 3D FCN head on identical inputs.
// Median wall-clock of `repeats` runs after 2 untimed warmups, alongside the
// analytic FLOPs of each stage.
BenchReport bench_heads(const HeadConfig& cfg, const VoxelGridSpec& grid, const CameraRig& rig,
                        uint64_t seed, int64_t repeats);

// Times one callable the same way bench_heads times its stages (2 warmups,
// median/p10/p90 of `repeats` runs).
BenchStage time_stage(const std::string& name, int64_t flops, const std::function<void()>& fn,
                      int64_t repeats);

enum class TableFormat { csv, markdown };
TableFormat parse_table_format(const std::string& name);

// Deterministic column order: stage, flops, median_ms, p10_ms, p90_ms.
std::string emit_table(const BenchReport& report, TableFormat format);

}  // namespace bevocc
