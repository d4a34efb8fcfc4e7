#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bevocc/geometry.hpp"
#include "bevocc/nn.hpp"
#include "bevocc/tensor.hpp"
#include "bevocc/view_transform.hpp"

namespace bevocc {

// Channel widths and layer shapes feeding both the runtime head and the
// analytic FLOPs model.
struct HeadConfig {
  int64_t c1 = 0;           // image feature channels
  int64_t c2 = 0;           // lifted voxel channels
  int64_t c3 = 0;           // decoded BEV channels
  int64_t num_classes = 0;  // M, including the empty class
  std::array<int64_t, 3> grid{};  // fine [H, W, Z]; all even
  std::vector<int64_t> decoder_widths;  // one width per residual stage
  int64_t kernel = 3;
  int64_t conv3d_layers = 3;   // depth of the comparison 3D FCN
  int64_t fused_channels = 0;  // C_out of the fused volume; 0 means c3

  void validate() const;
  int64_t collapsed_channels() const { return c2 * (grid[2] / 2); }
  int64_t fused_out() const { return fused_channels > 0 ? fused_channels : c3; }
};

// Basic residual stage: two kxk convs with a skip. Stages after the first
// run at stride 2 and carry a 1x1 projection on the skip path.
struct ResidualStage {
  Conv2dParams conv_a;
  Conv2dParams conv_b;
  std::optional<Conv2dParams> proj;
};

struct BevDecoderWeights {
  Conv2dParams stem;
  std::vector<ResidualStage> stages;
  std::vector<Conv2dParams> laterals;  // 1x1 to c3, one per stage
};

struct BevSegWeights {
  Conv2dParams conv;        // kxk, c3 -> c3
  Conv2dParams classifier;  // 1x1, c3 -> M
};

struct FuseWeights {
  Conv3dParams fuse;        // 1x1x1, (c3 + c1) -> fused_out
  Conv3dParams classifier;  // 1x1x1, fused_out -> M
};

struct Head3dWeights {
  std::vector<Conv3dParams> layers;  // kxkxk, c2 -> c2
  Conv3dParams classifier;           // 1x1x1, c2 -> M
};

struct PipelineWeights {
  BevDecoderWeights decoder;
  BevSegWeights seg;
  FuseWeights fuse;
  Head3dWeights head3d;
};

PipelineWeights make_zero_weights(const HeadConfig& cfg);
PipelineWeights make_random_weights(const HeadConfig& cfg, uint64_t seed);

// Flat named view over every weight/bias tensor, used by the manifest I/O.
std::vector<std::pair<std::string, Tensor*>> named_tensors(PipelineWeights& w);

// Folds z into channels: [C2, H/2, W/2, Z/2] -> [(C2*Z/2), H/2, W/2] with
// collapsed channel index c*(Z/2) + z. Exactly invertible.
Tensor bev_collapse(const Tensor& vb);
Tensor bev_uncollapse(const Tensor& bev, int64_t channels);

// 2D FCN: stem conv, residual stages (downsampling past the first), then a
// top-down 1x1 lateral + upsample2x + add merge back to input scale at c3.
Tensor bev_decode(const Tensor& bprime, const BevDecoderWeights& w);

struct InterpolatedVolume {
  Tensor features;  // [C1, H, W, Z]; exactly zero where observed == 0
  Tensor observed;  // [H, W, Z], number of cameras that observe each voxel
};

// Projects every fine-grid voxel center into every camera and bilinearly
// samples valid hits; per voxel the mean over observing cameras.
InterpolatedVolume interp_sample(const std::vector<Tensor>& features, const CameraRig& rig,
                                 const VoxelGridSpec& spec);

// Gradient with respect to the per-camera feature maps.
std::vector<Tensor> interp_sample_backward(const std::vector<Tensor>& features,
                                           const CameraRig& rig, const VoxelGridSpec& spec,
                                           const Tensor& grad_out);

struct FusedVolume {
  Tensor features;  // V, [fused_out, H, W, Z]
  Tensor logits;    // Y, [M, H, W, Z]
};

// B -> upsample2x -> repeat_z, concat with P, pointwise fuse conv, then the
// pointwise classifier.
FusedVolume integrate(const Tensor& bev, const InterpolatedVolume& p, const FuseWeights& w);

// kxk conv + ReLU + 1x1 conv to per-class BEV logits (multi-label, no softmax).
Tensor bev_seg_head(const Tensor& bev, const BevSegWeights& w);

struct BevSegGrads {
  Tensor input;
  Conv2dGrads conv;
  Conv2dGrads classifier;
};
BevSegGrads bev_seg_head_backward(const Tensor& bev, const BevSegWeights& w,
                                  const Tensor& grad_logits);

// Comparison head: nearest-neighbor upsample of V_B to the fine grid, then
// kxkxk conv + ReLU layers and a pointwise classifier. Forward only.
Tensor head_3dfcn(const Tensor& vb, const Head3dWeights& w);

struct ForwardResult {
  Tensor logits;      // [M, H, W, Z]
  Tensor bev_logits;  // [M, H/2, W/2]
};

// Full composition: lift -> voxel_pool -> bev_collapse -> bev_decode ->
// {bev_seg_head, integrate(interp_sample(...))}.
ForwardResult forward_pipeline(const std::vector<Tensor>& features, const CameraRig& rig,
                               const std::vector<Tensor>& depth_logits,
                               const std::vector<Tensor>& context, const VoxelGridSpec& grid,
                               const DepthBinSpec& bins, const HeadConfig& cfg,
                               const PipelineWeights& w);

// Conv layer shapes of each head path, for the analytic FLOPs model.
struct ConvLayerInfo {
  std::string name;
  bool is_3d = false;
  int64_t c_in = 0;
  int64_t c_out = 0;
  int64_t k = 1;
  int64_t out_h = 0;
  int64_t out_w = 0;
  int64_t out_z = 1;  // 1 for 2D layers
};

std::vector<ConvLayerInfo> decoder_conv_layers(const HeadConfig& cfg);
std::vector<ConvLayerInfo> seg_head_conv_layers(const HeadConfig& cfg);
std::vector<ConvLayerInfo> fuse_conv_layers(const HeadConfig& cfg);
std::vector<ConvLayerInfo> head3d_conv_layers(const HeadConfig& cfg);

}  // namespace bevocc
