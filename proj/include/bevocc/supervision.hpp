#pragma once

#include <cstdint>

#include "bevocc/tensor.hpp"

namespace bevocc {

// A scalar loss together with its exact analytic gradient with respect to
// the logits argument.
struct LossResult {
  double value = 0.0;
  Tensor grad;
};

// Multi-hot BEV ground truth [M, H, W] from a label volume [H, W, Z]:
// bit m of column (x, y) is set iff some voxel in the column has label m.
// The empty class participates like any other label.
Tensor bev_gt_from_occ(const Tensor& labels, int64_t num_classes);

// Logical-OR pooling over 2x2 blocks, [M, H, W] -> [M, H/2, W/2]. Aligns the
// BEV ground truth with the decoded half-resolution plane.
Tensor or_pool2x2(const Tensor& bev_gt);

// Mean over non-ignored voxels of -(1 - p_t)^gamma * log(p_t) with p from
// channel_softmax and uniform class weights. All voxels ignored -> 0.
LossResult focal_loss(const Tensor& logits, const Tensor& labels, double gamma,
                      int64_t ignore_id = -1);

// 1 - mean over classes of (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps).
LossResult dice_loss(const Tensor& logits, const Tensor& labels, double eps = 1e-6);

// Lovasz extension of the per-class Jaccard loss, averaged over classes
// present in the (non-ignored) labels. No present classes -> 0.
LossResult lovasz_softmax(const Tensor& logits, const Tensor& labels, int64_t ignore_id = -1);

struct AffinityResult {
  LossResult sem;
  LossResult geo;
};

// Scene-class affinity losses: per class, -(log precision + log recall +
// log specificity) of the soft mask. `sem` averages semantic classes (m >= 1)
// present in the labels; `geo` applies the same to occupied-vs-empty with
// p_occupied = 1 - p_empty. Classes with a degenerate denominator are
// skipped from the average.
AffinityResult affinity_losses(const Tensor& logits, const Tensor& labels);

// Mean cross-entropy over valid pixels between softmax(depth_logits) and
// the one-hot bin targets. Zero valid pixels -> 0.
LossResult depth_loss(const Tensor& depth_logits, const Tensor& targets, const Tensor& valid);

// Mean binary cross-entropy with logits against the {0,1} BEV ground truth,
// computed in the stable log-sum-exp form.
LossResult bev_bce(const Tensor& bev_logits, const Tensor& bev_gt);

// The full loss stack; the total is the unweighted sum of the seven terms.
struct LossBreakdown {
  double focal = 0.0;
  double sem = 0.0;
  double geo = 0.0;
  double dice = 0.0;
  double lovasz = 0.0;
  double depth = 0.0;
  double bev = 0.0;

  double total() const { return focal + sem + geo + dice + lovasz + depth + bev; }
};

}  // namespace bevocc
