#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bevocc {

struct GradCheckReport {
  std::string op;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

using ScalarFn = std::function<double(const std::vector<double>&)>;
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;

// Central finite differences (h = 1e-5 by default) against the analytic
// gradient. Relative error uses max(1, |analytic|, |numeric|) as the scale so
// near-zero components are judged absolutely.
GradCheckReport check_gradient(const std::string& op, const std::vector<double>& x0,
                               const ScalarFn& f, const GradFn& grad, double tol = 1e-6,
                               double h = 1e-5);

// The full finite-difference suite over every differentiable operation:
// conv2d (input, weight, bias), relu, bilinear interpolation sampling,
// voxel_pool, the BEV segmentation head path, and the seven loss terms.
// Each op runs `rounds` randomized instances; the report keeps the worst.
std::vector<GradCheckReport> run_gradient_suite(uint64_t seed, int rounds, double tol = 1e-6,
                                                double h = 1e-5);

}  // namespace bevocc
