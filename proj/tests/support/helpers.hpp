#pragma once

#include <cmath>
#include <vector>

#include "bevocc/rng.hpp"
#include "bevocc/tensor.hpp"

namespace bevocc::testsupport {

inline Tensor random_tensor(SplitMix64& rng, const std::vector<int64_t>& dims, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t{dims};
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_labels(SplitMix64& rng, const std::vector<int64_t>& dims, int64_t classes) {
  Tensor t{dims};
  for (int64_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<double>(rng.uniform_int(0, classes - 1));
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) return false;
  for (int64_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace bevocc::testsupport
