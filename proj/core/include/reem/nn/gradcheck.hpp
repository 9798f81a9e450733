#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "reem/nn/tensor.hpp"

namespace reem::nn {

struct GradCheckReport {
  bool pass = false;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
  double tolerance = 0.0;
};

struct GradCheckOptions {
  double h = 1e-6;
  double tol = 1e-4;
  double sample_fraction = 0.01;
  std::size_t min_per_array = 10;   // but never more than the array holds
  std::size_t max_per_array = 200;
  std::uint64_t seed = 20240601;
};

/// Central-difference verification of analytic gradients.
///
/// `loss` recomputes the scalar loss from the parameters' current values;
/// `compute_grads` zeroes and refills every view's gradient buffer. Each
/// array is spot-checked on a deterministic random subset of entries so the
/// check stays fast on large stacks. Relative error uses
/// |a − n| / max(1e-3, |a|, |n|).
GradCheckReport finite_difference_check(const std::function<double()>& loss,
                                        const std::function<void()>& compute_grads,
                                        const std::vector<ParamView>& params,
                                        const GradCheckOptions& options = {});

}  // namespace reem::nn
