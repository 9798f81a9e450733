#include "reem/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "reem/rng.hpp"

namespace reem::nn {

GradCheckReport finite_difference_check(
    const std::function<double()>& loss,
    const std::function<void()>& compute_grads,
    const std::vector<ParamView>& params, const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tol;

  compute_grads();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const ParamView& p : params) analytic.push_back(*p.grad);

  DetRng rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const ParamView& p = params[pi];
    const std::size_t n = p.size();
    if (n == 0) continue;

    std::size_t want = static_cast<std::size_t>(
        std::ceil(options.sample_fraction * static_cast<double>(n)));
    want = std::max(want, options.min_per_array);
    want = std::min(want, options.max_per_array);
    want = std::min(want, n);

    DetRng stream = rng.fork(p.name);
    std::set<std::size_t> indices;
    while (indices.size() < want) {
      indices.insert(static_cast<std::size_t>(stream.below(n)));
    }

    for (std::size_t i : indices) {
      double& slot = (*p.value)[i];
      const double saved = slot;
      slot = saved + options.h;
      const double up = loss();
      slot = saved - options.h;
      const double down = loss();
      slot = saved;

      const double numeric = (up - down) / (2.0 * options.h);
      const double a = analytic[pi][i];
      const double rel =
          std::fabs(a - numeric) /
          std::max({1e-3, std::fabs(a), std::fabs(numeric)});
      ++report.entries_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name;
        report.worst_index = i;
      }
    }
  }

  report.pass = report.max_rel_error < options.tol;
  return report;
}

}  // namespace reem::nn
