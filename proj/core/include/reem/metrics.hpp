#pragma once

#include <cstddef>
#include <vector>

namespace reem {

/// Regression metrics over one evaluation set.
struct MetricsRecord {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
};

/// Standard definitions with R² = 1 − SS_res/SS_tot. When the labels have
/// zero variance, R² is 1 for an exact fit and -infinity otherwise; the
/// degenerate case is reported rather than silently dropped. Throws
/// ValidationError on empty, mismatched, or non-finite inputs.
MetricsRecord compute_metrics(const std::vector<double>& actual,
                              const std::vector<double>& predicted);

}  // namespace reem
