#include "reem/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "reem/errors.hpp"

namespace reem {

MetricsRecord compute_metrics(const std::vector<double>& actual,
                              const std::vector<double>& predicted) {
  if (actual.empty()) throw ValidationError("cannot compute metrics of nothing");
  if (actual.size() != predicted.size()) {
    throw ValidationError("metric inputs disagree: " +
                          std::to_string(actual.size()) + " labels vs " +
                          std::to_string(predicted.size()) + " predictions");
  }
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (!std::isfinite(actual[i]) || !std::isfinite(predicted[i])) {
      throw ValidationError("metric inputs contain a non-finite value at index " +
                            std::to_string(i));
    }
  }

  const double n = static_cast<double>(actual.size());
  double mean = 0.0;
  for (double y : actual) mean += y;
  mean /= n;

  double ss_res = 0.0;
  double ss_tot = 0.0;
  double abs_err = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double err = predicted[i] - actual[i];
    ss_res += err * err;
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
    abs_err += std::abs(err);
  }

  MetricsRecord record;
  record.n = actual.size();
  record.mse = ss_res / n;
  record.rmse = std::sqrt(record.mse);
  record.mae = abs_err / n;
  if (ss_tot == 0.0) {
    record.r2 =
        ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  } else {
    record.r2 = 1.0 - ss_res / ss_tot;
  }
  return record;
}

}  // namespace reem
