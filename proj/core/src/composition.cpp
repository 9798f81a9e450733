#include "reem/composition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "reem/errors.hpp"

namespace reem {

namespace {
constexpr double kSumTolerance = 1e-9;
}

std::string_view group_name(Group g) {
  return kGroupNames[static_cast<std::size_t>(g)];
}

Group parse_group(std::string_view name) {
  for (std::size_t i = 0; i < kGroupCount; ++i) {
    if (kGroupNames[i] == name) return static_cast<Group>(i);
  }
  throw ValidationError("unknown group name: " + std::string(name));
}

RacialComposition RacialComposition::from_shares(const Shares& shares) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kGroupCount; ++i) {
    const double s = shares[i];
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      throw ValidationError("composition share out of [0,1] for group '" +
                            std::string(kGroupNames[i]) + "'");
    }
    sum += s;
  }
  if (std::fabs(sum - 1.0) > kSumTolerance) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", sum);
    throw ValidationError(std::string("composition shares sum to ") + buf +
                          ", expected 1");
  }
  return RacialComposition(shares);
}

RacialComposition RacialComposition::from_counts(const Shares& counts,
                                                 double total) {
  if (!(total > 0.0)) {
    throw ValidationError("composition requires a positive count total");
  }
  Shares shares{};
  for (std::size_t i = 0; i < kGroupCount; ++i) {
    if (counts[i] < 0.0) {
      throw ValidationError("negative count for group '" +
                            std::string(kGroupNames[i]) + "'");
    }
    shares[i] = counts[i] / total;
  }
  return from_shares(shares);
}

double RacialComposition::min_share() const {
  return *std::min_element(shares_.begin(), shares_.end());
}

double RacialComposition::second_min_share() const {
  Shares sorted = shares_;
  std::sort(sorted.begin(), sorted.end());
  return sorted[1];
}

double RacialComposition::total_deviation(
    const RacialComposition& other) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < kGroupCount; ++i) {
    sum += std::fabs(shares_[i] - other.shares_[i]);
  }
  return sum;
}

bool RacialComposition::almost_equal(const RacialComposition& other,
                                     double tol) const {
  for (std::size_t i = 0; i < kGroupCount; ++i) {
    if (std::fabs(shares_[i] - other.shares_[i]) > tol) return false;
  }
  return true;
}

std::string DemographicGap::sign_pattern(double threshold) const {
  std::string out;
  out.reserve(kGroupCount);
  for (double d : deltas) {
    if (std::fabs(d) < threshold) {
      out.push_back('0');
    } else {
      out.push_back(d > 0.0 ? '+' : '-');
    }
  }
  return out;
}

DemographicGap demographic_gap(const RacialComposition& tau,
                               const RacialComposition& p) {
  DemographicGap gap;
  for (std::size_t i = 0; i < kGroupCount; ++i) {
    gap.deltas[i] = tau[i] - p[i];
  }
  return gap;
}

}  // namespace reem
