#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace reem {

/// The five demographic groups, in the fixed order used by every persisted
/// artifact (labels, rating rows, feature vectors).
enum class Group : int { Hispanic = 0, Black = 1, Asian = 2, White = 3, Others = 4 };

inline constexpr std::size_t kGroupCount = 5;

inline constexpr std::array<std::string_view, kGroupCount> kGroupNames = {
    "hispanic", "black", "asian", "white", "others"};

std::string_view group_name(Group g);

/// Parses one of the five canonical group names. Throws ValidationError.
Group parse_group(std::string_view name);

/// A probability vector over the five groups. Immutable once constructed;
/// construction validates that each share is in [0, 1] and the shares sum
/// to 1 within 1e-9.
class RacialComposition {
 public:
  using Shares = std::array<double, kGroupCount>;

  /// Validating constructor from shares.
  static RacialComposition from_shares(const Shares& shares);

  /// From non-negative counts; divides by the given total. Throws if the
  /// derived shares do not form a valid composition (e.g. counts summing
  /// to 0.8 * total).
  static RacialComposition from_counts(const Shares& counts, double total);

  double share(Group g) const { return shares_[static_cast<std::size_t>(g)]; }
  double operator[](std::size_t i) const { return shares_[i]; }
  const Shares& shares() const { return shares_; }

  double min_share() const;
  double second_min_share() const;

  /// L1 distance between two compositions.
  double total_deviation(const RacialComposition& other) const;

  bool almost_equal(const RacialComposition& other, double tol = 1e-12) const;

 private:
  explicit RacialComposition(const Shares& shares) : shares_(shares) {}
  Shares shares_{};
};

/// Elementwise difference of two compositions. Deltas sum to 0 within 1e-9
/// by construction.
struct DemographicGap {
  std::array<double, kGroupCount> deltas{};

  double delta(Group g) const { return deltas[static_cast<std::size_t>(g)]; }

  /// Sign pattern with |delta| < threshold mapped to '0', e.g. "+-00-".
  std::string sign_pattern(double threshold) const;
};

DemographicGap demographic_gap(const RacialComposition& tau,
                               const RacialComposition& p);

}  // namespace reem
