#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reem/composition.hpp"
#include "reem/corpus.hpp"

namespace reem {

/// How the normalization constant k is chosen.
///   Tight: k = 1 / (2 * (1 - min_q T_q)), the tightest constant for which
///          the maximum attainable index is exactly 1.
///   Half:  k = 1/2, a loose bound kept for comparability.
enum class KNormalization { Tight, Half };

struct IndexResult {
  double value = 0.0;
  double k = 0.0;
};

/// Visit-weighted visitor composition of one POI: each visit contributes
/// its origin CBG's residential composition.
///
/// Throws ValidationError when the POI has zero total visits (no label can
/// be derived) or when a visit references an unknown CBG.
RacialComposition visitor_composition(const std::vector<VisitRecord>& visits,
                                      const std::vector<CbgDemographics>& cbgs,
                                      const std::string& poi_id);

/// Population-weighted mean of CBG compositions.
/// Throws ValidationError on an empty list or zero total population.
RacialComposition city_composition(const std::vector<CbgDemographics>& cbgs);

/// Normalized total deviation between visitor and city composition.
IndexResult segregation_index(const RacialComposition& tau,
                              const RacialComposition& city,
                              KNormalization mode = KNormalization::Tight);

struct PopulationFeature {
  RacialComposition composition =
      RacialComposition::from_shares({0.2, 0.2, 0.2, 0.2, 0.2});
  bool fallback = false;  // true when no centroid fell inside the radius
};

/// Population-weighted composition of CBGs whose centroid lies within
/// radius_m of the POI. Falls back to the nearest CBG (flagged) when the
/// radius is empty.
PopulationFeature population_feature(const PoiRecord& poi,
                                     const std::vector<CbgDemographics>& cbgs,
                                     double radius_m = 500.0);

/// Labels every POI that has at least one visit record. Returns labels
/// sorted by poi_id; also computes the city composition.
struct LabelingResult {
  std::vector<SegregationLabel> labels;
  RacialComposition city = RacialComposition::from_shares(
      {0.2, 0.2, 0.2, 0.2, 0.2});
};

LabelingResult label_corpus(const Corpus& corpus,
                            KNormalization mode = KNormalization::Tight,
                            const std::optional<std::string>& month_from = {},
                            const std::optional<std::string>& month_to = {});

/// Which per-POI scalar feeds the coefficient-of-variation analytics.
enum class CovFeature { Stars, Price, Label };

struct CbgCov {
  std::string cbg_id;
  double cov = 0.0;
  std::size_t poi_count = 0;
};

/// Per-CBG coefficient of variation (sample std / mean) of the selected
/// feature, over CBGs holding at least 3 POIs (nearest-centroid assignment).
/// CBGs whose feature mean is 0 are skipped.
std::vector<CbgCov> cov_by_cbg(const Corpus& corpus, CovFeature feature);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Deterministic 6:2:2-style split. Sizes are floor allocations with the
/// remainder assigned to train.
DatasetSplit split_dataset(const std::vector<std::string>& poi_ids,
                           const std::array<double, 3>& ratios,
                           std::uint64_t seed);

}  // namespace reem
