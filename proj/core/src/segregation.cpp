#include "reem/segregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "reem/errors.hpp"
#include "reem/geo.hpp"
#include "reem/rng.hpp"

namespace reem {

RacialComposition visitor_composition(const std::vector<VisitRecord>& visits,
                                      const std::vector<CbgDemographics>& cbgs,
                                      const std::string& poi_id) {
  std::map<std::string, const CbgDemographics*> by_id;
  for (const CbgDemographics& c : cbgs) by_id.emplace(c.cbg_id, &c);

  RacialComposition::Shares weighted{};
  double total = 0.0;
  for (const VisitRecord& v : visits) {
    if (v.poi_id != poi_id) continue;
    auto it = by_id.find(v.cbg_id);
    if (it == by_id.end()) {
      throw ValidationError("visit for poi '" + poi_id +
                            "' references unknown cbg '" + v.cbg_id + "'");
    }
    const double w = static_cast<double>(v.visit_count);
    for (std::size_t q = 0; q < kGroupCount; ++q) {
      weighted[q] += w * it->second->composition[q];
    }
    total += w;
  }
  if (!(total > 0.0)) {
    throw ValidationError("poi '" + poi_id +
                          "' has zero total visits; no label can be derived");
  }
  for (double& w : weighted) w /= total;
  return RacialComposition::from_shares(weighted);
}

RacialComposition city_composition(const std::vector<CbgDemographics>& cbgs) {
  if (cbgs.empty()) {
    throw ValidationError("city composition requires at least one cbg");
  }
  RacialComposition::Shares weighted{};
  double total = 0.0;
  for (const CbgDemographics& c : cbgs) {
    const double pop = static_cast<double>(c.population);
    for (std::size_t q = 0; q < kGroupCount; ++q) {
      weighted[q] += pop * c.composition[q];
    }
    total += pop;
  }
  if (!(total > 0.0)) {
    throw ValidationError("city composition requires positive total population");
  }
  for (double& w : weighted) w /= total;
  return RacialComposition::from_shares(weighted);
}

IndexResult segregation_index(const RacialComposition& tau,
                              const RacialComposition& city,
                              KNormalization mode) {
  double k = 0.5;
  if (mode == KNormalization::Tight) {
    double denom = 1.0 - city.min_share();
    if (denom <= 0.0) {
      // Unreachable for a valid 5-group composition; kept as a guard.
      denom = 1.0 - city.second_min_share();
    }
    if (denom <= 0.0) {
      throw ValidationError("degenerate city composition: no group share < 1");
    }
    k = 1.0 / (2.0 * denom);
  }
  IndexResult out;
  out.k = k;
  out.value = k * tau.total_deviation(city);
  return out;
}

PopulationFeature population_feature(const PoiRecord& poi,
                                     const std::vector<CbgDemographics>& cbgs,
                                     double radius_m) {
  if (cbgs.empty()) {
    throw ValidationError("population feature requires at least one cbg");
  }
  RacialComposition::Shares weighted{};
  double total = 0.0;
  const CbgDemographics* nearest = nullptr;
  double nearest_dist = std::numeric_limits<double>::infinity();
  for (const CbgDemographics& c : cbgs) {
    const double d = haversine_meters(poi.location, c.centroid);
    if (d < nearest_dist) {
      nearest_dist = d;
      nearest = &c;
    }
    if (d > radius_m) continue;
    const double pop = static_cast<double>(c.population);
    for (std::size_t q = 0; q < kGroupCount; ++q) {
      weighted[q] += pop * c.composition[q];
    }
    total += pop;
  }
  PopulationFeature out;
  if (total > 0.0) {
    for (double& w : weighted) w /= total;
    out.composition = RacialComposition::from_shares(weighted);
    out.fallback = false;
  } else {
    out.composition = nearest->composition;
    out.fallback = true;
  }
  return out;
}

LabelingResult label_corpus(const Corpus& corpus, KNormalization mode,
                            const std::optional<std::string>& month_from,
                            const std::optional<std::string>& month_to) {
  // YYYY-MM strings order lexicographically, so the window is a string range.
  std::vector<VisitRecord> window;
  window.reserve(corpus.visits.size());
  for (const VisitRecord& v : corpus.visits) {
    if (month_from && v.month < *month_from) continue;
    if (month_to && v.month > *month_to) continue;
    window.push_back(v);
  }

  LabelingResult out;
  out.city = city_composition(corpus.cbgs);

  std::vector<std::string> visited_ids;
  for (const VisitRecord& v : window) visited_ids.push_back(v.poi_id);
  std::sort(visited_ids.begin(), visited_ids.end());
  visited_ids.erase(std::unique(visited_ids.begin(), visited_ids.end()),
                    visited_ids.end());

  for (const std::string& poi_id : visited_ids) {
    if (!corpus.find_poi(poi_id)) continue;
    SegregationLabel label;
    label.poi_id = poi_id;
    label.visitor_composition =
        visitor_composition(window, corpus.cbgs, poi_id);
    const IndexResult idx =
        segregation_index(label.visitor_composition, out.city, mode);
    label.value = idx.value;
    label.k_used = idx.k;
    out.labels.push_back(std::move(label));
  }
  return out;
}

namespace {

// Assigns each POI to the CBG whose centroid is nearest; ties go to the
// lexicographically smaller cbg_id because the corpus keeps cbgs sorted.
const CbgDemographics* nearest_cbg(const PoiRecord& poi,
                                   const std::vector<CbgDemographics>& cbgs) {
  const CbgDemographics* best = nullptr;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const CbgDemographics& c : cbgs) {
    const double d = haversine_meters(poi.location, c.centroid);
    if (d < best_dist) {
      best_dist = d;
      best = &c;
    }
  }
  return best;
}

std::optional<double> feature_value(const Corpus& corpus,
                                    const PoiContent& content,
                                    CovFeature feature) {
  switch (feature) {
    case CovFeature::Stars:
      return content.poi.stars;
    case CovFeature::Price: {
      auto it = content.poi.attributes.find("price");
      if (it == content.poi.attributes.end()) return std::nullopt;
      try {
        return std::stod(it->second);
      } catch (const std::exception&) {
        return std::nullopt;
      }
    }
    case CovFeature::Label: {
      const SegregationLabel* label = corpus.find_label(content.poi.poi_id);
      if (!label) return std::nullopt;
      return label->value;
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<CbgCov> cov_by_cbg(const Corpus& corpus, CovFeature feature) {
  std::map<std::string, std::vector<double>> values_by_cbg;
  for (const PoiContent& content : corpus.pois) {
    const std::optional<double> value = feature_value(corpus, content, feature);
    if (!value) continue;
    const CbgDemographics* cbg = nearest_cbg(content.poi, corpus.cbgs);
    if (!cbg) continue;
    values_by_cbg[cbg->cbg_id].push_back(*value);
  }

  std::vector<CbgCov> out;
  for (const auto& [cbg_id, values] : values_by_cbg) {
    if (values.size() < 3) continue;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (mean == 0.0) continue;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sample_std =
        std::sqrt(ss / static_cast<double>(values.size() - 1));
    out.push_back(CbgCov{cbg_id, sample_std / mean, values.size()});
  }
  return out;
}

DatasetSplit split_dataset(const std::vector<std::string>& poi_ids,
                           const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
  double ratio_sum = ratios[0] + ratios[1] + ratios[2];
  if (std::fabs(ratio_sum - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
  if (poi_ids.size() < 3) {
    throw ValidationError("split requires at least 3 ids");
  }

  std::vector<std::string> ids = poi_ids;
  std::sort(ids.begin(), ids.end());
  DetRng rng(seed);
  rng.shuffle(ids);

  const std::size_t n = ids.size();
  const std::size_t n_val =
      static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n)));
  const std::size_t n_test =
      static_cast<std::size_t>(std::floor(ratios[2] * static_cast<double>(n)));
  const std::size_t n_train = n - n_val - n_test;

  DatasetSplit split;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.test.assign(ids.begin() + n_train + n_val, ids.end());
  return split;
}

}  // namespace reem
