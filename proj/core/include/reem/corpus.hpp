#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reem/composition.hpp"
#include "reem/geo.hpp"

namespace reem {

struct PoiRecord {
  std::string poi_id;
  std::string name;
  GeoPoint location;
  std::vector<std::string> categories;
  std::map<std::string, std::string> attributes;
  double stars = 0.0;  // [0, 5]
};

struct Review {
  std::string review_id;
  std::string poi_id;
  std::string timestamp;  // ISO-8601; lexicographic order == chronological
  std::string text;
  std::vector<std::string> image_refs;  // URLs or captions
};

struct PoiContent {
  PoiRecord poi;
  std::vector<Review> reviews;

  bool has_images() const;
};

struct CbgDemographics {
  std::string cbg_id;
  GeoPoint centroid;
  std::int64_t population = 0;
  // Per-group population counts are the stored source of truth; composition
  // is derived once so save/load round-trips byte-identically.
  RacialComposition::Shares group_counts{};
  RacialComposition composition = RacialComposition::from_shares(
      {0.2, 0.2, 0.2, 0.2, 0.2});
};

/// Builds a CbgDemographics from per-group counts, deriving and validating
/// the composition. Throws ValidationError when counts do not divide into a
/// valid composition.
CbgDemographics make_cbg(std::string cbg_id, GeoPoint centroid,
                         std::int64_t population,
                         const RacialComposition::Shares& group_counts);

struct VisitRecord {
  std::string poi_id;
  std::string cbg_id;
  std::string month;  // YYYY-MM
  std::int64_t visit_count = 0;
};

struct SegregationLabel {
  std::string poi_id;
  double value = 0.0;  // [0, 1]
  RacialComposition visitor_composition =
      RacialComposition::from_shares({0.2, 0.2, 0.2, 0.2, 0.2});
  double k_used = 0.0;
};

struct Corpus {
  std::vector<PoiContent> pois;            // sorted by poi_id
  std::vector<CbgDemographics> cbgs;       // sorted by cbg_id
  std::vector<VisitRecord> visits;         // sorted by (poi_id, cbg_id, month)
  std::vector<SegregationLabel> labels;    // sorted by poi_id
  RacialComposition city_composition =
      RacialComposition::from_shares({0.2, 0.2, 0.2, 0.2, 0.2});
  bool labeled = false;

  const PoiContent* find_poi(const std::string& poi_id) const;
  const CbgDemographics* find_cbg(const std::string& cbg_id) const;
  const SegregationLabel* find_label(const std::string& poi_id) const;

  std::vector<std::string> poi_ids() const;
};

struct IngestResult {
  Corpus corpus;
  std::size_t dropped_pois = 0;  // POIs below the review floor
};

/// Reads the four input files (pois.jsonl, reviews.jsonl, cbgs.csv,
/// visits.csv), validates every record, drops POIs with fewer than
/// `min_reviews` reviews, and returns the assembled corpus.
///
/// Throws IoError naming the file and line for malformed rows, and
/// ValidationError for dangling poi_id / cbg_id references.
IngestResult ingest_corpus(const std::filesystem::path& poi_path,
                           const std::filesystem::path& review_path,
                           const std::filesystem::path& cbg_path,
                           const std::filesystem::path& visit_path,
                           std::size_t min_reviews = 5);

/// Writes the corpus back out in the canonical on-disk form: pois.jsonl,
/// reviews.jsonl, cbgs.csv, visits.csv, and labels.csv when labeled.
/// Saving then loading then saving again is byte-identical.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Loads a corpus previously written by save_corpus.
Corpus load_corpus(const std::filesystem::path& dir,
                   std::size_t min_reviews = 5);

/// Writes labels.csv: poi_id,segregation,k_used,tau_hispanic,..,tau_others.
void save_labels(const std::vector<SegregationLabel>& labels,
                 const std::filesystem::path& path);

std::vector<SegregationLabel> load_labels(const std::filesystem::path& path);

}  // namespace reem
