#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "reem/coder/codebook.hpp"
#include "reem/coder/insight.hpp"
#include "reem/composition.hpp"
#include "reem/corpus.hpp"
#include "reem/llm/gateway.hpp"
#include "reem/llm/templates.hpp"

namespace reem::coder {

/// POIs sharing one thresholded gap sign pattern (e.g. "+-00-").
struct Stratum {
  std::string key;
  std::vector<std::string> members;
};

/// Groups POIs by the sign pattern of their gap deltas (|δ| < threshold
/// maps to '0'). Only non-empty strata are returned, sorted by key.
std::vector<Stratum> stratify_pois(
    const std::map<std::string, DemographicGap>& gaps,
    double threshold = 0.01);

/// Proportional allocation over strata with at least one POI per stratum
/// where feasible, capped by stratum size; total = min(n, population).
/// Deterministic in the seed.
std::vector<std::string> sample_coding_subset(const std::vector<Stratum>& strata,
                                              std::size_t n,
                                              std::uint64_t seed);

struct CoderConfig {
  std::size_t sample_size = 190;
  std::uint64_t seed = 20240601;
  /// |δ| below this counts as no signal, both for stratification and for
  /// checking insight polarity against the gap.
  double gap_threshold = 0.01;
  /// Radius for the nearby-resident composition the gap is measured against.
  double gap_radius_m = 1000.0;
  std::size_t min_insights = 3;
  std::size_t max_insights = 8;
  std::size_t max_codes = 20;
  /// Number of Phase-2 insight subsets; 0 means ceil(sample / 30).
  std::size_t subset_count = 0;
  std::size_t review_char_budget = 12000;
  /// Recorded in provenance; defaults to the gateway's provider id.
  std::string model_name;
  /// When set, insights.jsonl and codebook.json are written here.
  std::filesystem::path output_dir;
};

struct ReflectionResult {
  std::vector<Insight> kept;
  std::size_t dropped_inconsistent = 0;
};

struct CodingRun {
  Codebook codebook;
  std::vector<Insight> insights;  // kept after reflection, in coding order
  std::size_t dropped_inconsistent = 0;
  std::vector<Stratum> strata;
  std::vector<std::string> subset;
};

/// Two-phase reflective coding: per-POI insight generation refined against
/// observed gaps, then staged consolidation of candidate codes into a
/// codebook.
class ReflectiveCoder {
 public:
  ReflectiveCoder(std::shared_ptr<llm::ChatGateway> gateway,
                  std::shared_ptr<llm::TemplateStore> templates,
                  CoderConfig config = {});

  const CoderConfig& config() const { return config_; }
  const llm::ChatGateway& gateway() const { return *gateway_; }

  /// Runs name, review, and (when images exist) image analysis, then the
  /// synthesis prompt. Returns 3..max_insights insights; an overlong reply
  /// is truncated, an undersized one is an error.
  std::vector<Insight> generate_insights(const PoiContent& content);

  /// Asks the provider to keep only gap-consistent insights, then enforces
  /// the same rule post-parse: every (group, polarity) claim must agree in
  /// sign with the gap. Violators are dropped and counted. Never grows the
  /// input.
  ReflectionResult reflect_insights(const std::vector<Insight>& insights,
                                    const DemographicGap& gap);

  /// One candidate code per distinct perspective; names capped at 6 words,
  /// duplicates removed case-insensitively. Empty input short-circuits
  /// without a gateway call.
  std::vector<Code> extract_codes(const std::vector<Insight>& insights);

  /// Three staged calls: merge overlapping codes, drop poorly generalizing
  /// ones (count never increases), rewrite details. Output must satisfy
  /// codebook invariants or ConsolidationError is thrown. Empty candidates
  /// return `existing` unchanged without gateway calls.
  Codebook consolidate_codebook(const Codebook& existing,
                                const std::vector<Code>& candidates);

 private:
  std::string complete_text(const std::string& template_id,
                            const std::map<std::string, std::string>& values);

  std::shared_ptr<llm::ChatGateway> gateway_;
  std::shared_ptr<llm::TemplateStore> templates_;
  CoderConfig config_;
};

/// End-to-end coding over a labeled corpus: gap computation, stratification,
/// subset sampling, Phase 1 per POI, stratified partition into K subsets,
/// and Phase-2 consolidation. Stage errors are rethrown with the failing
/// poi_id. With a deterministic provider the result is a pure function of
/// (corpus, config, seed).
CodingRun run_reflective_coding(const Corpus& corpus, ReflectiveCoder& coder);

}  // namespace reem::coder
