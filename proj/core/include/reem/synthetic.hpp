#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "reem/corpus.hpp"
#include "reem/llm/chat.hpp"

namespace reem::synthetic {

/// One analysis dimension of the planted review language: a recoverable
/// code name plus one phrase signalling an exclusive leaning and one
/// signalling an inclusive leaning.
struct LexiconTheme {
  std::string code;
  std::string detail;
  std::string exclusive_phrase;
  std::string inclusive_phrase;
};

/// The fixed lexicon shared by the city generator and SimulatedProvider.
/// Phrases are unique across themes and never appear in filler text.
const std::vector<LexiconTheme>& lexicon();

struct CityOptions {
  std::string tag = "alpha";  // id prefix: <tag>-p0001, <tag>-cbg-00-00
  std::size_t poi_count = 120;
  std::size_t grid = 8;  // grid x grid block groups
  double base_lat = 39.90;
  double base_lon = -75.25;
  double cell_deg = 0.01;  // roughly 1.1 km cells
  std::size_t reviews_min = 6;
  std::size_t reviews_max = 12;
  double population_signal = 0.35;  // local-mix weight in the planted label
  double text_signal = 0.35;        // latent-trait weight in the planted label
  std::uint64_t seed = 20240601;

  void validate() const;
};

struct SyntheticCity {
  Corpus corpus;  // unlabeled; labels come from the labeling stage
  std::map<std::string, double> traits;  // poi_id -> latent exclusivity
};

/// Generates a city whose segregation labels, once derived from the visit
/// records, depend on two planted signals: the racial mix around each POI
/// and a latent exclusivity trait that also drives the review language.
/// Visits mix a citywide pool (mirroring the city composition) with a
/// donor block group skewed toward the locally rarest group; the donor
/// weight carries both signals.
SyntheticCity make_city(const CityOptions& options);

/// Offline chat provider playing the analyst over the shared lexicon. It
/// counts leaning phrases in the prompt (honoring `"phrase" xN` multiplier
/// quotes emitted by its own analyses) and answers every pipeline template
/// with well-formed replies. Replies are a pure function of the rendered
/// prompt, so cached and repeated runs are bit-identical.
class SimulatedProvider : public llm::ChatProvider {
 public:
  explicit SimulatedProvider(std::uint64_t seed = 20240601);

  std::string provider_id() const override;

  /// Throws TransportError for templates it has no script for.
  std::string complete(const llm::ChatRequest& request) override;

  int total_calls() const;

 private:
  std::uint64_t seed_;
  mutable std::mutex mutex_;
  int calls_ = 0;
};

}  // namespace reem::synthetic
