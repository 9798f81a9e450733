#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "reem/coder/codebook.hpp"
#include "reem/coder/insight.hpp"
#include "reem/coder/reflective_coder.hpp"
#include "reem/composition.hpp"
#include "reem/corpus.hpp"
#include "reem/digest.hpp"
#include "reem/errors.hpp"
#include "reem/llm/gateway.hpp"
#include "reem/llm/providers.hpp"
#include "reem/llm/schemas.hpp"
#include "reem/llm/templates.hpp"
#include "reem/segregation.hpp"
#include "test_util.hpp"

namespace {

using namespace reem;
using coder::Codebook;
using coder::CoderConfig;
using coder::CodingRun;
using coder::ReflectiveCoder;

const std::filesystem::path kDataDir{REEM_DATA_DIR};

/// Offline stand-in that answers every prompt from a small fixed lexicon of
/// visit-driver themes, reading gaps and insights back out of the prompts it
/// receives. Deterministic, so whole coding runs are reproducible.
class LexiconProvider : public llm::ChatProvider {
 public:
  std::string provider_id() const override { return "lexicon"; }

  std::string complete(const llm::ChatRequest& request) override {
    const std::string& id = request.template_id;
    if (id == "name_analysis_v1") return "The name signals a distinct niche.";
    if (id == "review_analysis_v1") {
      return "Reviews discuss prices, service, and atmosphere.";
    }
    if (id == "image_analysis_v1") return "Photos show the storefront.";
    if (id == "insight_synthesis_v1") return synthesize(request.rendered_prompt);
    if (id == "insight_reflection_v1") return reflect(request.rendered_prompt);
    if (id == "code_extraction_v1") return extract(request.rendered_prompt);
    if (id == "code_merge_v1") return merge(request.rendered_prompt);
    if (id == "code_quality_v1") return echo_codes(request.rendered_prompt);
    if (id == "code_refine_v1") return refine(request.rendered_prompt);
    throw TransportError("unexpected template '" + id + "'");
  }

 private:
  struct Theme {
    const char* name;
    const char* first;
    const char* second;
  };
  static constexpr std::array<Theme, 9> kThemes{{
      {"Cultural Resonance", "hispanic", "white"},
      {"Price Sensitivity", "black", "white"},
      {"Service Quality", "asian", "black"},
      {"Atmosphere and Social Environment", "white", "hispanic"},
      {"Accessibility and Convenience", "black", "asian"},
      {"Visual Appeal", "asian", "white"},
      {"Cultural Inclusivity", "hispanic", "black"},
      {"Product Variety", "white", "asian"},
      {"Community Engagement", "hispanic", "asian"},
  }};

  std::string synthesize(const std::string& prompt) const {
    const std::uint64_t h = fnv1a64(prompt);
    nlohmann::json arr = nlohmann::json::array();
    for (std::uint64_t i = 0; i < 4; ++i) {
      const Theme& theme = kThemes[(h + i) % kThemes.size()];
      nlohmann::json groups = nlohmann::json::object();
      groups[theme.first] = "attract";
      groups[theme.second] = "attract";
      nlohmann::json item;
      item["text"] = std::string("Signal: ") + theme.name + ".";
      item["groups"] = groups;
      arr.push_back(std::move(item));
    }
    return arr.dump();
  }

  // Repairs each claim's polarity to match the observed gap and drops
  // claims about flat gaps, exactly what the reflection prompt asks for.
  std::string reflect(const std::string& prompt) const {
    std::map<std::string, double> gap;
    std::istringstream lines(prompt);
    std::string line;
    while (std::getline(lines, line)) {
      const std::size_t colon = line.find(": ");
      if (colon == std::string::npos) continue;
      const std::string key = line.substr(0, colon);
      const std::string value = line.substr(colon + 2);
      if (std::find(kGroupNames.begin(), kGroupNames.end(), key) !=
              kGroupNames.end() &&
          !value.empty() && (value[0] == '+' || value[0] == '-')) {
        gap[key] = std::stod(value);
      }
    }
    nlohmann::json out = nlohmann::json::array();
    for (const nlohmann::json& item : llm::extract_json(prompt)) {
      nlohmann::json groups = nlohmann::json::object();
      for (const auto& [group, polarity] : item.at("groups").items()) {
        (void)polarity;
        const double delta = gap.count(group) ? gap.at(group) : 0.0;
        if (delta > 0.01) {
          groups[group] = "attract";
        } else if (delta < -0.01) {
          groups[group] = "repel";
        }
      }
      if (!groups.empty()) {
        nlohmann::json kept;
        kept["text"] = item.at("text");
        kept["groups"] = std::move(groups);
        out.push_back(std::move(kept));
      }
    }
    return out.dump();
  }

  // Insight texts carry their theme verbatim ("Signal: <theme>."), so the
  // candidate code for an insight is just that theme.
  std::string extract(const std::string& prompt) const {
    nlohmann::json out = nlohmann::json::array();
    std::set<std::string> seen;
    for (const nlohmann::json& item : llm::extract_json(prompt)) {
      const std::string text = item.at("text").get<std::string>();
      const std::string name = text.substr(8, text.size() - 9);
      if (seen.insert(name).second) {
        out.push_back({{"name", name}, {"detail", "Recurs across places."}});
      }
    }
    return out.dump();
  }

  static std::vector<std::pair<std::string, std::string>> numbered_lines(
      const std::string& prompt) {
    std::vector<std::pair<std::string, std::string>> codes;
    std::istringstream lines(prompt);
    std::string line;
    while (std::getline(lines, line)) {
      std::size_t pos = 0;
      while (pos < line.size() && std::isdigit(static_cast<unsigned char>(
                                      line[pos]))) {
        ++pos;
      }
      if (pos == 0 || pos + 1 >= line.size() || line[pos] != '.' ||
          line[pos + 1] != ' ') {
        continue;
      }
      const std::string body = line.substr(pos + 2);
      const std::size_t colon = body.find(": ");
      if (colon == std::string::npos) {
        codes.emplace_back(body, "");
      } else {
        codes.emplace_back(body.substr(0, colon), body.substr(colon + 2));
      }
    }
    return codes;
  }

  static std::string dump_codes(
      const std::vector<std::pair<std::string, std::string>>& codes) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [name, detail] : codes) {
      out.push_back({{"name", name}, {"detail", detail}});
    }
    return out.dump();
  }

  // Union by name, existing codebook first. Both sections of the merge
  // prompt render codes as numbered lines.
  std::string merge(const std::string& prompt) const {
    std::vector<std::pair<std::string, std::string>> merged;
    std::set<std::string> seen;
    for (auto& [name, detail] : numbered_lines(prompt)) {
      if (seen.insert(name).second) merged.emplace_back(name, detail);
    }
    return dump_codes(merged);
  }

  std::string echo_codes(const std::string& prompt) const {
    return dump_codes(numbered_lines(prompt));
  }

  std::string refine(const std::string& prompt) const {
    std::vector<std::pair<std::string, std::string>> codes =
        numbered_lines(prompt);
    for (auto& [name, detail] : codes) {
      std::string lowered = name;
      std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                     [](unsigned char c) {
                       return static_cast<char>(std::tolower(c));
                     });
      detail = "Covers " + lowered + " as a visit driver.";
    }
    return dump_codes(codes);
  }
};

/// A four-CBG city whose POIs each sit inside exactly one CBG, with visitor
/// compositions shifted off the local one in three fixed patterns, giving
/// three strata with decisive gaps.
Corpus build_city(std::size_t poi_count) {
  Corpus corpus;
  const std::array<RacialComposition::Shares, 4> comps{{
      {0.55, 0.15, 0.10, 0.15, 0.05},
      {0.15, 0.55, 0.10, 0.15, 0.05},
      {0.10, 0.15, 0.55, 0.15, 0.05},
      {0.10, 0.15, 0.10, 0.60, 0.05},
  }};
  for (std::size_t c = 0; c < comps.size(); ++c) {
    RacialComposition::Shares counts{};
    for (std::size_t g = 0; g < kGroupCount; ++g) {
      counts[g] = comps[c][g] * 1000.0;
    }
    corpus.cbgs.push_back(make_cbg(
        "cbg" + std::to_string(c),
        {33.40, -112.00 + 0.05 * static_cast<double>(c)}, 1000, counts));
  }
  corpus.city_composition = city_composition(corpus.cbgs);

  for (std::size_t i = 0; i < poi_count; ++i) {
    const std::string digits = std::to_string(i);
    const std::string poi_id =
        "p" + std::string(digits.size() < 2 ? 2 - digits.size() : 0, '0') +
        digits;
    const std::size_t c = i % comps.size();

    PoiContent content;
    content.poi.poi_id = poi_id;
    content.poi.name = "Place " + poi_id;
    content.poi.location = {33.401, -112.00 + 0.05 * static_cast<double>(c)};
    content.poi.categories = {"Restaurants"};
    content.poi.stars = 3.5;
    for (int r = 0; r < 5; ++r) {
      Review review;
      review.review_id = poi_id + "_r" + std::to_string(r);
      review.poi_id = poi_id;
      review.timestamp = "2023-0" + std::to_string(r + 1) + "-01T00:00:00";
      review.text = "Stop " + std::to_string(r) + " at " + poi_id + ".";
      content.reviews.push_back(std::move(review));
    }
    corpus.pois.push_back(std::move(content));

    RacialComposition::Shares tau = comps[c];
    switch (i % 3) {
      case 0:
        tau[0] += 0.10;
        tau[3] -= 0.10;
        break;
      case 1:
        tau[1] += 0.10;
        tau[0] -= 0.05;
        tau[2] -= 0.05;
        break;
      default:
        tau[2] += 0.08;
        tau[3] += 0.04;
        tau[0] -= 0.06;
        tau[1] -= 0.06;
        break;
    }
    SegregationLabel label;
    label.poi_id = poi_id;
    label.value = 0.5;
    label.k_used = 1.0;
    label.visitor_composition = RacialComposition::from_shares(tau);
    corpus.labels.push_back(std::move(label));
  }
  corpus.labeled = true;
  return corpus;
}

ReflectiveCoder lexicon_coder(CoderConfig config,
                              const std::filesystem::path& cache_dir = {}) {
  llm::ProviderConfig provider_config;
  provider_config.provider_id = "lexicon";
  auto gateway = std::make_shared<llm::ChatGateway>(
      std::make_shared<LexiconProvider>(), provider_config, cache_dir);
  auto templates =
      std::make_shared<llm::TemplateStore>(kDataDir / "prompts");
  return ReflectiveCoder(gateway, templates, std::move(config));
}

std::vector<std::string> sorted_names(const Codebook& book) {
  std::vector<std::string> names;
  for (const coder::Code& code : book.codes) names.push_back(code.name);
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

TEST_CASE("a full coding run over a small city") {
  const Corpus corpus = build_city(24);

  CoderConfig config;
  config.seed = 20240601;
  ReflectiveCoder coder = lexicon_coder(config);
  const CodingRun run = run_reflective_coding(corpus, coder);

  SUBCASE("stratification and sampling cover the city") {
    REQUIRE(run.strata.size() == 3);
    CHECK(run.strata[0].key == "+00-0");
    CHECK(run.strata[1].key == "-+-00");
    CHECK(run.strata[2].key == "--++0");
    for (const coder::Stratum& stratum : run.strata) {
      CHECK(stratum.members.size() == 8);
    }
    CHECK(run.subset.size() == 24);
    CHECK(run.subset.front() == "p00");
  }

  SUBCASE("the codebook lands in the expected size band") {
    CHECK(run.codebook.size() >= 5);
    CHECK(run.codebook.size() <= 12);
    CHECK_NOTHROW(run.codebook.validate());
    CHECK(run.codebook.provenance.model == "lexicon");
    CHECK(run.codebook.provenance.seed == 20240601);
    CHECK(run.codebook.provenance.subset_size == 24);
    CHECK(run.codebook.provenance.extra.at("strata") == 3.0);
  }

  SUBCASE("kept insights are consistent, nothing needed dropping") {
    // The reflection stand-in repairs polarities against the gap, so the
    // post-parse check never fires on this fixture.
    CHECK(run.dropped_inconsistent == 0);
    CHECK(!run.insights.empty());
    const std::set<std::string> sampled(run.subset.begin(), run.subset.end());
    for (const coder::Insight& insight : run.insights) {
      CHECK(sampled.count(insight.poi_id) == 1);
      CHECK(!insight.groups.empty());
    }
  }

  SUBCASE("reruns are bit-identical") {
    ReflectiveCoder again = lexicon_coder(config);
    const CodingRun rerun = run_reflective_coding(corpus, again);
    CHECK(rerun.codebook.to_json().dump() == run.codebook.to_json().dump());
    CHECK(coder::insights_to_json_text(rerun.insights) ==
          coder::insights_to_json_text(run.insights));
    CHECK(rerun.subset == run.subset);
    CHECK(rerun.dropped_inconsistent == run.dropped_inconsistent);
  }

  SUBCASE("one insight subset and several agree on the code set") {
    CoderConfig one = config;
    one.subset_count = 1;
    CoderConfig three = config;
    three.subset_count = 3;
    ReflectiveCoder coder_one = lexicon_coder(one);
    ReflectiveCoder coder_three = lexicon_coder(three);
    const CodingRun run_one = run_reflective_coding(corpus, coder_one);
    const CodingRun run_three = run_reflective_coding(corpus, coder_three);
    CHECK(run_one.codebook.provenance.extra.at("insight_subsets") == 1.0);
    CHECK(run_three.codebook.provenance.extra.at("insight_subsets") == 3.0);
    // The quality stand-in merges by name, so partitioning only reorders
    // the union; the resulting code set must not depend on it.
    CHECK(sorted_names(run_one.codebook) == sorted_names(run_three.codebook));
  }

  SUBCASE("artifacts are written and load back") {
    testutil::TempDir dir;
    CoderConfig persisted = config;
    persisted.output_dir = dir.path / "run";
    ReflectiveCoder writer = lexicon_coder(persisted, dir.path / "cache");
    const CodingRun wrote = run_reflective_coding(corpus, writer);
    const Codebook loaded =
        coder::load_codebook(persisted.output_dir / "codebook.json");
    CHECK(sorted_names(loaded) == sorted_names(wrote.codebook));
    const std::vector<coder::Insight> insights =
        coder::load_insights(persisted.output_dir / "insights.jsonl");
    CHECK(insights.size() == wrote.insights.size());
  }
}

TEST_CASE("coding run failures carry the failing poi") {
  const Corpus corpus = build_city(6);

  auto provider = std::make_shared<llm::ScriptedProvider>();
  provider->set_default("name_analysis_v1", "niche");
  provider->set_default("review_analysis_v1", "prices");
  provider->set_default("insight_synthesis_v1", "never json");

  llm::ProviderConfig provider_config;
  provider_config.provider_id = "scripted";
  auto gateway =
      std::make_shared<llm::ChatGateway>(provider, provider_config);
  auto templates =
      std::make_shared<llm::TemplateStore>(kDataDir / "prompts");
  ReflectiveCoder coder(gateway, templates, {});

  CHECK_THROWS_WITH_AS(run_reflective_coding(corpus, coder),
                       doctest::Contains("p00"), Error);
}

TEST_CASE("coding an unlabeled corpus is rejected") {
  Corpus corpus = build_city(6);
  corpus.labeled = false;
  ReflectiveCoder coder = lexicon_coder({});
  CHECK_THROWS_AS(run_reflective_coding(corpus, coder), ValidationError);
}
