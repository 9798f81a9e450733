#include "reem/coder/reflective_coder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "reem/errors.hpp"
#include "reem/llm/prompt_render.hpp"
#include "reem/rng.hpp"
#include "reem/segregation.hpp"

namespace reem::coder {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// Collapses runs of whitespace and caps the name at `max_words` words.
std::string normalize_name(const std::string& raw, std::size_t max_words) {
  std::istringstream in(raw);
  std::string word;
  std::string out;
  std::size_t count = 0;
  while (count < max_words && in >> word) {
    if (!out.empty()) out += ' ';
    out += word;
    ++count;
  }
  return out;
}

/// Normalizes every candidate and removes case-insensitive duplicate names,
/// keeping the first occurrence. Entries left nameless are dropped.
std::vector<Code> normalize_codes(const std::vector<llm::ParsedCode>& parsed,
                                  std::size_t max_words) {
  std::vector<Code> out;
  std::set<std::string> seen;
  for (const llm::ParsedCode& p : parsed) {
    Code code;
    code.name = normalize_name(p.name, max_words);
    if (code.name.empty()) continue;
    if (!seen.insert(lower(code.name)).second) continue;
    code.detail = p.detail;
    out.push_back(std::move(code));
  }
  return out;
}

constexpr std::size_t kMaxNameWords = 6;

bool consistent_with_gap(const llm::ParsedInsight& insight,
                         const DemographicGap& gap, double threshold) {
  for (const auto& [group, polarity] : insight.groups) {
    const double delta = gap.delta(group);
    if (polarity == llm::Polarity::Attract && !(delta > threshold)) return false;
    if (polarity == llm::Polarity::Repel && !(delta < -threshold)) return false;
  }
  return true;
}

}  // namespace

std::vector<Stratum> stratify_pois(
    const std::map<std::string, DemographicGap>& gaps, double threshold) {
  if (gaps.empty()) throw ValidationError("no gaps to stratify");
  if (!(threshold >= 0.0)) {
    throw ValidationError("stratification threshold must be non-negative");
  }
  std::map<std::string, std::vector<std::string>> buckets;
  for (const auto& [poi_id, gap] : gaps) {
    buckets[gap.sign_pattern(threshold)].push_back(poi_id);
  }
  std::vector<Stratum> strata;
  strata.reserve(buckets.size());
  for (auto& [key, members] : buckets) {
    strata.push_back({key, std::move(members)});
  }
  return strata;
}

std::vector<std::string> sample_coding_subset(const std::vector<Stratum>& strata,
                                              std::size_t n,
                                              std::uint64_t seed) {
  if (strata.empty()) throw ValidationError("no strata to sample from");
  std::size_t total = 0;
  for (const Stratum& s : strata) {
    if (s.members.empty()) {
      throw ValidationError("stratum '" + s.key + "' is empty");
    }
    total += s.members.size();
  }
  if (n == 0) throw ValidationError("sample size must be positive");
  const std::size_t take = std::min(n, total);

  // Proportional quotas with a floor of one, capped by stratum size.
  const std::size_t count = strata.size();
  std::vector<double> ideal(count);
  std::vector<std::size_t> quota(count);
  std::size_t sum = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t size = strata[i].members.size();
    ideal[i] = static_cast<double>(take) * static_cast<double>(size) /
               static_cast<double>(total);
    quota[i] = std::min(size, std::max<std::size_t>(
                                  1, static_cast<std::size_t>(ideal[i])));
    sum += quota[i];
  }
  // Largest-remainder adjustment. Growth goes to the most under-served
  // stratum with headroom; shrinkage takes from the most over-served one,
  // dropping to zero only when there are more strata than slots.
  while (sum < take) {
    std::size_t best = count;
    for (std::size_t i = 0; i < count; ++i) {
      if (quota[i] >= strata[i].members.size()) continue;
      if (best == count || ideal[i] - static_cast<double>(quota[i]) >
                               ideal[best] - static_cast<double>(quota[best])) {
        best = i;
      }
    }
    ++quota[best];
    ++sum;
  }
  while (sum > take) {
    std::size_t best = count;
    bool best_above_floor = false;
    for (std::size_t i = 0; i < count; ++i) {
      if (quota[i] == 0) continue;
      const bool above_floor = quota[i] > 1;
      if (best == count || (above_floor && !best_above_floor)) {
        best = i;
        best_above_floor = above_floor;
        continue;
      }
      if (above_floor != best_above_floor) continue;
      const double excess_i = static_cast<double>(quota[i]) - ideal[i];
      const double excess_b = static_cast<double>(quota[best]) - ideal[best];
      if (excess_i > excess_b) {
        best = i;
        best_above_floor = above_floor;
      }
    }
    --quota[best];
    --sum;
  }

  const DetRng base(seed);
  std::vector<std::string> subset;
  subset.reserve(take);
  for (std::size_t i = 0; i < count; ++i) {
    if (quota[i] == 0) continue;
    std::vector<std::string> picks;
    if (quota[i] >= strata[i].members.size()) {
      picks = strata[i].members;
    } else {
      DetRng rng = base.fork(strata[i].key);
      picks = rng.sample(strata[i].members, quota[i]);
      std::sort(picks.begin(), picks.end());
    }
    subset.insert(subset.end(), picks.begin(), picks.end());
  }
  return subset;
}

ReflectiveCoder::ReflectiveCoder(std::shared_ptr<llm::ChatGateway> gateway,
                                 std::shared_ptr<llm::TemplateStore> templates,
                                 CoderConfig config)
    : gateway_(std::move(gateway)),
      templates_(std::move(templates)),
      config_(std::move(config)) {
  if (!gateway_) throw ValidationError("coder needs a gateway");
  if (!templates_) throw ValidationError("coder needs a template store");
  if (config_.min_insights < 1 || config_.max_insights < config_.min_insights) {
    throw ValidationError("insight bounds must satisfy 1 <= min <= max");
  }
  if (config_.max_codes < 1) {
    throw ValidationError("max_codes must be positive");
  }
  if (config_.sample_size < 1) {
    throw ValidationError("sample_size must be positive");
  }
  if (config_.review_char_budget < 1) {
    throw ValidationError("review_char_budget must be positive");
  }
  if (!(config_.gap_threshold >= 0.0)) {
    throw ValidationError("gap_threshold must be non-negative");
  }
}

std::string ReflectiveCoder::complete_text(
    const std::string& template_id,
    const std::map<std::string, std::string>& values) {
  llm::ChatRequest request;
  request.template_id = template_id;
  request.rendered_prompt = templates_->render(template_id, values);
  return gateway_->complete(request).text;
}

std::vector<Insight> ReflectiveCoder::generate_insights(
    const PoiContent& content) {
  const PoiRecord& poi = content.poi;
  if (content.reviews.empty()) {
    throw ValidationError("poi '" + poi.poi_id + "' has no reviews to analyze");
  }

  std::string categories;
  for (const std::string& c : poi.categories) {
    if (!categories.empty()) categories += ", ";
    categories += c;
  }
  if (categories.empty()) categories = "(none listed)";

  const std::string name_analysis = complete_text(
      "name_analysis_v1", {{"name", poi.name}, {"categories", categories}});

  const std::string review_analysis = complete_text(
      "review_analysis_v1",
      {{"name", poi.name},
       {"reviews", llm::render_reviews_recent_first(
                       content.reviews, config_.review_char_budget)}});

  std::string image_analysis = "(no photo material available)";
  if (content.has_images()) {
    std::vector<std::string> refs;
    for (const Review& review : content.reviews) {
      refs.insert(refs.end(), review.image_refs.begin(),
                  review.image_refs.end());
    }
    llm::ChatRequest request;
    request.template_id = "image_analysis_v1";
    request.rendered_prompt = templates_->render(
        "image_analysis_v1",
        {{"name", poi.name}, {"captions", llm::render_attachment_lines(refs)}});
    request.attachments = refs;
    image_analysis = gateway_->complete(request).text;
  }

  llm::ChatRequest synthesis;
  synthesis.template_id = "insight_synthesis_v1";
  synthesis.rendered_prompt =
      templates_->render("insight_synthesis_v1",
                         {{"name", poi.name},
                          {"name_analysis", name_analysis},
                          {"review_analysis", review_analysis},
                          {"image_analysis", image_analysis}});
  std::vector<llm::ParsedInsight> parsed =
      gateway_->complete_structured(synthesis, llm::SchemaId::InsightList)
          .insights();

  if (parsed.size() < config_.min_insights) {
    throw ValidationError(
        "synthesis produced " + std::to_string(parsed.size()) +
        " insights for poi '" + poi.poi_id + "'; at least " +
        std::to_string(config_.min_insights) + " are required");
  }
  if (parsed.size() > config_.max_insights) parsed.resize(config_.max_insights);

  std::vector<Insight> insights;
  insights.reserve(parsed.size());
  for (const llm::ParsedInsight& p : parsed) {
    insights.push_back(make_insight(poi.poi_id, p));
  }
  return insights;
}

ReflectionResult ReflectiveCoder::reflect_insights(
    const std::vector<Insight>& insights, const DemographicGap& gap) {
  ReflectionResult result;
  if (insights.empty()) return result;
  const std::string& poi_id = insights.front().poi_id;

  llm::ChatRequest request;
  request.template_id = "insight_reflection_v1";
  request.rendered_prompt = templates_->render(
      "insight_reflection_v1", {{"gap", llm::render_gap(gap)},
                                {"insights", insights_to_json_text(insights)}});
  std::vector<llm::ParsedInsight> parsed =
      gateway_->complete_structured(request, llm::SchemaId::InsightList)
          .insights();

  // Reflection may reword or drop but never invent; excess entries are cut.
  if (parsed.size() > insights.size()) parsed.resize(insights.size());

  for (const llm::ParsedInsight& p : parsed) {
    if (consistent_with_gap(p, gap, config_.gap_threshold)) {
      result.kept.push_back(make_insight(poi_id, p));
    } else {
      ++result.dropped_inconsistent;
    }
  }
  return result;
}

std::vector<Code> ReflectiveCoder::extract_codes(
    const std::vector<Insight>& insights) {
  if (insights.empty()) return {};
  llm::ChatRequest request;
  request.template_id = "code_extraction_v1";
  request.rendered_prompt = templates_->render(
      "code_extraction_v1", {{"insights", insights_to_json_text(insights)}});
  std::vector<llm::ParsedCode> parsed =
      gateway_->complete_structured(request, llm::SchemaId::CodeList).codes();
  return normalize_codes(parsed, kMaxNameWords);
}

Codebook ReflectiveCoder::consolidate_codebook(
    const Codebook& existing, const std::vector<Code>& candidates) {
  if (candidates.empty()) return existing;

  const auto structured_codes = [&](const std::string& template_id,
                                    const std::map<std::string, std::string>&
                                        values) {
    llm::ChatRequest request;
    request.template_id = template_id;
    request.rendered_prompt = templates_->render(template_id, values);
    return normalize_codes(
        gateway_->complete_structured(request, llm::SchemaId::CodeList).codes(),
        kMaxNameWords);
  };

  // Stage 1: merge the incoming candidates into the existing codebook.
  const std::vector<Code> merged = structured_codes(
      "code_merge_v1",
      {{"existing",
        existing.empty() ? std::string("(none yet)") : render_codebook(existing)},
       {"candidates", render_codes(candidates)}});
  if (merged.empty()) {
    throw ConsolidationError("merge stage returned no codes");
  }

  // Stage 2: quality gate. Whatever the reply claims, only names already in
  // the merged set survive, so the count can never increase.
  std::set<std::string> merged_names;
  for (const Code& code : merged) merged_names.insert(lower(code.name));
  std::vector<Code> filtered;
  for (Code& code :
       structured_codes("code_quality_v1", {{"codes", render_codes(merged)}})) {
    if (merged_names.count(lower(code.name)) > 0) {
      filtered.push_back(std::move(code));
    }
  }
  if (filtered.empty()) {
    throw ConsolidationError("quality stage removed every code");
  }

  // Stage 3: rewrite details without changing the code set.
  const std::vector<Code> refined = structured_codes(
      "code_refine_v1", {{"codes", render_codes(filtered)}});
  if (refined.size() != filtered.size()) {
    throw ConsolidationError("refinement changed the code count from " +
                             std::to_string(filtered.size()) + " to " +
                             std::to_string(refined.size()));
  }

  Codebook book = make_codebook(refined, existing.provenance);
  try {
    book.validate(config_.max_codes);
  } catch (const ValidationError& e) {
    throw ConsolidationError(std::string("consolidated codebook is invalid: ") +
                             e.what());
  }
  return book;
}

CodingRun run_reflective_coding(const Corpus& corpus, ReflectiveCoder& coder) {
  if (!corpus.labeled || corpus.labels.empty()) {
    throw ValidationError("corpus has no segregation labels; label it first");
  }
  const CoderConfig& cfg = coder.config();

  // Gap between who visits and who lives nearby, per labeled POI.
  std::map<std::string, DemographicGap> gaps;
  for (const SegregationLabel& label : corpus.labels) {
    const PoiContent* content = corpus.find_poi(label.poi_id);
    if (content == nullptr) {
      throw ValidationError("label references unknown poi '" + label.poi_id +
                            "'");
    }
    const PopulationFeature nearby =
        population_feature(content->poi, corpus.cbgs, cfg.gap_radius_m);
    gaps.emplace(label.poi_id,
                 demographic_gap(label.visitor_composition, nearby.composition));
  }

  CodingRun run;
  run.strata = stratify_pois(gaps, cfg.gap_threshold);
  run.subset = sample_coding_subset(run.strata, cfg.sample_size, cfg.seed);

  // Phase 1: insight generation and reflection, one POI at a time.
  std::vector<std::vector<Insight>> per_poi;
  per_poi.reserve(run.subset.size());
  for (const std::string& poi_id : run.subset) {
    const PoiContent* content = corpus.find_poi(poi_id);
    try {
      std::vector<Insight> generated = coder.generate_insights(*content);
      ReflectionResult reflected =
          coder.reflect_insights(generated, gaps.at(poi_id));
      run.dropped_inconsistent += reflected.dropped_inconsistent;
      run.insights.insert(run.insights.end(), reflected.kept.begin(),
                          reflected.kept.end());
      per_poi.push_back(std::move(reflected.kept));
    } catch (const Error& e) {
      throw Error("reflective coding failed at poi '" + poi_id +
                  "': " + e.what());
    }
  }

  // Phase 2: partition the insight pool round-robin over the sampled order
  // (stratum-major, so every subset sees a cross-section of strata), then
  // fold each subset's candidate codes into the codebook sequentially.
  const std::size_t subsets =
      cfg.subset_count > 0
          ? cfg.subset_count
          : std::max<std::size_t>(1, (run.subset.size() + 29) / 30);
  std::vector<std::vector<Insight>> partitions(subsets);
  for (std::size_t i = 0; i < per_poi.size(); ++i) {
    std::vector<Insight>& target = partitions[i % subsets];
    target.insert(target.end(), per_poi[i].begin(), per_poi[i].end());
  }

  Codebook book;
  book.provenance.model =
      cfg.model_name.empty() ? coder.gateway().config().provider_id
                             : cfg.model_name;
  book.provenance.seed = cfg.seed;
  book.provenance.subset_size = run.subset.size();
  book.provenance.extra["strata"] = static_cast<double>(run.strata.size());
  book.provenance.extra["insight_subsets"] = static_cast<double>(subsets);
  book.provenance.extra["dropped_inconsistent"] =
      static_cast<double>(run.dropped_inconsistent);

  for (const std::vector<Insight>& partition : partitions) {
    book = coder.consolidate_codebook(book, coder.extract_codes(partition));
  }
  if (book.empty()) {
    throw ValidationError("coding produced no candidate codes");
  }
  run.codebook = std::move(book);

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    save_insights(cfg.output_dir / "insights.jsonl", run.insights);
    save_codebook(cfg.output_dir / "codebook.json", run.codebook);
  }
  return run;
}

}  // namespace reem::coder
