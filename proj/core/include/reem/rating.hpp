#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "reem/coder/codebook.hpp"
#include "reem/composition.hpp"
#include "reem/corpus.hpp"
#include "reem/llm/gateway.hpp"
#include "reem/llm/templates.hpp"

namespace reem::rating {

/// A POI summary organized by codebook dimension: exactly one paragraph per
/// code, position i holding the paragraph for code index i + 1.
struct CodebookSummary {
  std::string poi_id;
  std::string poi_name;
  std::vector<std::string> sections;
};

/// One persisted summary of either flavor; vanilla summaries hold a single
/// section. template_id records which prompt produced it.
struct SummaryRecord {
  std::string poi_id;
  std::string template_id;
  std::vector<std::string> sections;
};

/// Per-group, per-dimension attraction ratings on the 0..10 scale
/// (5 = neutral), with one short explanation per entry. Rows follow the
/// fixed group order; columns follow codebook order.
struct RatingBundle {
  std::string poi_id;
  std::array<std::vector<double>, kGroupCount> ratings;
  std::array<std::vector<std::string>, kGroupCount> explanations;
  std::vector<std::string> flags;  // one note per clamped entry

  std::size_t width() const { return ratings[0].size(); }

  /// Row-major vector: index = group_index * width + code_index.
  std::vector<double> flattened() const;

  /// Inverse of flattened(); `values` must have length 5 * width.
  static RatingBundle from_flattened(std::string poi_id, std::size_t width,
                                     const std::vector<double>& values);

  /// Every entry within [0, 10], consistent row widths.
  void validate() const;
};

struct RatingRecord {
  SummaryRecord summary;
  RatingBundle bundle;
};

/// Codebook-guided summarization and group-perspective rating through the
/// chat gateway. Structure violations get one corrective re-ask; ratings
/// still out of range after that are clamped and flagged.
class ReasoningChannel {
 public:
  ReasoningChannel(std::shared_ptr<llm::ChatGateway> gateway,
                   std::shared_ptr<llm::TemplateStore> templates,
                   std::size_t review_char_budget = 12000);

  /// One gateway call; reply must contain exactly one section per code.
  CodebookSummary summarize_with_codebook(const PoiContent& content,
                                          const coder::Codebook& codebook);

  /// Free-form summary with no structural requirements.
  std::string vanilla_summarize(const PoiContent& content);

  /// One call rating all five groups against every codebook dimension.
  RatingBundle rate_poi(const CodebookSummary& summary,
                        const coder::Codebook& codebook);

  /// Codebook-free twin used for comparison runs; the provider picks its
  /// own `columns` facets.
  RatingBundle rate_vanilla(const PoiRecord& poi, const std::string& summary,
                            std::size_t columns);

  /// Clamp accounting across everything this channel has rated.
  std::size_t rated_entries() const { return rated_entries_; }
  std::size_t clamped_entries() const { return clamped_entries_; }
  double clamped_fraction() const;

 private:
  std::string rendered_reviews(const PoiContent& content) const;
  RatingBundle rate_common(const std::string& template_id,
                           const std::map<std::string, std::string>& values,
                           const std::string& poi_id, std::size_t columns);

  std::shared_ptr<llm::ChatGateway> gateway_;
  std::shared_ptr<llm::TemplateStore> templates_;
  std::size_t review_char_budget_;
  std::size_t rated_entries_ = 0;
  std::size_t clamped_entries_ = 0;
};

/// "1. paragraph" lines in codebook order, for prompt bodies.
std::string render_summary(const CodebookSummary& summary);

SummaryRecord to_record(const CodebookSummary& summary);

/// summaries.jsonl: one {"poi_id","template_id","sections"} object per line.
void save_summaries(const std::filesystem::path& path,
                    const std::vector<SummaryRecord>& records);
std::vector<SummaryRecord> load_summaries(const std::filesystem::path& path);

/// ratings.jsonl: one {"poi_id","summary","ratings","explanations","flags"}
/// object per line, ratings as five group-ordered rows.
void save_ratings(const std::filesystem::path& path,
                  const std::vector<RatingRecord>& records);
std::vector<RatingRecord> load_ratings(const std::filesystem::path& path);

}  // namespace reem::rating
