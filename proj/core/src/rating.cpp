#include "reem/rating.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "reem/errors.hpp"
#include "reem/format.hpp"
#include "reem/llm/prompt_render.hpp"
#include "reem/llm/schemas.hpp"

namespace reem::rating {

namespace {

/// True when the summary's section indices are exactly 1..expected.
bool sections_match(const std::vector<llm::ParsedSection>& sections,
                    std::size_t expected) {
  if (sections.size() != expected) return false;
  // parse_summary returns unique indices sorted ascending, so the span
  // check reduces to the endpoints.
  return sections.front().index == 1 &&
         sections.back().index == static_cast<int>(expected);
}

}  // namespace

std::vector<double> RatingBundle::flattened() const {
  std::vector<double> out;
  out.reserve(kGroupCount * width());
  for (const std::vector<double>& row : ratings) {
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

RatingBundle RatingBundle::from_flattened(std::string poi_id, std::size_t width,
                                          const std::vector<double>& values) {
  if (width == 0 || values.size() != kGroupCount * width) {
    throw ValidationError("flattened rating vector has " +
                          std::to_string(values.size()) + " entries; " +
                          std::to_string(kGroupCount * width) + " expected");
  }
  RatingBundle bundle;
  bundle.poi_id = std::move(poi_id);
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    bundle.ratings[g].assign(values.begin() + g * width,
                             values.begin() + (g + 1) * width);
    bundle.explanations[g].assign(width, std::string{});
  }
  return bundle;
}

void RatingBundle::validate() const {
  const std::size_t w = width();
  if (w == 0) throw ValidationError("rating bundle has no columns");
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    if (ratings[g].size() != w || explanations[g].size() != w) {
      throw ValidationError("rating bundle rows have inconsistent widths");
    }
    for (double value : ratings[g]) {
      if (!(value >= 0.0 && value <= 10.0)) {
        throw ValidationError("rating " + canonical_double(value) +
                              " for group '" + std::string(group_name(
                                  static_cast<Group>(g))) +
                              "' is outside [0, 10]");
      }
    }
  }
}

ReasoningChannel::ReasoningChannel(std::shared_ptr<llm::ChatGateway> gateway,
                                   std::shared_ptr<llm::TemplateStore> templates,
                                   std::size_t review_char_budget)
    : gateway_(std::move(gateway)),
      templates_(std::move(templates)),
      review_char_budget_(review_char_budget) {
  if (!gateway_) throw ValidationError("reasoning channel needs a gateway");
  if (!templates_) {
    throw ValidationError("reasoning channel needs a template store");
  }
  if (review_char_budget_ < 1) {
    throw ValidationError("review_char_budget must be positive");
  }
}

std::string ReasoningChannel::rendered_reviews(const PoiContent& content) const {
  std::string reviews =
      llm::render_reviews_recent_first(content.reviews, review_char_budget_);
  if (reviews.empty()) {
    throw ValidationError("poi '" + content.poi.poi_id +
                          "' has no review text to summarize");
  }
  return reviews;
}

CodebookSummary ReasoningChannel::summarize_with_codebook(
    const PoiContent& content, const coder::Codebook& codebook) {
  codebook.validate();
  const std::string reviews = rendered_reviews(content);

  llm::ChatRequest request;
  request.template_id = "codebook_summary_v1";
  request.rendered_prompt = templates_->render(
      "codebook_summary_v1", {{"name", content.poi.name},
                              {"reviews", reviews},
                              {"codebook", coder::render_codebook(codebook)}});

  std::vector<llm::ParsedSection> sections =
      gateway_->complete_structured(request, llm::SchemaId::Summary).sections();
  if (!sections_match(sections, codebook.size())) {
    llm::ChatRequest corrective = request;
    corrective.rendered_prompt +=
        "\n\nYour previous reply had " + std::to_string(sections.size()) +
        " sections. Reply again with exactly " +
        std::to_string(codebook.size()) +
        " sections, one per codebook dimension, with index running 1.." +
        std::to_string(codebook.size()) + ".";
    sections =
        gateway_->complete_structured(corrective, llm::SchemaId::Summary)
            .sections();
    if (!sections_match(sections, codebook.size())) {
      throw ValidationError(
          "codebook summary for poi '" + content.poi.poi_id + "' has " +
          std::to_string(sections.size()) + " sections for " +
          std::to_string(codebook.size()) + " codes after a corrective re-ask");
    }
  }

  CodebookSummary summary;
  summary.poi_id = content.poi.poi_id;
  summary.poi_name = content.poi.name;
  for (llm::ParsedSection& section : sections) {
    summary.sections.push_back(std::move(section.text));
  }
  return summary;
}

std::string ReasoningChannel::vanilla_summarize(const PoiContent& content) {
  const std::string reviews = rendered_reviews(content);
  llm::ChatRequest request;
  request.template_id = "vanilla_summary_v1";
  request.rendered_prompt = templates_->render(
      "vanilla_summary_v1",
      {{"name", content.poi.name}, {"reviews", reviews}});
  return gateway_->complete(request).text;
}

RatingBundle ReasoningChannel::rate_common(
    const std::string& template_id,
    const std::map<std::string, std::string>& values, const std::string& poi_id,
    std::size_t columns) {
  llm::ChatRequest request;
  request.template_id = template_id;
  request.rendered_prompt = templates_->render(template_id, values);

  const auto issues = [columns](const llm::ParsedRatingMatrix& matrix) {
    std::string out;
    if (matrix.width != columns) {
      out = "it had " + std::to_string(matrix.width) + " columns instead of " +
            std::to_string(columns);
    }
    for (const std::vector<double>& row : matrix.rows) {
      for (double value : row) {
        if (!(value >= 0.0 && value <= 10.0)) {
          if (!out.empty()) out += ", and ";
          out += "some ratings fell outside the 0..10 scale";
          return out;
        }
      }
    }
    return out;
  };

  llm::ParsedRatingMatrix matrix =
      gateway_->complete_structured(request, llm::SchemaId::RatingMatrix)
          .ratings();
  const std::string first_issues = issues(matrix);
  if (!first_issues.empty()) {
    llm::ChatRequest corrective = request;
    corrective.rendered_prompt +=
        "\n\nYour previous reply could not be used because " + first_issues +
        ". Reply again with exactly " + std::to_string(columns) +
        " numbers between 0 and 10 per group.";
    matrix =
        gateway_->complete_structured(corrective, llm::SchemaId::RatingMatrix)
            .ratings();
    if (matrix.width != columns) {
      throw ValidationError("rating matrix for poi '" + poi_id + "' has " +
                            std::to_string(matrix.width) + " columns for " +
                            std::to_string(columns) +
                            " dimensions after a corrective re-ask");
    }
  }

  // Whatever remains out of range after the re-ask is clamped and flagged.
  RatingBundle bundle;
  bundle.poi_id = poi_id;
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    bundle.ratings[g] = std::move(matrix.rows[g]);
    bundle.explanations[g] = std::move(matrix.explanations[g]);
    for (std::size_t c = 0; c < bundle.ratings[g].size(); ++c) {
      double& value = bundle.ratings[g][c];
      if (value >= 0.0 && value <= 10.0) continue;
      const double clamped = std::clamp(value, 0.0, 10.0);
      bundle.flags.push_back("clamped " +
                             std::string(group_name(static_cast<Group>(g))) +
                             "/" + std::to_string(c + 1) + " " +
                             canonical_double(value) + " -> " +
                             canonical_double(clamped));
      value = clamped;
      ++clamped_entries_;
    }
  }
  rated_entries_ += kGroupCount * columns;
  bundle.validate();
  return bundle;
}

RatingBundle ReasoningChannel::rate_poi(const CodebookSummary& summary,
                                        const coder::Codebook& codebook) {
  codebook.validate();
  if (summary.sections.size() != codebook.size()) {
    throw ValidationError("summary for poi '" + summary.poi_id + "' has " +
                          std::to_string(summary.sections.size()) +
                          " sections for " + std::to_string(codebook.size()) +
                          " codes");
  }
  return rate_common("rating_v1",
                     {{"name", summary.poi_name},
                      {"codebook", coder::render_codebook(codebook)},
                      {"summary", render_summary(summary)},
                      {"columns", std::to_string(codebook.size())}},
                     summary.poi_id, codebook.size());
}

RatingBundle ReasoningChannel::rate_vanilla(const PoiRecord& poi,
                                            const std::string& summary,
                                            std::size_t columns) {
  if (columns == 0) throw ValidationError("vanilla rating needs columns >= 1");
  if (summary.empty()) {
    throw ValidationError("poi '" + poi.poi_id + "' has an empty summary");
  }
  return rate_common("vanilla_rating_v1",
                     {{"name", poi.name},
                      {"summary", summary},
                      {"columns", std::to_string(columns)}},
                     poi.poi_id, columns);
}

double ReasoningChannel::clamped_fraction() const {
  if (rated_entries_ == 0) return 0.0;
  return static_cast<double>(clamped_entries_) /
         static_cast<double>(rated_entries_);
}

std::string render_summary(const CodebookSummary& summary) {
  std::ostringstream out;
  for (std::size_t i = 0; i < summary.sections.size(); ++i) {
    out << (i + 1) << ". " << summary.sections[i] << '\n';
  }
  return out.str();
}

SummaryRecord to_record(const CodebookSummary& summary) {
  return {summary.poi_id, "codebook_summary_v1", summary.sections};
}

void save_summaries(const std::filesystem::path& path,
                    const std::vector<SummaryRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const SummaryRecord& record : records) {
    nlohmann::json line;
    line["poi_id"] = record.poi_id;
    line["template_id"] = record.template_id;
    line["sections"] = record.sections;
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<SummaryRecord> load_summaries(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<SummaryRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) +
                    ": malformed JSON: " + e.what());
    }
    SummaryRecord record;
    record.poi_id = j.at("poi_id").get<std::string>();
    record.template_id = j.at("template_id").get<std::string>();
    for (const nlohmann::json& section : j.at("sections")) {
      record.sections.push_back(section.get<std::string>());
    }
    records.push_back(std::move(record));
  }
  return records;
}

void save_ratings(const std::filesystem::path& path,
                  const std::vector<RatingRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const RatingRecord& record : records) {
    record.bundle.validate();
    nlohmann::json line;
    line["poi_id"] = record.bundle.poi_id;
    line["summary"] = {{"template_id", record.summary.template_id},
                       {"sections", record.summary.sections}};
    nlohmann::json rows = nlohmann::json::array();
    nlohmann::json explanations = nlohmann::json::array();
    for (std::size_t g = 0; g < kGroupCount; ++g) {
      rows.push_back(record.bundle.ratings[g]);
      explanations.push_back(record.bundle.explanations[g]);
    }
    line["ratings"] = std::move(rows);
    line["explanations"] = std::move(explanations);
    line["flags"] = record.bundle.flags;
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<RatingRecord> load_ratings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<RatingRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) +
                    ": malformed JSON: " + e.what());
    }
    RatingRecord record;
    record.bundle.poi_id = j.at("poi_id").get<std::string>();
    record.summary.poi_id = record.bundle.poi_id;
    record.summary.template_id =
        j.at("summary").at("template_id").get<std::string>();
    for (const nlohmann::json& section : j.at("summary").at("sections")) {
      record.summary.sections.push_back(section.get<std::string>());
    }
    const nlohmann::json& rows = j.at("ratings");
    const nlohmann::json& explanations = j.at("explanations");
    if (!rows.is_array() || rows.size() != kGroupCount ||
        !explanations.is_array() || explanations.size() != kGroupCount) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": ratings must hold one row per group");
    }
    for (std::size_t g = 0; g < kGroupCount; ++g) {
      for (const nlohmann::json& value : rows[g]) {
        record.bundle.ratings[g].push_back(value.get<double>());
      }
      for (const nlohmann::json& text : explanations[g]) {
        record.bundle.explanations[g].push_back(text.get<std::string>());
      }
    }
    for (const nlohmann::json& flag : j.at("flags")) {
      record.bundle.flags.push_back(flag.get<std::string>());
    }
    record.bundle.validate();
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace reem::rating
