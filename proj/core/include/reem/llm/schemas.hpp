#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "reem/composition.hpp"

namespace reem::llm {

/// Structures a provider reply can be parsed into.
enum class SchemaId { InsightList, CodeList, Summary, RatingMatrix };

std::string_view schema_name(SchemaId id);

enum class Polarity { Attract, Repel };

std::string_view polarity_name(Polarity p);
Polarity parse_polarity(std::string_view name);

/// One claim about a place, tagged with the groups it implicates.
struct ParsedInsight {
  std::string text;
  std::vector<std::pair<Group, Polarity>> groups;
};

/// One candidate analysis dimension (index assigned later).
struct ParsedCode {
  std::string name;
  std::string detail;
};

/// One codebook-keyed summary section.
struct ParsedSection {
  int index = 0;
  std::string text;
};

/// Group-major rating rows; every row has the same (codebook-sized) width.
struct ParsedRatingMatrix {
  std::array<std::vector<double>, kGroupCount> rows;
  std::array<std::vector<std::string>, kGroupCount> explanations;
  std::size_t width = 0;
};

/// Pulls the JSON payload out of a chat reply: a fenced ``` block when
/// present, otherwise the first balanced object or array. Throws
/// ValidationError when no parseable JSON is found.
nlohmann::json extract_json(const std::string& reply);

/// Parse + validate a reply against a schema. Error messages are specific
/// enough to steer a corrective re-ask (and to name a missing group row).
std::vector<ParsedInsight> parse_insight_list(const std::string& reply);
std::vector<ParsedCode> parse_code_list(const std::string& reply);
std::vector<ParsedSection> parse_summary(const std::string& reply);
ParsedRatingMatrix parse_rating_matrix(const std::string& reply);

/// Instructions appended on a corrective re-ask, restating the structure.
std::string schema_instructions(SchemaId id);

}  // namespace reem::llm
