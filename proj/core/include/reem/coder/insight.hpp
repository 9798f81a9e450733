#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "reem/composition.hpp"
#include "reem/llm/schemas.hpp"

namespace reem::coder {

/// One claim about why a place attracts or repels particular groups.
struct Insight {
  std::string poi_id;
  std::string text;
  std::vector<std::pair<Group, llm::Polarity>> groups;  // sorted by group
};

Insight make_insight(std::string poi_id, const llm::ParsedInsight& parsed);

/// JSON array text of [{"text", "groups"}] objects, for prompt bodies.
std::string insights_to_json_text(const std::vector<Insight>& insights);

/// insights.jsonl: one {"poi_id","text","groups"} object per line.
void save_insights(const std::filesystem::path& path,
                   const std::vector<Insight>& insights);
std::vector<Insight> load_insights(const std::filesystem::path& path);

}  // namespace reem::coder
