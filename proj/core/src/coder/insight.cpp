#include "reem/coder/insight.hpp"

#include <fstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "reem/errors.hpp"

namespace reem::coder {

namespace {

nlohmann::json insight_body(const Insight& insight) {
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [group, polarity] : insight.groups) {
    groups[std::string(group_name(group))] =
        std::string(llm::polarity_name(polarity));
  }
  return {{"text", insight.text}, {"groups", groups}};
}

}  // namespace

Insight make_insight(std::string poi_id, const llm::ParsedInsight& parsed) {
  Insight insight;
  insight.poi_id = std::move(poi_id);
  insight.text = parsed.text;
  insight.groups = parsed.groups;
  return insight;
}

std::string insights_to_json_text(const std::vector<Insight>& insights) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Insight& insight : insights) arr.push_back(insight_body(insight));
  return arr.dump(2);
}

void save_insights(const std::filesystem::path& path,
                   const std::vector<Insight>& insights) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const Insight& insight : insights) {
    nlohmann::json line = insight_body(insight);
    line["poi_id"] = insight.poi_id;
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Insight> load_insights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Insight> insights;
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
    Insight insight;
    insight.poi_id = j.value("poi_id", std::string{});
    insight.text = j.value("text", std::string{});
    if (insight.text.empty()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": insight has no text");
    }
    if (!j.contains("groups") || !j.at("groups").is_object() ||
        j.at("groups").empty()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": insight implicates no groups");
    }
    for (const auto& [name, value] : j.at("groups").items()) {
      insight.groups.emplace_back(parse_group(name),
                                  llm::parse_polarity(value.get<std::string>()));
    }
    std::sort(insight.groups.begin(), insight.groups.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    insights.push_back(std::move(insight));
  }
  return insights;
}

}  // namespace reem::coder
