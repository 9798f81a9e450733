#include "reem/llm/schemas.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "reem/errors.hpp"

namespace reem::llm {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool try_parse(const std::string& text, json& out) {
  out = json::parse(text, nullptr, false);
  return !out.is_discarded();
}

/// Returns the text of the first balanced object/array starting at `open`,
/// or an empty string if the reply ends before it closes.
std::string balanced_span(const std::string& s, std::size_t open) {
  const char opener = s[open];
  const char closer = opener == '{' ? '}' : ']';
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == opener) {
      ++depth;
    } else if (c == closer) {
      if (--depth == 0) return s.substr(open, i - open + 1);
    }
  }
  return "";
}

const json* unwrap(const json& j, const char* key) {
  if (j.is_object() && j.contains(key)) return &j.at(key);
  return nullptr;
}

std::string require_nonempty_string(const json& j, const char* field,
                                    const char* what) {
  if (!j.contains(field) || !j.at(field).is_string()) {
    throw ValidationError(std::string(what) + " is missing a string '" +
                          field + "' field");
  }
  std::string value = trim(j.at(field).get<std::string>());
  if (value.empty()) {
    throw ValidationError(std::string(what) + " has an empty '" + field +
                          "' field");
  }
  return value;
}

}  // namespace

std::string_view schema_name(SchemaId id) {
  switch (id) {
    case SchemaId::InsightList: return "insight-list";
    case SchemaId::CodeList: return "code-list";
    case SchemaId::Summary: return "summary";
    case SchemaId::RatingMatrix: return "rating-matrix";
  }
  throw ValidationError("unknown schema id");
}

std::string_view polarity_name(Polarity p) {
  return p == Polarity::Attract ? "attract" : "repel";
}

Polarity parse_polarity(std::string_view name) {
  if (name == "attract") return Polarity::Attract;
  if (name == "repel") return Polarity::Repel;
  throw ValidationError("polarity must be 'attract' or 'repel', got '" +
                        std::string(name) + "'");
}

nlohmann::json extract_json(const std::string& reply) {
  json j;
  if (try_parse(trim(reply), j)) return j;

  // Fenced block, with or without a language tag.
  std::size_t fence = reply.find("```");
  while (fence != std::string::npos) {
    std::size_t start = reply.find('\n', fence + 3);
    if (start == std::string::npos) break;
    ++start;
    const std::size_t end = reply.find("```", start);
    if (end == std::string::npos) break;
    if (try_parse(trim(reply.substr(start, end - start)), j)) return j;
    fence = reply.find("```", end + 3);
  }

  // First balanced object or array embedded in prose.
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (reply[i] != '{' && reply[i] != '[') continue;
    const std::string span = balanced_span(reply, i);
    if (!span.empty() && try_parse(span, j)) return j;
  }

  throw ValidationError("reply contains no parseable JSON");
}

std::vector<ParsedInsight> parse_insight_list(const std::string& reply) {
  json j = extract_json(reply);
  if (const json* inner = unwrap(j, "insights")) j = *inner;
  if (!j.is_array()) {
    throw ValidationError("insight list must be a JSON array");
  }

  std::vector<ParsedInsight> out;
  for (const json& item : j) {
    if (!item.is_object()) {
      throw ValidationError("each insight must be a JSON object");
    }
    ParsedInsight insight;
    insight.text = require_nonempty_string(item, "text", "an insight");
    if (!item.contains("groups") || !item.at("groups").is_object() ||
        item.at("groups").empty()) {
      throw ValidationError(
          "an insight must implicate at least one group in its 'groups' "
          "object");
    }
    for (const auto& [key, value] : item.at("groups").items()) {
      if (!value.is_string()) {
        throw ValidationError("group '" + key +
                              "' polarity must be a string");
      }
      insight.groups.emplace_back(parse_group(key),
                                  parse_polarity(value.get<std::string>()));
    }
    std::sort(insight.groups.begin(), insight.groups.end(),
              [](const auto& a, const auto& b) {
                return static_cast<int>(a.first) < static_cast<int>(b.first);
              });
    out.push_back(std::move(insight));
  }
  return out;
}

std::vector<ParsedCode> parse_code_list(const std::string& reply) {
  json j = extract_json(reply);
  if (const json* inner = unwrap(j, "codes")) j = *inner;
  if (!j.is_array()) {
    throw ValidationError("code list must be a JSON array");
  }

  std::vector<ParsedCode> out;
  for (const json& item : j) {
    if (!item.is_object()) {
      throw ValidationError("each code must be a JSON object");
    }
    ParsedCode code;
    code.name = require_nonempty_string(item, "name", "a code");
    if (item.contains("detail")) {
      if (!item.at("detail").is_string()) {
        throw ValidationError("code '" + code.name +
                              "' detail must be a string");
      }
      code.detail = trim(item.at("detail").get<std::string>());
    }
    out.push_back(std::move(code));
  }
  return out;
}

std::vector<ParsedSection> parse_summary(const std::string& reply) {
  json j = extract_json(reply);
  if (const json* inner = unwrap(j, "sections")) j = *inner;
  if (!j.is_array()) {
    throw ValidationError("summary must be a JSON array of sections");
  }

  std::vector<ParsedSection> out;
  std::set<int> seen;
  for (const json& item : j) {
    if (!item.is_object()) {
      throw ValidationError("each summary section must be a JSON object");
    }
    if (!item.contains("index") || !item.at("index").is_number_integer()) {
      throw ValidationError("a summary section is missing its integer "
                            "'index' field");
    }
    ParsedSection section;
    section.index = item.at("index").get<int>();
    if (section.index < 1) {
      throw ValidationError("summary section index must be >= 1");
    }
    if (!seen.insert(section.index).second) {
      throw ValidationError("summary has duplicate section index " +
                            std::to_string(section.index));
    }
    section.text = require_nonempty_string(item, "text", "a summary section");
    out.push_back(std::move(section));
  }
  std::sort(out.begin(), out.end(),
            [](const ParsedSection& a, const ParsedSection& b) {
              return a.index < b.index;
            });
  return out;
}

ParsedRatingMatrix parse_rating_matrix(const std::string& reply) {
  json j = extract_json(reply);
  if (const json* inner = unwrap(j, "ratings")) {
    if (inner->is_object()) j = *inner;
  }
  if (!j.is_object()) {
    throw ValidationError("rating matrix must be a JSON object keyed by "
                          "group name");
  }

  ParsedRatingMatrix out;
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    const std::string key(kGroupNames[g]);
    if (!j.contains(key)) {
      throw ValidationError("rating matrix is missing the '" + key +
                            "' group row");
    }
    const json& row = j.at(key);
    const json* numbers = &row;
    if (row.is_object()) {
      if (!row.contains("ratings") || !row.at("ratings").is_array()) {
        throw ValidationError("group '" + key +
                              "' row must hold a 'ratings' array");
      }
      numbers = &row.at("ratings");
      if (row.contains("explanations")) {
        const json& ex = row.at("explanations");
        if (!ex.is_array()) {
          throw ValidationError("group '" + key +
                                "' explanations must be an array");
        }
        for (const json& e : ex) {
          out.explanations[g].push_back(e.is_string() ? e.get<std::string>()
                                                      : e.dump());
        }
      }
    }
    if (!numbers->is_array() || numbers->empty()) {
      throw ValidationError("group '" + key +
                            "' row must be a non-empty array of numbers");
    }
    for (std::size_t c = 0; c < numbers->size(); ++c) {
      const json& cell = (*numbers)[c];
      if (!cell.is_number() ||
          !std::isfinite(cell.get<double>())) {
        throw ValidationError("rating for group '" + key + "' at column " +
                              std::to_string(c + 1) + " is not a number");
      }
      out.rows[g].push_back(cell.get<double>());
    }
    out.explanations[g].resize(out.rows[g].size());
  }

  out.width = out.rows[0].size();
  for (std::size_t g = 1; g < kGroupCount; ++g) {
    if (out.rows[g].size() != out.width) {
      throw ValidationError("rating matrix rows have differing widths (" +
                            std::string(kGroupNames[g]) + " has " +
                            std::to_string(out.rows[g].size()) + ", " +
                            std::string(kGroupNames[0]) + " has " +
                            std::to_string(out.width) + ")");
    }
  }
  return out;
}

std::string schema_instructions(SchemaId id) {
  switch (id) {
    case SchemaId::InsightList:
      return "Reply with only a JSON array. Each element must be an object "
             "with \"text\" (one sentence) and \"groups\" (an object mapping "
             "any of hispanic, black, asian, white, others to \"attract\" or "
             "\"repel\").";
    case SchemaId::CodeList:
      return "Reply with only a JSON array. Each element must be an object "
             "with \"name\" (a short phrase) and \"detail\" (one sentence).";
    case SchemaId::Summary:
      return "Reply with only a JSON array. Each element must be an object "
             "with \"index\" (the code number, starting at 1) and \"text\" "
             "(one paragraph). Emit exactly one element per code.";
    case SchemaId::RatingMatrix:
      return "Reply with only a JSON object with exactly the keys hispanic, "
             "black, asian, white, others. Each value must be an array of "
             "numbers between 0 and 10, one per code, in code order.";
  }
  throw ValidationError("unknown schema id");
}

}  // namespace reem::llm
