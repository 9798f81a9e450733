#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace reem::coder {

/// One analysis dimension: a short name and a one-sentence explanation.
struct Code {
  int index = 0;  // 0 while still a candidate; assigned on codebook build
  std::string name;
  std::string detail;
};

struct CodebookProvenance {
  std::string model;
  std::uint64_t seed = 0;
  std::size_t subset_size = 0;
  /// Free-form numeric side data (stratum count, dropped-insight count, ...).
  std::map<std::string, double> extra;
};

struct Codebook {
  std::vector<Code> codes;
  CodebookProvenance provenance;

  std::size_t size() const { return codes.size(); }
  bool empty() const { return codes.empty(); }

  /// Enforces: 1..max_codes codes (unless allow_empty), indices contiguous
  /// from 1, names unique and non-empty. Throws ValidationError.
  void validate(std::size_t max_codes = 20, bool allow_empty = false) const;

  nlohmann::json to_json() const;
  static Codebook from_json(const nlohmann::json& j);
};

/// Builds a codebook from an ordered code list, assigning indices 1..N.
Codebook make_codebook(std::vector<Code> codes, CodebookProvenance provenance);

void save_codebook(const std::filesystem::path& path, const Codebook& codebook);
Codebook load_codebook(const std::filesystem::path& path);

/// "1. Name: detail" lines, for prompt bodies.
std::string render_codebook(const Codebook& codebook);
std::string render_codes(const std::vector<Code>& codes);

}  // namespace reem::coder
