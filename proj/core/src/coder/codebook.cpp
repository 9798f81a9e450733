#include "reem/coder/codebook.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <utility>

#include "reem/errors.hpp"

namespace reem::coder {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

void Codebook::validate(std::size_t max_codes, bool allow_empty) const {
  if (codes.empty()) {
    if (allow_empty) return;
    throw ValidationError("codebook has no codes");
  }
  if (codes.size() > max_codes) {
    throw ValidationError("codebook has " + std::to_string(codes.size()) +
                          " codes; the limit is " + std::to_string(max_codes));
  }
  std::vector<std::string> seen;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const Code& code = codes[i];
    if (code.index != static_cast<int>(i) + 1) {
      throw ValidationError("codebook indices must run 1.." +
                            std::to_string(codes.size()) + "; position " +
                            std::to_string(i + 1) + " has index " +
                            std::to_string(code.index));
    }
    if (code.name.empty()) {
      throw ValidationError("code " + std::to_string(code.index) +
                            " has an empty name");
    }
    const std::string key = lower(code.name);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      throw ValidationError("duplicate code name '" + code.name + "'");
    }
    seen.push_back(key);
  }
}

nlohmann::json Codebook::to_json() const {
  nlohmann::json prov;
  prov["model"] = provenance.model;
  prov["seed"] = provenance.seed;
  prov["subset_size"] = provenance.subset_size;
  for (const auto& [key, value] : provenance.extra) prov[key] = value;

  nlohmann::json code_list = nlohmann::json::array();
  for (const Code& code : codes) {
    code_list.push_back({{"index", code.index},
                         {"name", code.name},
                         {"detail", code.detail}});
  }
  return {{"version", 1}, {"provenance", prov}, {"codes", code_list}};
}

Codebook Codebook::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("codebook JSON must be an object");
  const int version = j.value("version", 0);
  if (version != 1) {
    throw ValidationError("unsupported codebook version " +
                          std::to_string(version));
  }
  Codebook book;
  if (j.contains("provenance")) {
    const nlohmann::json& prov = j.at("provenance");
    if (!prov.is_object()) {
      throw ValidationError("codebook provenance must be an object");
    }
    for (const auto& [key, value] : prov.items()) {
      if (key == "model") {
        book.provenance.model = value.get<std::string>();
      } else if (key == "seed") {
        book.provenance.seed = value.get<std::uint64_t>();
      } else if (key == "subset_size") {
        book.provenance.subset_size = value.get<std::size_t>();
      } else if (value.is_number()) {
        book.provenance.extra[key] = value.get<double>();
      }
      // Non-numeric unknown fields are tolerated and dropped.
    }
  }
  if (!j.contains("codes") || !j.at("codes").is_array()) {
    throw ValidationError("codebook JSON is missing the 'codes' array");
  }
  for (const nlohmann::json& entry : j.at("codes")) {
    if (!entry.is_object()) {
      throw ValidationError("codebook entries must be objects");
    }
    Code code;
    code.index = entry.value("index", 0);
    if (!entry.contains("name") || !entry.at("name").is_string()) {
      throw ValidationError("codebook entry is missing a string 'name'");
    }
    code.name = entry.at("name").get<std::string>();
    code.detail = entry.value("detail", std::string{});
    book.codes.push_back(std::move(code));
  }
  return book;
}

Codebook make_codebook(std::vector<Code> codes, CodebookProvenance provenance) {
  Codebook book;
  book.codes = std::move(codes);
  book.provenance = std::move(provenance);
  for (std::size_t i = 0; i < book.codes.size(); ++i) {
    book.codes[i].index = static_cast<int>(i) + 1;
  }
  return book;
}

void save_codebook(const std::filesystem::path& path, const Codebook& codebook) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << codebook.to_json().dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed codebook JSON in " + path.string() + ": " +
                  e.what());
  }
  Codebook book = Codebook::from_json(j);
  book.validate();
  return book;
}

std::string render_codebook(const Codebook& codebook) {
  std::ostringstream out;
  for (const Code& code : codebook.codes) {
    out << code.index << ". " << code.name;
    if (!code.detail.empty()) out << ": " << code.detail;
    out << '\n';
  }
  return out.str();
}

std::string render_codes(const std::vector<Code>& codes) {
  std::ostringstream out;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const Code& code = codes[i];
    out << (code.index > 0 ? code.index : static_cast<int>(i) + 1) << ". "
        << code.name;
    if (!code.detail.empty()) out << ": " << code.detail;
    out << '\n';
  }
  return out.str();
}

}  // namespace reem::coder
