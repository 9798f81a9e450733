#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace reem::llm {

/// Prompt templates stored as versioned text files, one per template id
/// (`<dir>/<template_id>.txt`). Placeholders are written `{{key}}`; every
/// placeholder must be supplied at render time so template and call site
/// cannot drift apart silently.
class TemplateStore {
 public:
  explicit TemplateStore(std::filesystem::path dir);

  bool has(const std::string& template_id) const;

  /// Raw template text. Throws IoError if the file is missing.
  const std::string& text(const std::string& template_id) const;

  /// Substitutes every `{{key}}` placeholder. Throws ValidationError if a
  /// placeholder has no value; unused values are ignored.
  std::string render(const std::string& template_id,
                     const std::map<std::string, std::string>& values) const;

  /// Template ids present on disk, sorted.
  std::vector<std::string> ids() const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::map<std::string, std::string> loaded_;
};

}  // namespace reem::llm
