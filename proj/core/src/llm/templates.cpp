#include "reem/llm/templates.hpp"

#include <fstream>
#include <sstream>

#include "reem/errors.hpp"

namespace reem::llm {

TemplateStore::TemplateStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_)) {
    throw IoError("template directory does not exist: " + dir_.string());
  }
}

bool TemplateStore::has(const std::string& template_id) const {
  if (loaded_.count(template_id)) return true;
  return std::filesystem::is_regular_file(dir_ / (template_id + ".txt"));
}

const std::string& TemplateStore::text(const std::string& template_id) const {
  auto it = loaded_.find(template_id);
  if (it != loaded_.end()) return it->second;

  const auto path = dir_ / (template_id + ".txt");
  std::ifstream file(path);
  if (!file) throw IoError("no template file for id '" + template_id + "' at " +
                           path.string());
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return loaded_.emplace(template_id, buffer.str()).first->second;
}

std::string TemplateStore::render(
    const std::string& template_id,
    const std::map<std::string, std::string>& values) const {
  const std::string& body = text(template_id);
  std::string out;
  out.reserve(body.size());

  std::size_t pos = 0;
  while (pos < body.size()) {
    const std::size_t open = body.find("{{", pos);
    if (open == std::string::npos) {
      out.append(body, pos, body.size() - pos);
      break;
    }
    out.append(body, pos, open - pos);
    const std::size_t close = body.find("}}", open + 2);
    if (close == std::string::npos) {
      throw ValidationError("template '" + template_id +
                            "' has an unterminated placeholder");
    }
    const std::string key = body.substr(open + 2, close - open - 2);
    auto it = values.find(key);
    if (it == values.end()) {
      throw ValidationError("template '" + template_id +
                            "' placeholder '" + key + "' was not supplied");
    }
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

std::vector<std::string> TemplateStore::ids() const {
  std::vector<std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      out.push_back(entry.path().stem().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace reem::llm
