#include "reem/llm/prompt_render.hpp"

#include <algorithm>
#include <cstdio>

namespace reem::llm {

std::string render_reviews_recent_first(const std::vector<Review>& reviews,
                                        std::size_t char_budget) {
  std::vector<const Review*> order;
  order.reserve(reviews.size());
  for (const Review& r : reviews) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const Review* a, const Review* b) {
    if (a->timestamp != b->timestamp) return a->timestamp > b->timestamp;
    return a->review_id > b->review_id;
  });

  std::string out;
  for (const Review* r : order) {
    std::string line = "[" + r->timestamp + "] " + r->text + "\n";
    if (out.size() + line.size() > char_budget) {
      if (out.empty() && char_budget > 0) {
        out = line.substr(0, char_budget);
      }
      break;
    }
    out += line;
  }
  return out;
}

std::string render_gap(const DemographicGap& gap) {
  std::string out;
  char buffer[32];
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    std::snprintf(buffer, sizeof(buffer), "%+.3f", gap.deltas[g]);
    out += std::string(kGroupNames[g]) + ": " + buffer + "\n";
  }
  return out;
}

std::string render_attachment_lines(const std::vector<std::string>& refs) {
  std::string out;
  for (const std::string& ref : refs) out += "- " + ref + "\n";
  return out;
}

}  // namespace reem::llm
