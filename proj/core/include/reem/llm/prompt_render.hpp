#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "reem/composition.hpp"
#include "reem/corpus.hpp"

namespace reem::llm {

/// Reviews rendered most-recent-first as "[timestamp] text" lines until the
/// character budget is spent. Whole reviews are kept together; when even the
/// most recent review alone overflows the budget it is truncated rather than
/// dropped, so the result is empty only for an empty input or a zero budget.
std::string render_reviews_recent_first(const std::vector<Review>& reviews,
                                        std::size_t char_budget);

/// Signed per-group deltas, one "group: +0.200" line per group.
std::string render_gap(const DemographicGap& gap);

/// "- caption" lines for image material.
std::string render_attachment_lines(const std::vector<std::string>& refs);

}  // namespace reem::llm
