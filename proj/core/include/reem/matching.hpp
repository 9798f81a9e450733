#pragma once

#include <map>
#include <string>
#include <vector>

#include "reem/corpus.hpp"

namespace reem {

/// Case-folds, trims, and collapses internal whitespace.
std::string normalize_name(const std::string& name);

/// Cross-dataset POI matching: a pair matches iff the normalized names are
/// equal and the locations lie within max_distance_m. Each POI is matched
/// at most once; the nearest candidate wins, ties go to the
/// lexicographically smaller mobility id.
std::map<std::string, std::string> match_pois(
    const std::vector<PoiRecord>& social_pois,
    const std::vector<PoiRecord>& mobility_pois,
    double max_distance_m = 200.0);

}  // namespace reem
