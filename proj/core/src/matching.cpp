#include "reem/matching.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <tuple>

#include "reem/geo.hpp"

namespace reem {

std::string normalize_name(const std::string& name) {
  std::string out;
  out.reserve(name.size());
  bool pending_space = false;
  for (unsigned char c : name) {
    if (std::isspace(c)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::map<std::string, std::string> match_pois(
    const std::vector<PoiRecord>& social_pois,
    const std::vector<PoiRecord>& mobility_pois, double max_distance_m) {
  struct Candidate {
    double distance;
    const PoiRecord* social;
    const PoiRecord* mobility;
  };

  std::vector<Candidate> candidates;
  for (const PoiRecord& s : social_pois) {
    const std::string key = normalize_name(s.name);
    for (const PoiRecord& m : mobility_pois) {
      if (normalize_name(m.name) != key) continue;
      const double d = haversine_meters(s.location, m.location);
      if (d <= max_distance_m) candidates.push_back({d, &s, &m});
    }
  }

  // Greedy by distance yields a one-to-one matching whose pair set does not
  // depend on which list is called "social". Distance ties resolve to the
  // lexicographically smaller mobility id.
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              return std::tie(a.distance, a.social->poi_id, a.mobility->poi_id) <
                     std::tie(b.distance, b.social->poi_id, b.mobility->poi_id);
            });

  std::map<std::string, std::string> matches;
  std::set<std::string> used_social;
  std::set<std::string> used_mobility;
  for (const Candidate& c : candidates) {
    if (used_social.count(c.social->poi_id) || used_mobility.count(c.mobility->poi_id)) {
      continue;
    }
    used_social.insert(c.social->poi_id);
    used_mobility.insert(c.mobility->poi_id);
    matches.emplace(c.social->poi_id, c.mobility->poi_id);
  }
  return matches;
}

}  // namespace reem
