#include "reem/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "reem/errors.hpp"
#include "reem/format.hpp"
#include "reem/segregation.hpp"

namespace reem {

namespace {

using nlohmann::json;

[[noreturn]] void fail_line(const std::filesystem::path& path,
                            std::size_t line, const std::string& msg) {
  throw IoError(path.filename().string() + " line " + std::to_string(line) +
                ": " + msg);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

const json& require_field(const json& j, const char* key,
                          const std::filesystem::path& path,
                          std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) {
    fail_line(path, line, std::string("missing field '") + key + "'");
  }
  return *it;
}

std::string require_string(const json& j, const char* key,
                           const std::filesystem::path& path, std::size_t line,
                           bool allow_empty = false) {
  const json& v = require_field(j, key, path, line);
  if (!v.is_string()) {
    fail_line(path, line, std::string("field '") + key + "' must be a string");
  }
  std::string s = v.get<std::string>();
  if (!allow_empty && s.empty()) {
    fail_line(path, line, std::string("field '") + key + "' must be non-empty");
  }
  return s;
}

double require_number(const json& j, const char* key,
                      const std::filesystem::path& path, std::size_t line) {
  const json& v = require_field(j, key, path, line);
  if (!v.is_number()) {
    fail_line(path, line, std::string("field '") + key + "' must be a number");
  }
  return v.get<double>();
}

std::vector<std::string> optional_string_list(const json& j, const char* key,
                                              const std::filesystem::path& path,
                                              std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) return {};
  if (!it->is_array()) {
    fail_line(path, line, std::string("field '") + key + "' must be an array");
  }
  std::vector<std::string> out;
  for (const json& e : *it) {
    if (!e.is_string()) {
      fail_line(path, line,
                std::string("field '") + key + "' must contain strings");
    }
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::vector<std::string> split_fields(const std::string& row) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : row) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const char* what,
                    const std::filesystem::path& path, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty()) {
    fail_line(path, line, std::string("invalid ") + what + " '" + s + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& s, const char* what,
                       const std::filesystem::path& path, std::size_t line) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || s.empty()) {
    fail_line(path, line, std::string("invalid ") + what + " '" + s + "'");
  }
  return static_cast<std::int64_t>(v);
}

bool valid_month(const std::string& m) {
  if (m.size() != 7 || m[4] != '-') return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u}) {
    if (!std::isdigit(static_cast<unsigned char>(m[i]))) return false;
  }
  const int month = (m[5] - '0') * 10 + (m[6] - '0');
  return month >= 1 && month <= 12;
}

void expect_header(std::ifstream& in, const std::string& expected,
                   const std::filesystem::path& path) {
  std::string header;
  if (!std::getline(in, header)) {
    throw IoError(path.filename().string() + ": empty file");
  }
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != expected) {
    throw IoError(path.filename().string() + ": unexpected header '" + header +
                  "', expected '" + expected + "'");
  }
}

constexpr const char* kCbgHeader =
    "cbg_id,lat,lon,population,hispanic,black,asian,white,others";
constexpr const char* kVisitHeader = "poi_id,cbg_id,month,visit_count";
constexpr const char* kLabelHeader =
    "poi_id,segregation,k_used,tau_hispanic,tau_black,tau_asian,tau_white,"
    "tau_others";

}  // namespace

bool PoiContent::has_images() const {
  return std::any_of(reviews.begin(), reviews.end(),
                     [](const Review& r) { return !r.image_refs.empty(); });
}

const PoiContent* Corpus::find_poi(const std::string& poi_id) const {
  auto it = std::lower_bound(
      pois.begin(), pois.end(), poi_id,
      [](const PoiContent& c, const std::string& id) { return c.poi.poi_id < id; });
  if (it == pois.end() || it->poi.poi_id != poi_id) return nullptr;
  return &*it;
}

const CbgDemographics* Corpus::find_cbg(const std::string& cbg_id) const {
  auto it = std::lower_bound(
      cbgs.begin(), cbgs.end(), cbg_id,
      [](const CbgDemographics& c, const std::string& id) { return c.cbg_id < id; });
  if (it == cbgs.end() || it->cbg_id != cbg_id) return nullptr;
  return &*it;
}

const SegregationLabel* Corpus::find_label(const std::string& poi_id) const {
  auto it = std::lower_bound(
      labels.begin(), labels.end(), poi_id,
      [](const SegregationLabel& l, const std::string& id) { return l.poi_id < id; });
  if (it == labels.end() || it->poi_id != poi_id) return nullptr;
  return &*it;
}

std::vector<std::string> Corpus::poi_ids() const {
  std::vector<std::string> ids;
  ids.reserve(pois.size());
  for (const PoiContent& c : pois) ids.push_back(c.poi.poi_id);
  return ids;
}

CbgDemographics make_cbg(std::string cbg_id, GeoPoint centroid,
                         std::int64_t population,
                         const RacialComposition::Shares& group_counts) {
  CbgDemographics cbg;
  cbg.cbg_id = std::move(cbg_id);
  cbg.centroid = centroid;
  cbg.population = population;
  cbg.group_counts = group_counts;
  cbg.composition = RacialComposition::from_counts(
      group_counts, static_cast<double>(population));
  return cbg;
}

IngestResult ingest_corpus(const std::filesystem::path& poi_path,
                           const std::filesystem::path& review_path,
                           const std::filesystem::path& cbg_path,
                           const std::filesystem::path& visit_path,
                           std::size_t min_reviews) {
  std::map<std::string, PoiContent> by_poi;

  {
    std::ifstream in = open_input(poi_path);
    std::string row;
    std::size_t line = 0;
    while (std::getline(in, row)) {
      ++line;
      if (!row.empty() && row.back() == '\r') row.pop_back();
      if (row.empty()) continue;
      json j;
      try {
        j = json::parse(row);
      } catch (const json::exception& e) {
        fail_line(poi_path, line, e.what());
      }
      if (!j.is_object()) fail_line(poi_path, line, "expected a JSON object");

      PoiContent content;
      content.poi.poi_id = require_string(j, "poi_id", poi_path, line);
      content.poi.name = require_string(j, "name", poi_path, line);
      const double lat = require_number(j, "lat", poi_path, line);
      const double lon = require_number(j, "lon", poi_path, line);
      try {
        content.poi.location = GeoPoint::make(lat, lon);
      } catch (const ValidationError& e) {
        fail_line(poi_path, line, e.what());
      }
      content.poi.categories = optional_string_list(j, "categories", poi_path, line);
      if (auto it = j.find("attributes"); it != j.end()) {
        if (!it->is_object()) {
          fail_line(poi_path, line, "field 'attributes' must be an object");
        }
        for (auto& [key, value] : it->items()) {
          if (!value.is_string()) {
            fail_line(poi_path, line, "attribute '" + key + "' must be a string");
          }
          content.poi.attributes.emplace(key, value.get<std::string>());
        }
      }
      content.poi.stars = require_number(j, "stars", poi_path, line);
      if (content.poi.stars < 0.0 || content.poi.stars > 5.0) {
        fail_line(poi_path, line, "stars must be in [0,5]");
      }
      std::string poi_id = content.poi.poi_id;
      if (!by_poi.emplace(poi_id, std::move(content)).second) {
        fail_line(poi_path, line, "duplicate poi_id '" + poi_id + "'");
      }
    }
  }

  {
    std::ifstream in = open_input(review_path);
    std::string row;
    std::size_t line = 0;
    std::set<std::string> seen;
    while (std::getline(in, row)) {
      ++line;
      if (!row.empty() && row.back() == '\r') row.pop_back();
      if (row.empty()) continue;
      json j;
      try {
        j = json::parse(row);
      } catch (const json::exception& e) {
        fail_line(review_path, line, e.what());
      }
      if (!j.is_object()) fail_line(review_path, line, "expected a JSON object");

      Review review;
      review.review_id = require_string(j, "review_id", review_path, line);
      review.poi_id = require_string(j, "poi_id", review_path, line);
      review.timestamp = require_string(j, "timestamp", review_path, line);
      review.text = require_string(j, "text", review_path, line);
      review.image_refs = optional_string_list(j, "image_refs", review_path, line);

      if (!seen.insert(review.review_id).second) {
        fail_line(review_path, line,
                  "duplicate review_id '" + review.review_id + "'");
      }
      auto it = by_poi.find(review.poi_id);
      if (it == by_poi.end()) {
        throw ValidationError("review '" + review.review_id +
                              "' references unknown poi '" + review.poi_id + "'");
      }
      it->second.reviews.push_back(std::move(review));
    }
  }

  std::vector<CbgDemographics> cbgs;
  {
    std::ifstream in = open_input(cbg_path);
    expect_header(in, kCbgHeader, cbg_path);
    std::string row;
    std::size_t line = 1;
    std::set<std::string> seen;
    while (std::getline(in, row)) {
      ++line;
      if (!row.empty() && row.back() == '\r') row.pop_back();
      if (row.empty()) continue;
      const std::vector<std::string> f = split_fields(row);
      if (f.size() != 9) {
        fail_line(cbg_path, line, "expected 9 fields, got " +
                                      std::to_string(f.size()));
      }
      if (f[0].empty()) fail_line(cbg_path, line, "empty cbg_id");
      if (!seen.insert(f[0]).second) {
        fail_line(cbg_path, line, "duplicate cbg_id '" + f[0] + "'");
      }
      const double lat = parse_double(f[1], "lat", cbg_path, line);
      const double lon = parse_double(f[2], "lon", cbg_path, line);
      const std::int64_t population = parse_int(f[3], "population", cbg_path, line);
      if (population <= 0) {
        fail_line(cbg_path, line, "population must be positive to derive shares");
      }
      RacialComposition::Shares counts{};
      for (std::size_t q = 0; q < kGroupCount; ++q) {
        counts[q] = parse_double(f[4 + q], std::string(kGroupNames[q]).c_str(),
                                 cbg_path, line);
      }
      try {
        cbgs.push_back(make_cbg(f[0], GeoPoint::make(lat, lon), population, counts));
      } catch (const ValidationError& e) {
        fail_line(cbg_path, line, e.what());
      }
    }
  }

  std::vector<VisitRecord> visits;
  {
    std::ifstream in = open_input(visit_path);
    expect_header(in, kVisitHeader, visit_path);
    std::string row;
    std::size_t line = 1;
    std::set<std::string> cbg_ids;
    for (const CbgDemographics& c : cbgs) cbg_ids.insert(c.cbg_id);
    while (std::getline(in, row)) {
      ++line;
      if (!row.empty() && row.back() == '\r') row.pop_back();
      if (row.empty()) continue;
      const std::vector<std::string> f = split_fields(row);
      if (f.size() != 4) {
        fail_line(visit_path, line, "expected 4 fields, got " +
                                        std::to_string(f.size()));
      }
      VisitRecord v;
      v.poi_id = f[0];
      v.cbg_id = f[1];
      v.month = f[2];
      v.visit_count = parse_int(f[3], "visit_count", visit_path, line);
      if (v.visit_count < 0) {
        fail_line(visit_path, line, "visit_count must be non-negative");
      }
      if (!valid_month(v.month)) {
        fail_line(visit_path, line, "invalid month '" + v.month + "' (YYYY-MM)");
      }
      if (by_poi.find(v.poi_id) == by_poi.end()) {
        throw ValidationError("visit references unknown poi '" + v.poi_id + "'");
      }
      if (cbg_ids.find(v.cbg_id) == cbg_ids.end()) {
        throw ValidationError("visit references unknown cbg '" + v.cbg_id + "'");
      }
      visits.push_back(std::move(v));
    }
  }

  IngestResult result;
  for (auto& [poi_id, content] : by_poi) {
    if (content.reviews.size() < min_reviews) {
      ++result.dropped_pois;
      continue;
    }
    std::sort(content.reviews.begin(), content.reviews.end(),
              [](const Review& a, const Review& b) {
                return std::tie(a.timestamp, a.review_id) <
                       std::tie(b.timestamp, b.review_id);
              });
    result.corpus.pois.push_back(std::move(content));
  }
  // by_poi is a std::map, so pois are already sorted by poi_id.

  std::sort(cbgs.begin(), cbgs.end(),
            [](const CbgDemographics& a, const CbgDemographics& b) {
              return a.cbg_id < b.cbg_id;
            });
  result.corpus.cbgs = std::move(cbgs);

  for (VisitRecord& v : visits) {
    if (result.corpus.find_poi(v.poi_id)) {
      result.corpus.visits.push_back(std::move(v));
    }
  }
  std::sort(result.corpus.visits.begin(), result.corpus.visits.end(),
            [](const VisitRecord& a, const VisitRecord& b) {
              return std::tie(a.poi_id, a.cbg_id, a.month, a.visit_count) <
                     std::tie(b.poi_id, b.cbg_id, b.month, b.visit_count);
            });

  if (!result.corpus.cbgs.empty()) {
    bool any_population = false;
    for (const CbgDemographics& c : result.corpus.cbgs) {
      if (c.population > 0) any_population = true;
    }
    if (any_population) {
      result.corpus.city_composition = city_composition(result.corpus.cbgs);
    }
  }
  return result;
}

void save_labels(const std::vector<SegregationLabel>& labels,
                 const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << kLabelHeader << '\n';
  for (const SegregationLabel& l : labels) {
    out << l.poi_id << ',' << canonical_double(l.value) << ','
        << canonical_double(l.k_used);
    for (std::size_t q = 0; q < kGroupCount; ++q) {
      out << ',' << canonical_double(l.visitor_composition[q]);
    }
    out << '\n';
  }
}

std::vector<SegregationLabel> load_labels(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  expect_header(in, kLabelHeader, path);
  std::vector<SegregationLabel> labels;
  std::string row;
  std::size_t line = 1;
  while (std::getline(in, row)) {
    ++line;
    if (!row.empty() && row.back() == '\r') row.pop_back();
    if (row.empty()) continue;
    const std::vector<std::string> f = split_fields(row);
    if (f.size() != 8) {
      fail_line(path, line, "expected 8 fields, got " + std::to_string(f.size()));
    }
    SegregationLabel l;
    l.poi_id = f[0];
    l.value = parse_double(f[1], "segregation", path, line);
    l.k_used = parse_double(f[2], "k_used", path, line);
    RacialComposition::Shares tau{};
    for (std::size_t q = 0; q < kGroupCount; ++q) {
      tau[q] = parse_double(f[3 + q], "tau", path, line);
    }
    try {
      l.visitor_composition = RacialComposition::from_shares(tau);
    } catch (const ValidationError& e) {
      fail_line(path, line, e.what());
    }
    if (l.value < 0.0 || l.value > 1.0) {
      fail_line(path, line, "segregation must be in [0,1]");
    }
    labels.push_back(std::move(l));
  }
  std::sort(labels.begin(), labels.end(),
            [](const SegregationLabel& a, const SegregationLabel& b) {
              return a.poi_id < b.poi_id;
            });
  return labels;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  {
    std::ofstream out = open_output(dir / "pois.jsonl");
    for (const PoiContent& content : corpus.pois) {
      json j;
      j["poi_id"] = content.poi.poi_id;
      j["name"] = content.poi.name;
      j["lat"] = content.poi.location.lat;
      j["lon"] = content.poi.location.lon;
      j["categories"] = content.poi.categories;
      j["attributes"] = content.poi.attributes;
      j["stars"] = content.poi.stars;
      out << j.dump() << '\n';
    }
  }

  {
    std::ofstream out = open_output(dir / "reviews.jsonl");
    for (const PoiContent& content : corpus.pois) {
      for (const Review& r : content.reviews) {
        json j;
        j["review_id"] = r.review_id;
        j["poi_id"] = r.poi_id;
        j["timestamp"] = r.timestamp;
        j["text"] = r.text;
        j["image_refs"] = r.image_refs;
        out << j.dump() << '\n';
      }
    }
  }

  {
    std::ofstream out = open_output(dir / "cbgs.csv");
    out << kCbgHeader << '\n';
    for (const CbgDemographics& c : corpus.cbgs) {
      out << c.cbg_id << ',' << canonical_double(c.centroid.lat) << ','
          << canonical_double(c.centroid.lon) << ',' << c.population;
      for (std::size_t q = 0; q < kGroupCount; ++q) {
        out << ',' << canonical_double(c.group_counts[q]);
      }
      out << '\n';
    }
  }

  {
    std::ofstream out = open_output(dir / "visits.csv");
    out << kVisitHeader << '\n';
    for (const VisitRecord& v : corpus.visits) {
      out << v.poi_id << ',' << v.cbg_id << ',' << v.month << ','
          << v.visit_count << '\n';
    }
  }

  if (corpus.labeled) {
    save_labels(corpus.labels, dir / "labels.csv");
  }
}

Corpus load_corpus(const std::filesystem::path& dir, std::size_t min_reviews) {
  IngestResult result =
      ingest_corpus(dir / "pois.jsonl", dir / "reviews.jsonl", dir / "cbgs.csv",
                    dir / "visits.csv", min_reviews);
  const std::filesystem::path label_path = dir / "labels.csv";
  if (std::filesystem::exists(label_path)) {
    result.corpus.labels = load_labels(label_path);
    result.corpus.labeled = true;
  }
  return std::move(result.corpus);
}

}  // namespace reem
