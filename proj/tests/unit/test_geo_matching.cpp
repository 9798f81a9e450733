#include "doctest.h"

#include <cmath>

#include "reem/errors.hpp"
#include "reem/geo.hpp"
#include "reem/matching.hpp"
#include "reem/rng.hpp"

using namespace reem;

namespace {

// Meters of northward offset expressed in degrees of latitude.
double lat_offset(double meters) {
  return meters / (kEarthRadiusMeters * M_PI / 180.0);
}

}  // namespace

TEST_CASE("geopoint bounds are enforced") {
  CHECK_NOTHROW(GeoPoint::make(90.0, 180.0));
  CHECK_NOTHROW(GeoPoint::make(-90.0, -180.0));
  CHECK_THROWS_AS(GeoPoint::make(90.5, 0.0), ValidationError);
  CHECK_THROWS_AS(GeoPoint::make(0.0, -180.5), ValidationError);
  CHECK_THROWS_AS(GeoPoint::make(std::nan(""), 0.0), ValidationError);
}

TEST_CASE("haversine distance matches frozen references") {
  const GeoPoint a = GeoPoint::make(39.9526, -75.1652);
  CHECK(haversine_meters(a, a) == 0.0);

  const GeoPoint b = GeoPoint::make(39.9536, -75.1652);
  CHECK(haversine_meters(a, b) == doctest::Approx(111.2).epsilon(0.001));

  const GeoPoint origin = GeoPoint::make(0.0, 0.0);
  const GeoPoint antipode = GeoPoint::make(0.0, 180.0);
  CHECK(haversine_meters(origin, antipode) ==
        doctest::Approx(2.0015e7).epsilon(5e-5));
}

TEST_CASE("haversine is symmetric and non-negative") {
  DetRng rng(7);
  for (int i = 0; i < 500; ++i) {
    const GeoPoint a = GeoPoint::make(rng.uniform(-90, 90), rng.uniform(-180, 180));
    const GeoPoint b = GeoPoint::make(rng.uniform(-90, 90), rng.uniform(-180, 180));
    const double d1 = haversine_meters(a, b);
    const double d2 = haversine_meters(b, a);
    CHECK(d1 >= 0.0);
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-12));
  }
}

TEST_CASE("name normalization folds case and whitespace") {
  CHECK(normalize_name("  JOE'S   Pizza ") == "joe's pizza");
  CHECK(normalize_name("Cafe\tRoma\n") == "cafe roma");
  CHECK(normalize_name("") == "");
  CHECK(normalize_name("   ") == "");
}

namespace {

PoiRecord place(std::string id, std::string name, GeoPoint at) {
  PoiRecord p;
  p.poi_id = std::move(id);
  p.name = std::move(name);
  p.location = at;
  return p;
}

}  // namespace

TEST_CASE("pois match on equal names within 200 meters") {
  const GeoPoint base = GeoPoint::make(39.95, -75.16);

  SUBCASE("150 m apart matches") {
    std::vector<PoiRecord> social = {place("s1", "Joe's Pizza", base)};
    std::vector<PoiRecord> mobility = {place(
        "m1", "joe's pizza", GeoPoint::make(base.lat + lat_offset(150), base.lon))};
    const auto matches = match_pois(social, mobility);
    REQUIRE(matches.size() == 1);
    CHECK(matches.at("s1") == "m1");
  }

  SUBCASE("250 m apart does not match") {
    std::vector<PoiRecord> social = {place("s1", "Joe's Pizza", base)};
    std::vector<PoiRecord> mobility = {place(
        "m1", "joe's pizza", GeoPoint::make(base.lat + lat_offset(250), base.lon))};
    CHECK(match_pois(social, mobility).empty());
  }

  SUBCASE("different names never match") {
    std::vector<PoiRecord> social = {place("s1", "Joe's Pizza", base)};
    std::vector<PoiRecord> mobility = {place("m1", "Joes Pizza", base)};
    CHECK(match_pois(social, mobility).empty());
  }

  SUBCASE("nearest candidate wins") {
    std::vector<PoiRecord> social = {place("s1", "Joe's Pizza", base)};
    std::vector<PoiRecord> mobility = {
        place("m_far", "Joe's Pizza",
              GeoPoint::make(base.lat + lat_offset(120), base.lon)),
        place("m_near", "Joe's Pizza",
              GeoPoint::make(base.lat + lat_offset(50), base.lon)),
    };
    const auto matches = match_pois(social, mobility);
    REQUIRE(matches.size() == 1);
    CHECK(matches.at("s1") == "m_near");
  }

  SUBCASE("distance tie goes to the smaller id") {
    std::vector<PoiRecord> social = {place("s1", "Joe's Pizza", base)};
    const GeoPoint spot = GeoPoint::make(base.lat + lat_offset(50), base.lon);
    std::vector<PoiRecord> mobility = {place("m_b", "Joe's Pizza", spot),
                                       place("m_a", "Joe's Pizza", spot)};
    const auto matches = match_pois(social, mobility);
    REQUIRE(matches.size() == 1);
    CHECK(matches.at("s1") == "m_a");
  }
}

TEST_CASE("matched pair set is identical under list swap") {
  DetRng rng(11);
  std::vector<PoiRecord> left;
  std::vector<PoiRecord> right;
  const std::vector<std::string> names = {"alpha", "beta", "gamma", "delta"};
  for (int i = 0; i < 20; ++i) {
    const GeoPoint p =
        GeoPoint::make(39.9 + rng.uniform(0, 0.01), -75.2 + rng.uniform(0, 0.01));
    left.push_back(place("L" + std::to_string(i), names[i % names.size()], p));
  }
  for (int i = 0; i < 20; ++i) {
    const GeoPoint p =
        GeoPoint::make(39.9 + rng.uniform(0, 0.01), -75.2 + rng.uniform(0, 0.01));
    right.push_back(place("R" + std::to_string(i), names[i % names.size()], p));
  }

  const auto forward = match_pois(left, right);
  const auto backward = match_pois(right, left);

  // Forward matches nearest-candidate per left POI; the pair set must agree
  // with the reversed run when the relation is flipped.
  std::size_t mirrored = 0;
  for (const auto& [l, r] : forward) {
    auto it = backward.find(r);
    if (it != backward.end() && it->second == l) ++mirrored;
  }
  CHECK(mirrored == forward.size());
  CHECK(backward.size() == forward.size());
}
