#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "reem/errors.hpp"
#include "reem/rng.hpp"
#include "reem/segregation.hpp"

using namespace reem;

namespace {

CbgDemographics cbg_at(const std::string& id, double lat, double lon,
                       std::int64_t pop, RacialComposition::Shares shares) {
  RacialComposition::Shares counts{};
  for (std::size_t q = 0; q < kGroupCount; ++q) {
    counts[q] = shares[q] * static_cast<double>(pop);
  }
  return make_cbg(id, GeoPoint::make(lat, lon), pop, counts);
}

double lat_offset(double meters) {
  return meters / (kEarthRadiusMeters * M_PI / 180.0);
}

RacialComposition random_composition(DetRng& rng) {
  RacialComposition::Shares s{};
  double sum = 0.0;
  for (double& v : s) {
    v = -std::log(rng.uniform01() + 1e-300);
    sum += v;
  }
  for (double& v : s) v /= sum;
  return RacialComposition::from_shares(s);
}

}  // namespace

TEST_CASE("visitor composition weights cbg compositions by visits") {
  const std::vector<CbgDemographics> cbgs = {
      cbg_at("a", 39.95, -75.16, 1000, {1, 0, 0, 0, 0}),
      cbg_at("b", 39.96, -75.17, 1000, {0, 1, 0, 0, 0}),
  };

  SUBCASE("single source") {
    const std::vector<VisitRecord> visits = {{"p", "a", "2023-01", 20}};
    const auto tau = visitor_composition(visits, cbgs, "p");
    CHECK(tau.share(Group::Hispanic) == doctest::Approx(1.0));
  }

  SUBCASE("10 and 30 visits weight 1:3") {
    const std::vector<VisitRecord> visits = {{"p", "a", "2023-01", 10},
                                             {"p", "b", "2023-01", 30}};
    const auto tau = visitor_composition(visits, cbgs, "p");
    CHECK(tau.share(Group::Hispanic) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(tau.share(Group::Black) == doctest::Approx(0.75).epsilon(1e-12));
  }

  SUBCASE("months aggregate like a single total") {
    std::vector<VisitRecord> monthly;
    for (int m = 1; m <= 12; ++m) {
      char month[8];
      std::snprintf(month, sizeof(month), "2023-%02d", m);
      monthly.push_back({"p", "a", month, 2});
      monthly.push_back({"p", "b", month, 6});
    }
    const auto split = visitor_composition(monthly, cbgs, "p");
    const std::vector<VisitRecord> lump = {{"p", "a", "2023-01", 24},
                                           {"p", "b", "2023-01", 72}};
    const auto total = visitor_composition(lump, cbgs, "p");
    CHECK(split.almost_equal(total, 1e-12));
  }

  SUBCASE("zero total visits is an error") {
    const std::vector<VisitRecord> visits = {{"p", "a", "2023-01", 0}};
    CHECK_THROWS_AS(visitor_composition(visits, cbgs, "p"), ValidationError);
    CHECK_THROWS_AS(visitor_composition(visits, cbgs, "q"), ValidationError);
  }

  SUBCASE("unknown cbg is an error") {
    const std::vector<VisitRecord> visits = {{"p", "ghost", "2023-01", 5}};
    CHECK_THROWS_AS(visitor_composition(visits, cbgs, "p"), ValidationError);
  }
}

TEST_CASE("city composition is population-weighted") {
  SUBCASE("single cbg") {
    const std::vector<CbgDemographics> cbgs = {
        cbg_at("a", 39.95, -75.16, 1200, {0.5, 0.2, 0.1, 0.1, 0.1})};
    CHECK(city_composition(cbgs).almost_equal(cbgs[0].composition, 1e-12));
  }

  SUBCASE("1000 vs 3000 weighting") {
    const std::vector<CbgDemographics> cbgs = {
        cbg_at("a", 39.95, -75.16, 1000, {1, 0, 0, 0, 0}),
        cbg_at("b", 39.96, -75.17, 3000, {0, 1, 0, 0, 0}),
    };
    const auto t = city_composition(cbgs);
    CHECK(t.share(Group::Hispanic) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(t.share(Group::Black) == doctest::Approx(0.75).epsilon(1e-12));
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(city_composition({}), ValidationError);
    CbgDemographics zero;
    zero.cbg_id = "a";
    zero.centroid = GeoPoint::make(39.95, -75.16);
    zero.population = 0;
    CHECK_THROWS_AS(city_composition({zero}), ValidationError);
  }
}

TEST_CASE("segregation index matches the frozen extremal cases") {
  SUBCASE("tau equals city") {
    const auto t = RacialComposition::from_shares({0.3, 0.3, 0.2, 0.1, 0.1});
    const IndexResult r = segregation_index(t, t);
    CHECK(r.value == doctest::Approx(0.0));
  }

  SUBCASE("all mass on one group under a uniform city") {
    const auto t = RacialComposition::from_shares({0.2, 0.2, 0.2, 0.2, 0.2});
    const auto tau = RacialComposition::from_shares({1, 0, 0, 0, 0});
    const IndexResult r = segregation_index(tau, t);
    CHECK(r.k == doctest::Approx(0.625).epsilon(1e-12));
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("all mass on the min-share group") {
    const auto t = RacialComposition::from_shares({0.5, 0.3, 0.1, 0.05, 0.05});
    const auto tau = RacialComposition::from_shares({0, 0, 0, 0, 1});
    const IndexResult r = segregation_index(tau, t);
    CHECK(r.k == doctest::Approx(1.0 / 1.9).epsilon(1e-12));
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("loose half normalization") {
    const auto t = RacialComposition::from_shares({0.5, 0.3, 0.1, 0.05, 0.05});
    const auto tau = RacialComposition::from_shares({0, 0, 0, 0, 1});
    const IndexResult r = segregation_index(tau, t, KNormalization::Half);
    CHECK(r.k == 0.5);
    CHECK(r.value == doctest::Approx(0.95).epsilon(1e-12));
  }
}

TEST_CASE("segregation index properties hold on random pairs") {
  DetRng rng(123);
  for (int i = 0; i < 10000; ++i) {
    const auto tau = random_composition(rng);
    const auto t = random_composition(rng);
    const IndexResult r = segregation_index(tau, t);
    CHECK(r.value >= 0.0);
    CHECK(r.value <= 1.0 + 1e-12);

    // Zero exactly when the compositions coincide.
    if (!tau.almost_equal(t, 1e-12)) {
      CHECK(r.value > 0.0);
    }
    CHECK(segregation_index(t, t).value == 0.0);

    // Jointly permuting the groups leaves the index unchanged.
    std::array<std::size_t, kGroupCount> perm = {4, 2, 0, 3, 1};
    RacialComposition::Shares tau_p{};
    RacialComposition::Shares t_p{};
    for (std::size_t q = 0; q < kGroupCount; ++q) {
      tau_p[q] = tau[perm[q]];
      t_p[q] = t[perm[q]];
    }
    const IndexResult rp =
        segregation_index(RacialComposition::from_shares(tau_p),
                          RacialComposition::from_shares(t_p));
    CHECK(rp.value == doctest::Approx(r.value).epsilon(1e-12));
  }
}

TEST_CASE("population feature aggregates within the radius") {
  PoiRecord poi;
  poi.poi_id = "p";
  poi.name = "spot";
  poi.location = GeoPoint::make(39.95, -75.16);

  SUBCASE("one cbg inside") {
    const std::vector<CbgDemographics> cbgs = {cbg_at(
        "a", 39.95 + lat_offset(300), -75.16, 1000, {0.5, 0.2, 0.1, 0.1, 0.1})};
    const PopulationFeature f = population_feature(poi, cbgs);
    CHECK_FALSE(f.fallback);
    CHECK(f.composition.almost_equal(cbgs[0].composition, 1e-12));
  }

  SUBCASE("two cbgs weighted by population") {
    const std::vector<CbgDemographics> cbgs = {
        cbg_at("a", 39.95 + lat_offset(200), -75.16, 1000, {1, 0, 0, 0, 0}),
        cbg_at("b", 39.95 + lat_offset(400), -75.16, 3000, {0, 1, 0, 0, 0}),
    };
    const PopulationFeature f = population_feature(poi, cbgs);
    CHECK_FALSE(f.fallback);
    CHECK(f.composition.share(Group::Hispanic) ==
          doctest::Approx(0.25).epsilon(1e-12));
    CHECK(f.composition.share(Group::Black) ==
          doctest::Approx(0.75).epsilon(1e-12));
  }

  SUBCASE("empty radius falls back to nearest, flagged") {
    const std::vector<CbgDemographics> cbgs = {
        cbg_at("far", 39.95 + lat_offset(800), -75.16, 1000,
               {0.5, 0.2, 0.1, 0.1, 0.1}),
        cbg_at("farther", 39.95 + lat_offset(1500), -75.16, 4000,
               {0.1, 0.2, 0.3, 0.2, 0.2}),
    };
    const PopulationFeature f = population_feature(poi, cbgs);
    CHECK(f.fallback);
    CHECK(f.composition.almost_equal(cbgs[0].composition, 1e-12));
  }

  SUBCASE("no cbgs is an error") {
    CHECK_THROWS_AS(population_feature(poi, {}), ValidationError);
  }
}

TEST_CASE("label_corpus labels exactly the visited pois") {
  Corpus corpus;
  for (const char* id : {"p1", "p2", "p3"}) {
    PoiContent content;
    content.poi.poi_id = id;
    content.poi.name = id;
    content.poi.location = GeoPoint::make(39.95, -75.16);
    corpus.pois.push_back(std::move(content));
  }
  corpus.cbgs = {
      cbg_at("a", 39.95, -75.16, 1000, {1, 0, 0, 0, 0}),
      cbg_at("b", 39.96, -75.17, 1000, {0, 0.5, 0.5, 0, 0}),
  };
  corpus.visits = {
      {"p1", "a", "2023-01", 10},
      {"p1", "b", "2023-02", 10},
      {"p2", "b", "2023-05", 7},
  };

  const LabelingResult result = label_corpus(corpus);
  REQUIRE(result.labels.size() == 2);
  CHECK(result.labels[0].poi_id == "p1");
  CHECK(result.labels[1].poi_id == "p2");
  for (const SegregationLabel& l : result.labels) {
    CHECK(l.value >= 0.0);
    CHECK(l.value <= 1.0);
    CHECK(l.k_used > 0.0);
  }

  SUBCASE("month window restricts the aggregate") {
    const LabelingResult windowed =
        label_corpus(corpus, KNormalization::Tight, std::string("2023-01"),
                     std::string("2023-03"));
    REQUIRE(windowed.labels.size() == 1);
    CHECK(windowed.labels[0].poi_id == "p1");
  }
}

TEST_CASE("cov_by_cbg computes sample-std over mean per cbg") {
  Corpus corpus;
  corpus.cbgs = {
      cbg_at("near", 39.95, -75.16, 1000, {0.2, 0.2, 0.2, 0.2, 0.2}),
      cbg_at("far", 39.99, -75.16, 1000, {0.2, 0.2, 0.2, 0.2, 0.2}),
  };
  // Three POIs nearest to "near" with stars 2, 4, 6; two POIs at "far".
  const double stars_near[] = {2, 4, 6};
  for (int i = 0; i < 3; ++i) {
    PoiContent c;
    c.poi.poi_id = "n" + std::to_string(i);
    c.poi.name = c.poi.poi_id;
    c.poi.location = GeoPoint::make(39.95, -75.16);
    c.poi.stars = stars_near[i];
    corpus.pois.push_back(std::move(c));
  }
  for (int i = 0; i < 2; ++i) {
    PoiContent c;
    c.poi.poi_id = "f" + std::to_string(i);
    c.poi.name = c.poi.poi_id;
    c.poi.location = GeoPoint::make(39.99, -75.16);
    c.poi.stars = 3;
    corpus.pois.push_back(std::move(c));
  }
  std::sort(corpus.pois.begin(), corpus.pois.end(),
            [](const PoiContent& a, const PoiContent& b) {
              return a.poi.poi_id < b.poi.poi_id;
            });

  const auto cov = cov_by_cbg(corpus, CovFeature::Stars);
  // The two-POI cbg is excluded by the minimum-count rule.
  REQUIRE(cov.size() == 1);
  CHECK(cov[0].cbg_id == "near");
  CHECK(cov[0].poi_count == 3);
  CHECK(cov[0].cov == doctest::Approx(0.5).epsilon(1e-12));

  SUBCASE("identical values give zero cov") {
    for (PoiContent& c : corpus.pois) c.poi.stars = 3;
    const auto flat = cov_by_cbg(corpus, CovFeature::Stars);
    REQUIRE(flat.size() == 1);
    CHECK(flat[0].cov == doctest::Approx(0.0));
  }
}

TEST_CASE("split_dataset allocates floors with remainder to train") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("p" + std::to_string(i));

  const DatasetSplit s10 = split_dataset(ids, {0.6, 0.2, 0.2}, 99);
  CHECK(s10.train.size() == 6);
  CHECK(s10.val.size() == 2);
  CHECK(s10.test.size() == 2);

  ids.push_back("p10");
  const DatasetSplit s11 = split_dataset(ids, {0.6, 0.2, 0.2}, 99);
  CHECK(s11.train.size() == 7);
  CHECK(s11.val.size() == 2);
  CHECK(s11.test.size() == 2);

  SUBCASE("same seed reproduces the split") {
    const DatasetSplit again = split_dataset(ids, {0.6, 0.2, 0.2}, 99);
    CHECK(again.train == s11.train);
    CHECK(again.val == s11.val);
    CHECK(again.test == s11.test);
  }

  SUBCASE("partition covers the input exactly once") {
    std::set<std::string> all;
    for (const auto& part : {s11.train, s11.val, s11.test}) {
      for (const std::string& id : part) {
        CHECK(all.insert(id).second);
      }
    }
    CHECK(all.size() == ids.size());
  }

  SUBCASE("input order does not matter") {
    std::vector<std::string> shuffled = ids;
    std::reverse(shuffled.begin(), shuffled.end());
    const DatasetSplit again = split_dataset(shuffled, {0.6, 0.2, 0.2}, 99);
    CHECK(again.train == s11.train);
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(split_dataset({"a", "b"}, {0.6, 0.2, 0.2}, 1),
                    ValidationError);
    CHECK_THROWS_AS(split_dataset(ids, {0.5, 0.2, 0.2}, 1), ValidationError);
  }
}
