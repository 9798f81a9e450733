#include "doctest.h"

#include <string>

#include "reem/corpus.hpp"
#include "reem/errors.hpp"
#include "reem/segregation.hpp"

#include "test_util.hpp"

using namespace reem;
using testutil::TempDir;
using testutil::read_file;
using testutil::write_file;

namespace {

// Three POIs; p3 has only 4 reviews and is dropped at the default floor.
void write_fixture(const TempDir& dir) {
  std::string pois;
  pois += R"({"poi_id":"p1","name":"Cafe One","lat":39.95,"lon":-75.16,"categories":["cafe"],"attributes":{"price":"2"},"stars":4.5})" "\n";
  pois += R"({"poi_id":"p2","name":"Diner Two","lat":39.96,"lon":-75.17,"categories":[],"attributes":{},"stars":3.0})" "\n";
  pois += R"({"poi_id":"p3","name":"Bar Three","lat":39.97,"lon":-75.18,"categories":["bar"],"attributes":{},"stars":2.5})" "\n";
  write_file(dir.file("pois.jsonl"), pois);

  std::string reviews;
  for (int i = 0; i < 5; ++i) {
    reviews += R"({"review_id":"r1_)" + std::to_string(i) +
               R"(","poi_id":"p1","timestamp":"2023-0)" + std::to_string(i + 1) +
               R"(-01T10:00:00","text":"nice place )" + std::to_string(i) +
               R"(","image_refs":[]})" "\n";
  }
  for (int i = 0; i < 6; ++i) {
    reviews += R"({"review_id":"r2_)" + std::to_string(i) +
               R"(","poi_id":"p2","timestamp":"2023-0)" + std::to_string(i + 1) +
               R"(-02T11:00:00","text":"greasy spoon )" + std::to_string(i) +
               R"(","image_refs":["a photo of pancakes"]})" "\n";
  }
  for (int i = 0; i < 4; ++i) {
    reviews += R"({"review_id":"r3_)" + std::to_string(i) +
               R"(","poi_id":"p3","timestamp":"2023-0)" + std::to_string(i + 1) +
               R"(-03T12:00:00","text":"loud bar )" + std::to_string(i) +
               R"(","image_refs":[]})" "\n";
  }
  write_file(dir.file("reviews.jsonl"), reviews);

  write_file(dir.file("cbgs.csv"),
             "cbg_id,lat,lon,population,hispanic,black,asian,white,others\n"
             "c1,39.95,-75.16,1000,500,300,100,80,20\n"
             "c2,39.96,-75.17,2000,200,800,400,500,100\n");

  write_file(dir.file("visits.csv"),
             "poi_id,cbg_id,month,visit_count\n"
             "p1,c1,2023-01,40\n"
             "p1,c2,2023-02,10\n"
             "p2,c2,2023-01,25\n"
             "p3,c1,2023-01,5\n");
}

IngestResult ingest(const TempDir& dir, std::size_t min_reviews = 5) {
  return ingest_corpus(dir.file("pois.jsonl"), dir.file("reviews.jsonl"),
                       dir.file("cbgs.csv"), dir.file("visits.csv"),
                       min_reviews);
}

}  // namespace

TEST_CASE("ingest drops pois below the review floor") {
  TempDir dir;
  write_fixture(dir);
  const IngestResult result = ingest(dir);
  CHECK(result.dropped_pois == 1);
  REQUIRE(result.corpus.pois.size() == 2);
  CHECK(result.corpus.pois[0].poi.poi_id == "p1");
  CHECK(result.corpus.pois[1].poi.poi_id == "p2");
  CHECK(result.corpus.find_poi("p3") == nullptr);
  // Visits to the dropped POI go with it.
  for (const VisitRecord& v : result.corpus.visits) CHECK(v.poi_id != "p3");
  CHECK(result.corpus.visits.size() == 3);
}

TEST_CASE("ingest populates records and sorts reviews by time") {
  TempDir dir;
  write_fixture(dir);
  const Corpus corpus = ingest(dir).corpus;

  const PoiContent* p1 = corpus.find_poi("p1");
  REQUIRE(p1 != nullptr);
  CHECK(p1->poi.name == "Cafe One");
  CHECK(p1->poi.stars == 4.5);
  CHECK(p1->poi.attributes.at("price") == "2");
  CHECK_FALSE(p1->has_images());
  REQUIRE(p1->reviews.size() == 5);
  CHECK(p1->reviews.front().timestamp <= p1->reviews.back().timestamp);

  const PoiContent* p2 = corpus.find_poi("p2");
  REQUIRE(p2 != nullptr);
  CHECK(p2->has_images());

  const CbgDemographics* c1 = corpus.find_cbg("c1");
  REQUIRE(c1 != nullptr);
  CHECK(c1->population == 1000);
  CHECK(c1->composition.share(Group::Hispanic) == doctest::Approx(0.5));

  // City composition is population-weighted over both CBGs.
  CHECK(corpus.city_composition.share(Group::Hispanic) ==
        doctest::Approx((500.0 + 200.0) / 3000.0));
}

TEST_CASE("malformed rows are reported with their line number") {
  TempDir dir;
  write_fixture(dir);

  SUBCASE("broken json line") {
    write_file(dir.file("pois.jsonl"),
               R"({"poi_id":"p1","name":"A","lat":1,"lon":2,"stars":3})" "\n"
               "{not json\n");
    try {
      ingest(dir, 0);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }

  SUBCASE("cbg shares summing to 0.8") {
    write_file(dir.file("cbgs.csv"),
               "cbg_id,lat,lon,population,hispanic,black,asian,white,others\n"
               "c1,39.95,-75.16,1000,500,300,100,80,20\n"
               "c2,39.96,-75.17,1000,200,200,200,200,0\n");
    try {
      ingest(dir);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("cbgs.csv") != std::string::npos);
      CHECK(msg.find("line 3") != std::string::npos);
    }
  }

  SUBCASE("stars out of range") {
    write_file(dir.file("pois.jsonl"),
               R"({"poi_id":"p1","name":"A","lat":1,"lon":2,"stars":5.5})" "\n");
    CHECK_THROWS_AS(ingest(dir, 0), IoError);
  }

  SUBCASE("bad month") {
    write_file(dir.file("visits.csv"),
               "poi_id,cbg_id,month,visit_count\n"
               "p1,c1,2023-13,40\n");
    CHECK_THROWS_AS(ingest(dir), IoError);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(ingest_corpus(dir.file("nope.jsonl"),
                                  dir.file("reviews.jsonl"),
                                  dir.file("cbgs.csv"), dir.file("visits.csv")),
                    IoError);
  }
}

TEST_CASE("dangling references are rejected") {
  TempDir dir;
  write_fixture(dir);

  SUBCASE("review referencing unknown poi") {
    write_file(dir.file("reviews.jsonl"),
               R"({"review_id":"rx","poi_id":"ghost","timestamp":"2023-01-01","text":"hi","image_refs":[]})" "\n");
    CHECK_THROWS_AS(ingest(dir, 0), ValidationError);
  }

  SUBCASE("visit referencing unknown cbg") {
    write_file(dir.file("visits.csv"),
               "poi_id,cbg_id,month,visit_count\n"
               "p1,ghost,2023-01,40\n");
    CHECK_THROWS_AS(ingest(dir), ValidationError);
  }

  SUBCASE("visit referencing unknown poi") {
    write_file(dir.file("visits.csv"),
               "poi_id,cbg_id,month,visit_count\n"
               "ghost,c1,2023-01,40\n");
    CHECK_THROWS_AS(ingest(dir), ValidationError);
  }
}

TEST_CASE("save then load then save is byte-identical") {
  TempDir dir;
  write_fixture(dir);
  Corpus corpus = ingest(dir).corpus;

  // Attach labels so labels.csv participates in the round trip.
  const LabelingResult labeling = label_corpus(corpus);
  corpus.labels = labeling.labels;
  corpus.labeled = true;

  TempDir out1;
  TempDir out2;
  save_corpus(corpus, out1.path);
  const Corpus reloaded = load_corpus(out1.path);
  CHECK(reloaded.labeled);
  CHECK(reloaded.pois.size() == corpus.pois.size());
  save_corpus(reloaded, out2.path);

  for (const char* name :
       {"pois.jsonl", "reviews.jsonl", "cbgs.csv", "visits.csv", "labels.csv"}) {
    CAPTURE(name);
    const std::string a = read_file(out1.file(name));
    const std::string b = read_file(out2.file(name));
    CHECK(a == b);
    CHECK_FALSE(a.empty());
  }
}

TEST_CASE("labels round-trip through csv") {
  TempDir dir;
  write_fixture(dir);
  const Corpus corpus = ingest(dir).corpus;
  const LabelingResult labeling = label_corpus(corpus);
  REQUIRE_FALSE(labeling.labels.empty());

  save_labels(labeling.labels, dir.file("labels.csv"));
  const auto loaded = load_labels(dir.file("labels.csv"));
  REQUIRE(loaded.size() == labeling.labels.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].poi_id == labeling.labels[i].poi_id);
    CHECK(loaded[i].value == labeling.labels[i].value);
    CHECK(loaded[i].k_used == labeling.labels[i].k_used);
    CHECK(loaded[i].visitor_composition.almost_equal(
        labeling.labels[i].visitor_composition, 0.0));
  }
}
