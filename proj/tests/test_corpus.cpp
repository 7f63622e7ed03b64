#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "serendip/corpus.hpp"
#include "serendip/synthetic.hpp"
#include "test_util.hpp"

using namespace serendip;
using testutil::TempDir;
using testutil::write_lines;

static std::string item_row(const std::string& id, const std::vector<double>& vec,
                            double traffic = 1.0) {
  json j{{"item_id", id},
         {"title", "some title " + id},
         {"topic_vector", vec},
         {"traffic_weight", traffic},
         {"frame_captions", json::array()}};
  return j.dump();
}

TEST_CASE("load_items accepts valid rows and normalizes vectors") {
  TempDir dir;
  auto path = dir.file("items.jsonl");
  write_lines(path, {item_row("a", {1, 0, 0, 0, 0, 0, 0, 0}),
                     item_row("b", {0, 1, 0, 0, 0, 0, 0, 0}),
                     item_row("c", {1, 1, 0, 0, 0, 0, 0, 0})});
  auto catalog = load_items(path, 8);
  REQUIRE(catalog.size() == 3);
  for (const auto& [id, item] : catalog.items()) {
    double norm = 0;
    for (double x : item.topic_vector) norm += x * x;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
  }
}

TEST_CASE("load_items rejects duplicates, first wins") {
  TempDir dir;
  auto path = dir.file("items.jsonl");
  write_lines(path, {item_row("a", {1, 0}, 5.0), item_row("b", {0, 1}),
                     item_row("a", {0, 1}, 99.0), item_row("c", {1, 1})});
  auto catalog = load_items(path, 2);
  REQUIRE(catalog.size() == 3);
  CHECK(catalog.ingest_stats().rejected == 1);
  CHECK(catalog.at("a").traffic_weight == 5.0);  // first row kept
}

TEST_CASE("load_items scales a norm-2 vector by 0.5 component-wise") {
  // oracle: hand-scale the input and compare
  TempDir dir;
  auto path = dir.file("items.jsonl");
  std::vector<double> raw = {2.0, 0.0, 0.0, 0.0};  // norm 2
  write_lines(path, {item_row("a", raw)});
  auto catalog = load_items(path, 4);
  const auto& stored = catalog.at("a").topic_vector;
  for (std::size_t i = 0; i < raw.size(); ++i)
    CHECK(stored[i] == Catch::Approx(raw[i] * 0.5).margin(1e-12));
}

TEST_CASE("load_items error paths") {
  TempDir dir;
  CHECK_THROWS_AS(load_items(dir.file("missing.jsonl"), 4), DataError);

  auto path = dir.file("items.jsonl");
  write_lines(path, {item_row("a", {1, 0, 0})});  // wrong dimension, D=4
  CHECK_THROWS_AS(load_items(path, 4), DataError);  // zero valid rows
}

TEST_CASE("accepted plus rejected equals total input rows") {
  TempDir dir;
  auto path = dir.file("items.jsonl");
  write_lines(path, {item_row("a", {1, 0}), item_row("b", {1, 0, 0}),
                     item_row("a", {0, 1}), item_row("c", {0, 1})});
  auto catalog = load_items(path, 2);
  CHECK(catalog.ingest_stats().accepted + catalog.ingest_stats().rejected == 4);
}

TEST_CASE("item file round-trips through serialize/load") {
  SyntheticConfig cfg;
  cfg.n_items = 50;
  auto catalog = generate_items(cfg);
  TempDir dir;
  auto path = dir.file("items.jsonl");
  store_items(catalog, path);
  auto reloaded = load_items(path, cfg.dimension);
  REQUIRE(reloaded.size() == catalog.size());
  for (const auto& [id, item] : catalog.items()) {
    const auto& other = reloaded.at(id);
    CHECK(other.title == item.title);
    CHECK(other.traffic_weight == Catch::Approx(item.traffic_weight));
    for (std::size_t d = 0; d < item.topic_vector.size(); ++d)
      CHECK(other.topic_vector[d] == Catch::Approx(item.topic_vector[d]).margin(1e-9));
  }
  // second round trip is byte-stable on the accepted subset
  auto path2 = dir.file("items2.jsonl");
  store_items(reloaded, path2);
  auto again = load_items(path2, cfg.dimension);
  REQUIRE(again.size() == reloaded.size());
}

static std::string interaction_row(const std::string& user, const std::string& ctx,
                                   const std::string& next, bool satisfied,
                                   std::int64_t ts) {
  return json{{"user_id", user},
              {"context_item_id", ctx},
              {"next_item_id", next},
              {"satisfied", satisfied},
              {"timestamp", ts}}
      .dump();
}

TEST_CASE("load_interactions") {
  TempDir dir;
  ItemCatalog catalog(2);
  catalog.add(testutil::make_item("a", {1, 0}));
  catalog.add(testutil::make_item("b", {0, 1}));

  SECTION("empty file gives empty log") {
    auto path = dir.file("log.jsonl");
    write_lines(path, {});
    auto log = load_interactions(path, catalog);
    CHECK(log.records.empty());
    CHECK(log.dropped == 0);
  }

  SECTION("unknown item references are dropped and counted") {
    auto path = dir.file("log.jsonl");
    write_lines(path, {interaction_row("u1", "a", "b", true, 10),
                       interaction_row("u1", "b", "a", false, 20),
                       interaction_row("u1", "a", "zzz", true, 30),
                       interaction_row("u2", "b", "a", true, 40),
                       interaction_row("u2", "a", "b", false, 50)});
    auto log = load_interactions(path, catalog);
    CHECK(log.records.size() == 4);
    CHECK(log.dropped == 1);
  }

  SECTION("out-of-order timestamps are retained verbatim") {
    auto path = dir.file("log.jsonl");
    write_lines(path, {interaction_row("u1", "a", "b", true, 30),
                       interaction_row("u1", "b", "a", true, 10),
                       interaction_row("u1", "a", "b", true, 20)});
    auto log = load_interactions(path, catalog);
    std::vector<std::int64_t> got;
    for (const auto& r : log.records) got.push_back(r.timestamp);
    CHECK(got == std::vector<std::int64_t>{30, 10, 20});
    auto sorted = got;
    std::sort(sorted.begin(), sorted.end());  // oracle sort
    CHECK(sorted == std::vector<std::int64_t>{10, 20, 30});
    CHECK(got != sorted);
  }
}

TEST_CASE("impression_coverage") {
  InteractionLog log;
  for (int i = 0; i < 10; ++i)
    log.records.push_back({"u", "ctx", "item" + std::to_string(i % 5), true, i});

  SECTION("full subset covers everything") {
    std::set<std::string> all;
    for (const auto& r : log.records) all.insert(r.next_item_id);
    CHECK(impression_coverage(all, log) == 1.0);
  }
  SECTION("empty subset covers nothing") {
    CHECK(impression_coverage(std::set<std::string>{}, log) == 0.0);
  }
  SECTION("empty log is 0 by convention") {
    CHECK(impression_coverage(std::set<std::string>{"x"}, InteractionLog{}) == 0.0);
  }
  SECTION("partial subset matches brute-force count") {
    std::set<std::string> subset = {"item0", "item1", "item2"};  // hits i%5 in {0,1,2}
    std::size_t brute = 0;
    for (const auto& r : log.records)
      if (subset.count(r.next_item_id)) ++brute;
    CHECK(impression_coverage(subset, log) ==
          Catch::Approx(static_cast<double>(brute) / 10.0));
    CHECK(brute == 6);  // i in {0,1,2,5,6,7}
  }
}

TEST_CASE("coverage is monotone under subset growth") {
  std::mt19937 rng(99);
  SyntheticConfig cfg;
  cfg.n_items = 40;
  cfg.n_interactions = 400;
  auto catalog = generate_items(cfg);
  auto log = generate_interactions(catalog, cfg);

  std::vector<std::string> ids;
  for (const auto& [id, item] : catalog.items()) ids.push_back(id);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(ids.begin(), ids.end(), rng);
    std::set<std::string> subset;
    double prev = 0.0;
    for (std::size_t i = 0; i < ids.size(); i += 5) {
      for (std::size_t j = i; j < std::min(i + 5, ids.size()); ++j)
        subset.insert(ids[j]);
      double cov = impression_coverage(subset, log);
      REQUIRE(cov >= prev);
      prev = cov;
    }
  }
}
