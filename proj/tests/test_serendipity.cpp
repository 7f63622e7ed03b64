#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <set>

#include "serendip/serendipity.hpp"
#include "serendip/synthetic.hpp"
#include "test_util.hpp"

using namespace serendip;
using testutil::TempDir;

namespace {

// independent ancestor computation: walk parent pointers, no ancestor_at
std::string ancestor_by_walk(const ClusterTree& tree, const std::string& item,
                             int level) {
  const ClusterNode* cur = &tree.node(tree.leaf_assignment().at(item));
  while (cur->level > level) cur = &tree.node(*cur->parent);
  return cur->node_id;
}

SerendipityLabel oracle_label(const ClusterTree& tree, const std::string& v,
                              const std::string& n, int l, int d) {
  if (ancestor_by_walk(tree, v, l) == ancestor_by_walk(tree, n, l))
    return SerendipityLabel::Similar;
  if (ancestor_by_walk(tree, v, l - d) == ancestor_by_walk(tree, n, l - d))
    return SerendipityLabel::Serendipitous;
  return SerendipityLabel::Unrelated;
}

ItemCatalog toy_catalog(std::size_t n = 12) {
  SyntheticConfig cfg;
  cfg.n_items = n;
  cfg.n_topics = 4;
  cfg.seed = 3;
  return generate_items(cfg);
}

}  // namespace

TEST_CASE("classify_pair basics") {
  auto catalog = toy_catalog(40);
  auto tree = build_tree(catalog, {});

  SECTION("same item is Similar") {
    const auto& id = catalog.items().begin()->first;
    CHECK(classify_pair(tree, id, id, 3, 1) == SerendipityLabel::Similar);
  }

  SECTION("different leaves under one level-2 parent are Serendipitous") {
    bool found = false;
    for (const auto& [a, la] : tree.leaf_assignment()) {
      for (const auto& [b, lb] : tree.leaf_assignment()) {
        if (la == lb) continue;
        if (tree.ancestor_at(la, 2) != tree.ancestor_at(lb, 2)) continue;
        CHECK(classify_pair(tree, a, b, 3, 1) == SerendipityLabel::Serendipitous);
        found = true;
        break;
      }
      if (found) break;
    }
    REQUIRE(found);
  }

  SECTION("invalid arguments") {
    const auto& id = catalog.items().begin()->first;
    CHECK_THROWS_AS(classify_pair(tree, id, id, 3, 0), ValidationError);
    CHECK_THROWS_AS(classify_pair(tree, id, id, 1, 2), ValidationError);
    CHECK_THROWS_AS(classify_pair(tree, id, id, 9, 1), ValidationError);
    CHECK_THROWS_AS(classify_pair(tree, "nope", id, 3, 1), DataError);
  }
}

TEST_CASE("classify_pair matches exhaustive oracle on a toy tree") {
  auto catalog = toy_catalog(12);
  auto tree = build_tree(catalog, {});
  std::vector<std::string> ids;
  for (const auto& [id, item] : catalog.items()) ids.push_back(id);

  for (const auto& a : ids)
    for (const auto& b : ids)
      for (int l = 1; l <= 3; ++l)
        for (int d = 1; d <= l; ++d)
          REQUIRE(classify_pair(tree, a, b, l, d) == oracle_label(tree, a, b, l, d));
}

TEST_CASE("Similar at level l implies Similar at every level below") {
  auto catalog = toy_catalog(30);
  auto tree = build_tree(catalog, {});
  std::vector<std::string> ids;
  for (const auto& [id, item] : catalog.items()) ids.push_back(id);
  for (const auto& a : ids)
    for (const auto& b : ids)
      for (int l = 3; l >= 2; --l)
        if (classify_pair(tree, a, b, l, 1) == SerendipityLabel::Similar)
          for (int lower = 1; lower < l; ++lower)
            REQUIRE(classify_pair(tree, a, b, lower, 1) ==
                    SerendipityLabel::Similar);
}

TEST_CASE("mine_pairs") {
  auto catalog = toy_catalog(60);
  auto tree = build_tree(catalog, {});

  SECTION("log with only Similar transitions yields nothing") {
    InteractionLog log;
    // pair each item with a leaf-mate (or itself)
    for (const auto& [id, leaf] : tree.leaf_assignment())
      log.records.push_back({"u", id, id, true, 0});
    auto mined = mine_pairs(log, tree, 3, 1);
    CHECK(mined.stats.empty());
    CHECK(mined.serendipitous_transitions == 0);
  }

  SECTION("single satisfied serendipitous record") {
    std::string v, n;
    for (const auto& [a, la] : tree.leaf_assignment()) {
      for (const auto& [b, lb] : tree.leaf_assignment())
        if (la != lb && tree.ancestor_at(la, 2) == tree.ancestor_at(lb, 2)) {
          v = a;
          n = b;
          break;
        }
      if (!v.empty()) break;
    }
    REQUIRE_FALSE(v.empty());
    InteractionLog log;
    log.records.push_back({"u", v, n, true, 0});
    auto mined = mine_pairs(log, tree, 3, 1);
    REQUIRE(mined.stats.size() == 1);
    CHECK(mined.stats[0].context_item_id == v);
    CHECK(mined.stats[0].target_cluster_id == tree.item_ancestor_at(n, 3));
    CHECK(mined.stats[0].rate() == 1.0);
    CHECK(mined.stats[0].total_count == 1);
  }
}

TEST_CASE("mine_pairs equals the double-loop reference miner on 10k events") {
  SyntheticConfig cfg;
  cfg.n_items = 300;
  cfg.n_interactions = 10000;
  auto catalog = generate_items(cfg);
  auto log = generate_interactions(catalog, cfg);
  auto tree = build_tree(catalog, {});
  const int l = 3, d = 1;

  auto mined = mine_pairs(log, tree, l, d);

  // reference: plain double map, label recomputed by parent walking
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>>
      ref;
  std::size_t ref_transitions = 0;
  for (const auto& rec : log.records) {
    if (oracle_label(tree, rec.context_item_id, rec.next_item_id, l, d) !=
        SerendipityLabel::Serendipitous)
      continue;
    ++ref_transitions;
    auto key = std::make_pair(rec.context_item_id,
                              ancestor_by_walk(tree, rec.next_item_id, l));
    ++ref[key].second;
    if (rec.satisfied) ++ref[key].first;
  }

  REQUIRE(mined.stats.size() == ref.size());
  std::size_t total_sum = 0;
  for (const auto& s : mined.stats) {
    auto it = ref.find({s.context_item_id, s.target_cluster_id});
    REQUIRE(it != ref.end());
    CHECK(s.positive_count == it->second.first);
    CHECK(s.total_count == it->second.second);
    total_sum += s.total_count;
  }
  // conservation: every serendipitous transition lands in exactly one stat
  CHECK(total_sum == mined.serendipitous_transitions);
  CHECK(mined.serendipitous_transitions == ref_transitions);

  // deterministic output order
  for (std::size_t i = 1; i < mined.stats.size(); ++i) {
    auto prev = std::make_pair(mined.stats[i - 1].context_item_id,
                               mined.stats[i - 1].target_cluster_id);
    auto cur = std::make_pair(mined.stats[i].context_item_id,
                              mined.stats[i].target_cluster_id);
    CHECK(prev < cur);
  }
}

TEST_CASE("curate_training_data") {
  auto catalog = toy_catalog(40);
  auto tree = build_tree(catalog, {});
  auto cluster_ids = tree.node_ids_at_level(3);
  std::string cluster;
  for (const auto& c : cluster_ids)
    if (!tree.node(c).member_items.empty()) {
      cluster = c;
      break;
    }

  SECTION("keeps the 10 highest-rate contexts of 12") {
    std::vector<SatisfactionStat> stats;
    for (int i = 0; i < 12; ++i)
      stats.push_back({"ctx" + std::to_string(i), cluster,
                       static_cast<std::size_t>(i), 12});
    auto curated = curate_training_data(stats, tree, 10, 5);
    REQUIRE(curated.size() == 10);
    // the two lowest-rate contexts (0/12, 1/12) must be gone
    for (const auto& ex : curated) {
      CHECK(ex.context_item_id != "ctx0");
      CHECK(ex.context_item_id != "ctx1");
    }
    CHECK(curated.front().context_item_id == "ctx11");  // highest rate first
    CHECK(curated.front().target_description == tree.node(cluster).description);
  }

  SECTION("cluster with no qualifying stats is absent") {
    std::vector<SatisfactionStat> stats = {{"ctx", cluster, 1, 2}};  // support < 5
    CHECK(curate_training_data(stats, tree, 10, 5).empty());
  }

  SECTION("rate and support ties order by context id, vs oracle sort") {
    std::vector<SatisfactionStat> stats = {{"zeta", cluster, 3, 6},
                                           {"alpha", cluster, 3, 6},
                                           {"mid", cluster, 3, 6}};
    auto curated = curate_training_data(stats, tree, 10, 5);
    std::vector<std::string> got;
    for (const auto& ex : curated) got.push_back(ex.context_item_id);
    auto expected = got;
    std::sort(expected.begin(), expected.end());  // oracle: plain ascending
    CHECK(got == expected);
  }
}

TEST_CASE("training file export") {
  auto catalog = toy_catalog(40);
  auto tree = build_tree(catalog, {});
  TempDir dir;
  auto path = dir.file("training.jsonl");

  SECTION("zero examples still writes the full vocabulary header") {
    export_training_file({}, tree, 3, path);
    auto tf = load_training_file(path);
    CHECK(tf.examples.empty());
    CHECK(tf.vocabulary == tree.descriptions_at_level(3));
    CHECK_FALSE(tf.vocabulary.empty());
  }

  SECTION("one example round-trips") {
    std::string cluster = tree.node_ids_at_level(3).front();
    TrainingExample ex{"ctx", cluster, tree.node(cluster).description, 0.5, 6};
    export_training_file({ex}, tree, 3, path);
    auto tf = load_training_file(path);
    REQUIRE(tf.examples.size() == 1);
    CHECK(tf.examples[0].context_item_id == "ctx");
    CHECK(tf.examples[0].target_description == ex.target_description);
    CHECK(tf.examples[0].rate == 0.5);
    CHECK(tf.examples[0].support == 6);
  }
}

TEST_CASE("full curated set respects the per-cluster bound after re-parsing") {
  SyntheticConfig cfg;
  cfg.n_items = 300;
  cfg.n_interactions = 10000;
  auto catalog = generate_items(cfg);
  auto log = generate_interactions(catalog, cfg);
  auto tree = build_tree(catalog, {});
  auto mined = mine_pairs(log, tree, 3, 1);
  auto curated = curate_training_data(mined.stats, tree, 10, 2);
  REQUIRE_FALSE(curated.empty());

  TempDir dir;
  auto path = dir.file("training.jsonl");
  export_training_file(curated, tree, 3, path);
  auto tf = load_training_file(path);
  std::map<std::string, std::size_t> per_cluster;
  for (const auto& ex : tf.examples) ++per_cluster[ex.target_cluster_id];
  for (const auto& [cluster, count] : per_cluster) CHECK(count <= 10);

  // every curated pair classifies Serendipitous
  for (const auto& ex : tf.examples) {
    bool serendip_member = false;
    for (const auto& member : tree.node(ex.target_cluster_id).member_items)
      if (classify_pair(tree, ex.context_item_id, member, 3, 1) ==
          SerendipityLabel::Serendipitous) {
        serendip_member = true;
        break;
      }
    CHECK(serendip_member);
    CHECK(tree.item_ancestor_at(ex.context_item_id, 3) != ex.target_cluster_id);
  }
}
