#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "serendip/clustertree.hpp"
#include "serendip/corpus.hpp"
#include "serendip/errors.hpp"

namespace serendip {

enum class SerendipityLabel { Similar, Serendipitous, Unrelated };

inline const char* to_string(SerendipityLabel l) {
  switch (l) {
    case SerendipityLabel::Similar: return "similar";
    case SerendipityLabel::Serendipitous: return "serendipitous";
    case SerendipityLabel::Unrelated: return "unrelated";
  }
  return "?";
}

// Similar: same node at level l. Serendipitous: different node at level l,
// same node at level l-delta. Unrelated otherwise.
inline SerendipityLabel classify_pair(const ClusterTree& tree,
                                      const std::string& context_item,
                                      const std::string& next_item, int level,
                                      int delta) {
  if (delta < 1) throw ValidationError("classify_pair: delta must be >= 1");
  if (level - delta < 0)
    throw ValidationError("classify_pair: l-delta must be >= 0");
  if (level > tree.levels() - 1)
    throw ValidationError("classify_pair: level exceeds tree depth");
  const std::string& a = tree.item_ancestor_at(context_item, level);
  const std::string& b = tree.item_ancestor_at(next_item, level);
  if (a == b) return SerendipityLabel::Similar;
  const std::string& pa = tree.item_ancestor_at(context_item, level - delta);
  const std::string& pb = tree.item_ancestor_at(next_item, level - delta);
  return pa == pb ? SerendipityLabel::Serendipitous : SerendipityLabel::Unrelated;
}

struct SatisfactionStat {
  std::string context_item_id;
  std::string target_cluster_id;  // level-l node of the next item
  std::size_t positive_count = 0;
  std::size_t total_count = 0;

  double rate() const {
    return total_count == 0
               ? 0.0
               : static_cast<double>(positive_count) / static_cast<double>(total_count);
  }
};

struct MiningResult {
  std::vector<SatisfactionStat> stats;  // (context id, cluster id) ascending
  std::size_t serendipitous_transitions = 0;
  std::size_t skipped_records = 0;
};

// Each record is one (context, next) transition. Keep only serendipitous
// pairs, group by (context item, level-l cluster of the next item), and
// accumulate satisfaction counts.
inline MiningResult mine_pairs(const InteractionLog& log, const ClusterTree& tree,
                               int level, int delta) {
  MiningResult out;
  std::map<std::pair<std::string, std::string>, SatisfactionStat> acc;
  for (const auto& rec : log.records) {
    if (!tree.has_item(rec.context_item_id) || !tree.has_item(rec.next_item_id)) {
      ++out.skipped_records;
      continue;
    }
    if (classify_pair(tree, rec.context_item_id, rec.next_item_id, level, delta) !=
        SerendipityLabel::Serendipitous)
      continue;
    ++out.serendipitous_transitions;
    const std::string& cluster = tree.item_ancestor_at(rec.next_item_id, level);
    auto key = std::make_pair(rec.context_item_id, cluster);
    auto& stat = acc[key];
    stat.context_item_id = rec.context_item_id;
    stat.target_cluster_id = cluster;
    ++stat.total_count;
    if (rec.satisfied) ++stat.positive_count;
  }
  out.stats.reserve(acc.size());
  for (auto& [key, stat] : acc) out.stats.push_back(std::move(stat));
  return out;
}

struct TrainingExample {
  std::string context_item_id;
  std::string target_cluster_id;
  std::string target_description;
  double rate = 0.0;
  std::size_t support = 0;
};

// Per target cluster: drop stats below min_support, order by rate desc then
// support desc then context id, keep the first k.
inline std::vector<TrainingExample> curate_training_data(
    const std::vector<SatisfactionStat>& stats, const ClusterTree& tree,
    std::size_t k = 10, std::size_t min_support = 5) {
  if (k == 0) throw ValidationError("curate: k must be positive");
  std::map<std::string, std::vector<const SatisfactionStat*>> by_cluster;
  for (const auto& s : stats)
    if (s.total_count >= min_support) by_cluster[s.target_cluster_id].push_back(&s);

  std::vector<TrainingExample> out;
  for (auto& [cluster, group] : by_cluster) {
    std::sort(group.begin(), group.end(),
              [](const SatisfactionStat* a, const SatisfactionStat* b) {
                if (a->rate() != b->rate()) return a->rate() > b->rate();
                if (a->total_count != b->total_count)
                  return a->total_count > b->total_count;
                return a->context_item_id < b->context_item_id;
              });
    const std::string& desc = tree.node(cluster).description;
    for (std::size_t i = 0; i < group.size() && i < k; ++i) {
      TrainingExample ex;
      ex.context_item_id = group[i]->context_item_id;
      ex.target_cluster_id = cluster;
      ex.target_description = desc;
      ex.rate = group[i]->rate();
      ex.support = group[i]->total_count;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

// JSON-lines training file. The header record enumerates every level-l
// description so fine-tuning sees the full controlled-generation vocabulary.
inline void export_training_file(const std::vector<TrainingExample>& examples,
                                 const ClusterTree& tree, int level,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training file: " + path);
  json header{{"record", "vocabulary"},
              {"level", level},
              {"cluster_descriptions", tree.descriptions_at_level(level)}};
  out << header.dump() << "\n";
  for (const auto& ex : examples) {
    json row{{"record", "example"},
             {"context_item_id", ex.context_item_id},
             {"target_cluster_id", ex.target_cluster_id},
             {"target_description", ex.target_description},
             {"rate", ex.rate},
             {"support", ex.support}};
    out << row.dump() << "\n";
  }
}

struct TrainingFile {
  std::vector<std::string> vocabulary;
  int level = 0;
  std::vector<TrainingExample> examples;
};

inline TrainingFile load_training_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open training file: " + path);
  TrainingFile tf;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (j.value("record", "") == "vocabulary") {
      j.at("cluster_descriptions").get_to(tf.vocabulary);
      tf.level = j.value("level", 0);
      header_seen = true;
    } else {
      TrainingExample ex;
      j.at("context_item_id").get_to(ex.context_item_id);
      j.at("target_cluster_id").get_to(ex.target_cluster_id);
      j.at("target_description").get_to(ex.target_description);
      ex.rate = j.value("rate", 0.0);
      ex.support = j.value("support", std::size_t{0});
      tf.examples.push_back(std::move(ex));
    }
  }
  if (!header_seen) throw DataError("training file missing vocabulary header: " + path);
  return tf;
}

}  // namespace serendip
