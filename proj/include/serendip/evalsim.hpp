#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "serendip/clustertree.hpp"
#include "serendip/corpus.hpp"
#include "serendip/errors.hpp"
#include "serendip/planner.hpp"
#include "serendip/retriever.hpp"
#include "serendip/serendipity.hpp"

namespace serendip {

struct EvalReport {
  double match_rate = 0.0;
  double recall = 0.0;
  std::size_t n_examples = 0;
  std::map<std::string, double> per_cluster_recall;
};

// Fraction of outputs exactly matching any cluster description. Empty input
// yields 0 by convention.
inline double match_rate(const std::vector<PlanResult>& outputs) {
  if (outputs.empty()) return 0.0;
  std::size_t exact = 0;
  for (const auto& r : outputs)
    if (r.exact_match) ++exact;
  return static_cast<double>(exact) / static_cast<double>(outputs.size());
}

// Fraction of outputs whose trimmed generation equals the label description.
// Labels must resolve against the tree; a bad label means a corrupt eval set.
inline double recall(
    const std::vector<std::pair<PlanResult, std::string>>& labeled,
    const ClusterTree& tree) {
  if (labeled.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& [result, label] : labeled) {
    if (!tree.resolve_description(label))
      throw DataError("recall: label is not a valid cluster description: " + label);
    if (ClusterTree::trim(result.raw_generation) == label) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(labeled.size());
}

inline EvalReport evaluate(
    const std::vector<std::pair<PlanResult, std::string>>& labeled,
    const ClusterTree& tree) {
  EvalReport report;
  report.n_examples = labeled.size();
  std::vector<PlanResult> outputs;
  for (const auto& [r, label] : labeled) outputs.push_back(r);
  report.match_rate = match_rate(outputs);
  report.recall = recall(labeled, tree);
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_cluster;
  for (const auto& [result, label] : labeled) {
    const std::string& node = *tree.resolve_description(label);
    auto& [hits, total] = per_cluster[node];
    ++total;
    if (ClusterTree::trim(result.raw_generation) == label) ++hits;
  }
  for (const auto& [node, counts] : per_cluster)
    report.per_cluster_recall[node] =
        static_cast<double>(counts.first) / static_cast<double>(counts.second);
  return report;
}

struct ImpressionEvent {
  std::string model;
  std::string user_id;
  std::string context_item_id;
  std::string item_id;
  bool engaged = false;
};

struct ModelNovelty {
  std::size_t impressions = 0;
  std::size_t novel_impressions = 0;
  double novel_ratio = 0.0;
  double positive_feedback_ratio = 0.0;
};

// An impression is novel for a model when no other model impressed the same
// (user, item) pair. Invariant to impression order and model relabeling.
inline std::map<std::string, ModelNovelty> novelty_report(
    const std::vector<ImpressionEvent>& impressions) {
  std::set<std::string> models;
  for (const auto& e : impressions) models.insert(e.model);
  if (models.size() < 2)
    throw ValidationError("novelty_report needs at least two models");

  std::map<std::pair<std::string, std::string>, std::set<std::string>> impressed_by;
  for (const auto& e : impressions)
    impressed_by[{e.user_id, e.item_id}].insert(e.model);

  std::map<std::string, ModelNovelty> report;
  for (const auto& m : models) report[m];
  std::map<std::string, std::size_t> positives;
  for (const auto& e : impressions) {
    auto& entry = report[e.model];
    ++entry.impressions;
    if (impressed_by[{e.user_id, e.item_id}].size() == 1) ++entry.novel_impressions;
    if (e.engaged) ++positives[e.model];
  }
  for (auto& [m, entry] : report) {
    if (entry.impressions > 0) {
      entry.novel_ratio = static_cast<double>(entry.novel_impressions) /
                          static_cast<double>(entry.impressions);
      entry.positive_feedback_ratio = static_cast<double>(positives[m]) /
                                      static_cast<double>(entry.impressions);
    }
  }
  return report;
}

struct BucketGain {
  int bucket = 0;  // 1 = most visually interesting
  double min_score = 0.0;
  double max_score = 0.0;
  double serendip_rate = 0.0;
  double exploit_rate = 0.0;
  double gain = 0.0;  // serendip/exploit - 1
  std::size_t impressions = 0;
};

// Contexts are split into equal-population quantile buckets by visually
// interesting score, bucket 1 holding the highest scores. Gain uses the
// exploit source as the baseline engagement rate.
inline std::vector<BucketGain> bucket_analysis(
    const ItemCatalog& catalog, const std::vector<ImpressionEvent>& impressions,
    const std::string& serendip_model, const std::string& exploit_model,
    int n_buckets = 5) {
  if (n_buckets < 1) throw ValidationError("bucket_analysis: n_buckets >= 1");

  std::vector<std::pair<double, std::string>> contexts;  // (score, context id)
  std::set<std::string> seen;
  for (const auto& e : impressions) {
    if (!seen.insert(e.context_item_id).second) continue;
    const Item& item = catalog.at(e.context_item_id);
    if (item.visually_interesting_score)
      contexts.emplace_back(*item.visually_interesting_score, e.context_item_id);
  }
  if (contexts.empty())
    throw DataError("bucket_analysis: no context has a visually interesting score");
  std::sort(contexts.begin(), contexts.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;  // highest first
    return a.second < b.second;
  });

  std::unordered_map<std::string, int> bucket_of;
  const std::size_t n = contexts.size();
  for (std::size_t i = 0; i < n; ++i)
    bucket_of[contexts[i].second] =
        static_cast<int>(i * static_cast<std::size_t>(n_buckets) / n) + 1;

  struct Acc {
    std::size_t s_pos = 0, s_tot = 0, e_pos = 0, e_tot = 0;
    double min_score = 1.0, max_score = 0.0;
  };
  std::map<int, Acc> acc;
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = acc[bucket_of[contexts[i].second]];
    a.min_score = std::min(a.min_score, contexts[i].first);
    a.max_score = std::max(a.max_score, contexts[i].first);
  }
  for (const auto& e : impressions) {
    auto it = bucket_of.find(e.context_item_id);
    if (it == bucket_of.end()) continue;
    auto& a = acc[it->second];
    if (e.model == serendip_model) {
      ++a.s_tot;
      if (e.engaged) ++a.s_pos;
    } else if (e.model == exploit_model) {
      ++a.e_tot;
      if (e.engaged) ++a.e_pos;
    }
  }

  std::vector<BucketGain> out;
  for (const auto& [bucket, a] : acc) {
    BucketGain g;
    g.bucket = bucket;
    g.min_score = a.min_score;
    g.max_score = a.max_score;
    g.impressions = a.s_tot + a.e_tot;
    g.serendip_rate =
        a.s_tot ? static_cast<double>(a.s_pos) / static_cast<double>(a.s_tot) : 0.0;
    g.exploit_rate =
        a.e_tot ? static_cast<double>(a.e_pos) / static_cast<double>(a.e_tot) : 0.0;
    if (g.exploit_rate <= 0.0)
      throw DataError("bucket_analysis: zero baseline engagement in bucket " +
                      std::to_string(bucket));
    g.gain = g.serendip_rate / g.exploit_rate - 1.0;
    out.push_back(g);
  }
  return out;
}

struct SimPolicy {
  std::string name;
  // context item -> top-k recommendations; may throw NoPlanError
  std::function<std::vector<Recommendation>(const std::string&, std::size_t)> recommend;
};

struct SimConfig {
  std::size_t n_users = 50;
  std::size_t n_steps = 10000;
  std::size_t preferred_leaves_per_user = 3;
  std::size_t k = 5;
  int level = 3;
  int delta = 1;
  double p_similar = 0.3;
  double p_serendip = 0.5;  // serendipitous satisfaction exceeds similar
  double p_unrelated = 0.1;
  double visual_boost = 0.0;  // serendip engagement scaled by context score
  std::uint64_t seed = 1;
};

struct SimOutput {
  InteractionLog log;                      // one record per impression
  std::vector<ImpressionEvent> impressions;
};

namespace detail {

inline std::size_t draw(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

inline double draw_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) / 9007199254740992.0;  // 2^53
}

}  // namespace detail

// Seeded synthetic-user harness: each step draws a user, a context item from
// the user's preferred leaf clusters, collects every policy's top-k, and
// samples engagement from the satisfaction probability of the pair's
// serendipity label.
inline SimOutput simulate(const ItemCatalog& catalog, const ClusterTree& tree,
                          const std::vector<SimPolicy>& policies,
                          const SimConfig& cfg) {
  if (cfg.p_similar < 0 || cfg.p_similar > 1 || cfg.p_serendip < 0 ||
      cfg.p_serendip > 1 || cfg.p_unrelated < 0 || cfg.p_unrelated > 1)
    throw ValidationError("simulate: probabilities must be in [0,1]");
  if (policies.empty()) throw ValidationError("simulate: no policies");

  std::mt19937_64 rng(cfg.seed);

  std::vector<std::string> leaves;
  for (const auto& id : tree.node_ids_at_level(tree.levels() - 1))
    if (!tree.node(id).member_items.empty()) leaves.push_back(id);
  std::sort(leaves.begin(), leaves.end());

  // per-user preferred clusters and their member pool
  std::vector<std::vector<std::string>> user_pool(cfg.n_users);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    std::set<std::string> chosen;
    while (chosen.size() < std::min(cfg.preferred_leaves_per_user, leaves.size()))
      chosen.insert(leaves[detail::draw(rng, leaves.size())]);
    for (const auto& leaf : chosen)
      for (const auto& item : tree.node(leaf).member_items)
        user_pool[u].push_back(item);
  }

  SimOutput out;
  for (std::size_t step = 0; step < cfg.n_steps; ++step) {
    std::size_t u = detail::draw(rng, cfg.n_users);
    if (user_pool[u].empty()) continue;
    const std::string user_id = "u" + std::to_string(u);
    const std::string& context = user_pool[u][detail::draw(rng, user_pool[u].size())];

    for (const auto& policy : policies) {
      std::vector<Recommendation> recs;
      try {
        recs = policy.recommend(context, cfg.k);
      } catch (const NoPlanError&) {
        continue;  // policy abstains for this context
      }
      for (const auto& rec : recs) {
        double p = cfg.p_unrelated;
        auto label = classify_pair(tree, context, rec.item_id, cfg.level, cfg.delta);
        if (label == SerendipityLabel::Similar) p = cfg.p_similar;
        if (label == SerendipityLabel::Serendipitous) {
          p = cfg.p_serendip;
          if (cfg.visual_boost > 0.0) {
            const auto& score = catalog.at(context).visually_interesting_score;
            if (score) p = std::min(1.0, p * (1.0 + cfg.visual_boost * *score));
          }
        }
        bool engaged = detail::draw_unit(rng) < p;
        out.impressions.push_back(
            {policy.name, user_id, context, rec.item_id, engaged});
        out.log.records.push_back({user_id, context, rec.item_id, engaged,
                                   static_cast<std::int64_t>(step)});
      }
    }
  }
  return out;
}

}  // namespace serendip
