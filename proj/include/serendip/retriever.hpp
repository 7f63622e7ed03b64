#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "serendip/batchinfer.hpp"
#include "serendip/clustertree.hpp"
#include "serendip/corpus.hpp"
#include "serendip/errors.hpp"

namespace serendip {

struct NoPlanError : DataError {
  explicit NoPlanError(const std::string& msg) : DataError(msg) {}
};

// Decayed co-occurrence counts plus a popularity prior. Desk-scale stand-in
// for a sequence model; the restriction mechanism is what is under test.
struct CooccurrenceModel {
  std::unordered_map<std::string, std::unordered_map<std::string, double>>
      transition_counts;
  std::unordered_map<std::string, double> popularity_prior;  // sums to 1
  std::int64_t trained_at = 0;
};

// Each (context, next) record adds exp(-lambda * age) where age is seconds
// before the newest record in the log.
inline CooccurrenceModel train_cooccurrence(const InteractionLog& log,
                                            const ItemCatalog& catalog,
                                            double lambda) {
  if (log.records.empty())
    throw ValidationError("train_cooccurrence: empty interaction log");
  CooccurrenceModel model;
  std::int64_t newest = log.records.front().timestamp;
  for (const auto& rec : log.records) newest = std::max(newest, rec.timestamp);
  model.trained_at = newest;
  for (const auto& rec : log.records) {
    double age = static_cast<double>(newest - rec.timestamp);
    model.transition_counts[rec.context_item_id][rec.next_item_id] +=
        std::exp(-lambda * age);
  }
  double total = 0.0;
  for (const auto& [id, item] : catalog.items()) total += item.traffic_weight;
  for (const auto& [id, item] : catalog.items())
    model.popularity_prior[id] = total > 0.0 ? item.traffic_weight / total
                                             : 1.0 / catalog.size();
  return model;
}

enum class RecSource { Serendip, Exploit };

struct Recommendation {
  std::string item_id;
  double score = 0.0;
  RecSource source = RecSource::Exploit;
};

struct RetrieverConfig {
  int level = 3;            // cluster level used for restriction
  double beta = 0.1;        // popularity blending weight
};

namespace detail {

inline double item_score(const CooccurrenceModel& model,
                         const std::string& context, const std::string& candidate,
                         double beta) {
  double score = 0.0;
  auto row = model.transition_counts.find(context);
  if (row != model.transition_counts.end()) {
    auto cell = row->second.find(candidate);
    if (cell != row->second.end()) score = cell->second;
  }
  auto prior = model.popularity_prior.find(candidate);
  if (prior != model.popularity_prior.end()) score += beta * prior->second;
  return score;
}

inline std::vector<Recommendation> rank_top_k(
    const CooccurrenceModel& model, const std::string& context,
    const std::vector<std::string>& candidates, std::size_t k, double beta,
    RecSource source) {
  std::vector<Recommendation> recs;
  recs.reserve(candidates.size());
  for (const auto& id : candidates) {
    if (id == context) continue;
    recs.push_back({id, item_score(model, context, id, beta), source});
  }
  std::sort(recs.begin(), recs.end(), [](const Recommendation& a,
                                         const Recommendation& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item_id < b.item_id;
  });
  if (recs.size() > k) recs.resize(k);
  return recs;
}

}  // namespace detail

// Candidates are exactly the members of the planned cluster, context excluded.
inline std::vector<Recommendation> recommend_restricted(
    const CooccurrenceModel& model, const ClusterTree& tree,
    const PlanCache& cache, const std::string& context, std::size_t k,
    const RetrieverConfig& cfg = {}) {
  auto entry = cache.entries.find(context);
  if (entry == cache.entries.end() || !entry->second.resolved_cluster)
    throw NoPlanError("no planned cluster for item " + context);
  const std::string& planned = *entry->second.resolved_cluster;
  const ClusterNode& node = tree.node(planned);

  std::vector<std::string> candidates;
  if (node.level == tree.levels() - 1) {
    candidates = node.member_items;
  } else {
    for (const auto& [item, leaf] : tree.leaf_assignment())
      if (tree.ancestor_at(leaf, node.level) == planned) candidates.push_back(item);
  }
  return detail::rank_top_k(model, context, candidates, k, cfg.beta,
                            RecSource::Serendip);
}

// Unrestricted baseline with the same scoring; reinforces past interests.
inline std::vector<Recommendation> recommend_exploit(
    const CooccurrenceModel& model, const ItemCatalog& catalog,
    const std::string& context, std::size_t k, const RetrieverConfig& cfg = {}) {
  std::vector<std::string> candidates;
  candidates.reserve(catalog.size());
  for (const auto& [id, item] : catalog.items()) candidates.push_back(id);
  return detail::rank_top_k(model, context, candidates, k, cfg.beta,
                            RecSource::Exploit);
}

}  // namespace serendip
