#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <iterator>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "serendip/clustertree.hpp"
#include "serendip/corpus.hpp"
#include "serendip/errors.hpp"
#include "serendip/planner.hpp"

namespace serendip {

struct RunLogEntry {
  std::string run_id;
  std::size_t processed_count = 0;
  std::size_t reused_count = 0;
  std::size_t failure_count = 0;
  double wall_time_seconds = 0.0;
};

struct PlanCache {
  std::uint64_t corpus_version = 0;
  std::uint64_t tree_version = 0;
  std::map<std::string, PlanResult> entries;
  std::vector<RunLogEntry> run_log;
};

struct CorpusSelection {
  std::vector<std::string> selected;  // popularity-descending
  double achieved_coverage = 0.0;
  double target = 0.0;
  bool target_unreachable = false;
};

// Minimal popularity-prefix whose impression coverage reaches the target.
// Ordering: traffic weight descending, item id ascending.
inline CorpusSelection select_corpus(const ItemCatalog& catalog,
                                     const InteractionLog& log,
                                     double target_coverage = 0.8) {
  if (target_coverage < 0.0 || target_coverage > 1.0)
    throw ValidationError("select_corpus: target must be in [0,1]");
  CorpusSelection sel;
  sel.target = target_coverage;
  if (target_coverage <= 0.0) return sel;

  std::vector<const Item*> order;
  for (const auto& [id, item] : catalog.items()) order.push_back(&item);
  std::sort(order.begin(), order.end(), [](const Item* a, const Item* b) {
    if (a->traffic_weight != b->traffic_weight)
      return a->traffic_weight > b->traffic_weight;
    return a->item_id < b->item_id;
  });

  std::map<std::string, std::size_t> impressions;
  for (const auto& rec : log.records) ++impressions[rec.next_item_id];
  const double total = static_cast<double>(log.records.size());

  std::size_t covered = 0;
  for (const Item* it : order) {
    sel.selected.push_back(it->item_id);
    auto imp = impressions.find(it->item_id);
    if (imp != impressions.end()) covered += imp->second;
    sel.achieved_coverage = total > 0.0 ? covered / total : 0.0;
    if (sel.achieved_coverage >= target_coverage) return sel;
  }
  sel.target_unreachable = true;  // full catalog kept, with a warning flag
  return sel;
}

struct BatchConfig {
  PromptType prompt_type = PromptType::VideoCoT;
  PlannerConfig planner;
  std::size_t workers = 1;
  std::uint64_t corpus_version = 1;
  std::string run_id = "run";
};

// Incremental batch planning: entries from a previous cache with a matching
// tree version are reused without backend calls; only new items are planned.
// A stale previous cache forces a full rebuild. Backend failures mark the
// entry Unresolved and the run continues.
inline PlanCache run_batch(GenerationBackend& backend, const ClusterTree& tree,
                           const ItemCatalog& catalog,
                           const CorpusSelection& selection,
                           const BatchConfig& cfg,
                           const PlanCache* previous = nullptr) {
  auto start = std::chrono::steady_clock::now();
  PlanCache cache;
  cache.corpus_version = cfg.corpus_version;
  cache.tree_version = tree.version();

  const bool reuse = previous != nullptr && previous->tree_version == tree.version();
  if (reuse) cache.entries = previous->entries;  // retained until a full rebuild

  std::vector<std::string> todo;
  for (const auto& id : selection.selected)
    if (!reuse || !cache.entries.count(id)) todo.push_back(id);

  RunLogEntry entry;
  entry.run_id = cfg.run_id;
  entry.reused_count = selection.selected.size() - todo.size();

  std::vector<PlanResult> results(todo.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failures{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      try {
        results[i] = plan_cluster(backend, tree, catalog.at(todo[i]),
                                  cfg.prompt_type, cfg.planner);
      } catch (const BackendError& e) {
        PlanResult failed;
        failed.context_item_id = todo[i];
        failed.resolution_method = ResolutionMethod::Unresolved;
        failed.error_note = e.what();
        results[i] = std::move(failed);
        ++failures;
      }
    }
  };
  std::size_t nworkers = std::max<std::size_t>(1, cfg.workers);
  if (nworkers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < nworkers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (auto& r : results) {
    std::string id = r.context_item_id;
    cache.entries[id] = std::move(r);
  }

  entry.processed_count = todo.size();
  entry.failure_count = failures.load();
  entry.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (reuse) cache.run_log = previous->run_log;
  cache.run_log.push_back(std::move(entry));
  return cache;
}

// Drop cache entries that fell out of the current selection.
inline void compact_cache(PlanCache& cache, const CorpusSelection& selection) {
  std::unordered_set<std::string> keep(selection.selected.begin(),
                                      selection.selected.end());
  for (auto it = cache.entries.begin(); it != cache.entries.end();)
    it = keep.count(it->first) ? std::next(it) : cache.entries.erase(it);
}

inline void to_json(json& j, const PlanResult& r) {
  j = json{{"raw_generation", r.raw_generation},
           {"exact_match", r.exact_match},
           {"resolution_method", std::string(to_string(r.resolution_method))}};
  if (r.rationale) j["rationale"] = *r.rationale;
  if (r.resolved_cluster) j["resolved_cluster"] = *r.resolved_cluster;
  if (r.error_note) j["error_note"] = *r.error_note;
}

inline PlanResult plan_result_from_json(const std::string& item_id, const json& j) {
  PlanResult r;
  r.context_item_id = item_id;
  j.at("raw_generation").get_to(r.raw_generation);
  j.at("exact_match").get_to(r.exact_match);
  std::string method = j.at("resolution_method").get<std::string>();
  r.resolution_method = method == "exact"      ? ResolutionMethod::Exact
                        : method == "fallback" ? ResolutionMethod::Fallback
                                               : ResolutionMethod::Unresolved;
  if (j.contains("rationale")) r.rationale = j["rationale"].get<std::string>();
  if (j.contains("resolved_cluster"))
    r.resolved_cluster = j["resolved_cluster"].get<std::string>();
  if (j.contains("error_note")) r.error_note = j["error_note"].get<std::string>();
  return r;
}

inline json cache_to_json(const PlanCache& cache) {
  json entries = json::object();
  for (const auto& [id, r] : cache.entries) entries[id] = json(r);
  json runs = json::array();
  for (const auto& e : cache.run_log)
    runs.push_back(json{{"run_id", e.run_id},
                        {"processed_count", e.processed_count},
                        {"reused_count", e.reused_count},
                        {"failure_count", e.failure_count},
                        {"wall_time_seconds", e.wall_time_seconds}});
  return json{{"corpus_version", cache.corpus_version},
              {"tree_version", cache.tree_version},
              {"entries", entries},
              {"run_log", runs}};
}

inline PlanCache cache_from_json(const json& j) {
  PlanCache cache;
  cache.corpus_version = j.at("corpus_version").get<std::uint64_t>();
  cache.tree_version = j.at("tree_version").get<std::uint64_t>();
  for (const auto& [id, jr] : j.at("entries").items())
    cache.entries.emplace(id, plan_result_from_json(id, jr));
  for (const auto& je : j.at("run_log")) {
    RunLogEntry e;
    je.at("run_id").get_to(e.run_id);
    je.at("processed_count").get_to(e.processed_count);
    je.at("reused_count").get_to(e.reused_count);
    e.failure_count = je.value("failure_count", std::size_t{0});
    e.wall_time_seconds = je.value("wall_time_seconds", 0.0);
    cache.run_log.push_back(std::move(e));
  }
  return cache;
}

// Atomic write: temp file then rename, so concurrent readers only ever see
// fully committed caches.
inline void store_cache(const PlanCache& cache, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write cache file: " + path);
    out << cache_to_json(cache).dump(2) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("atomic rename failed for: " + path);
}

inline PlanCache load_cache(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cache file: " + path);
  json j;
  in >> j;
  return cache_from_json(j);
}

// Loading against a known tree must refuse stale caches rather than silently
// reusing them.
inline PlanCache load_cache(const std::string& path,
                            std::uint64_t expected_tree_version) {
  PlanCache cache = load_cache(path);
  if (cache.tree_version != expected_tree_version)
    throw StalenessError("plan cache was built for tree version " +
                         std::to_string(cache.tree_version) +
                         ", current tree is version " +
                         std::to_string(expected_tree_version));
  return cache;
}

}  // namespace serendip
