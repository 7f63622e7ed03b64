#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "serendip/errors.hpp"

namespace serendip {

using json = nlohmann::json;

struct Item {
  std::string item_id;
  std::string title;
  std::vector<double> topic_vector;  // unit L2 norm after ingestion
  double traffic_weight = 0.0;
  std::vector<std::string> frame_captions;
  std::optional<std::string> thumbnail_caption;
  std::optional<double> visually_interesting_score;  // in [0,1] when present
};

struct InteractionRecord {
  std::string user_id;
  std::string context_item_id;
  std::string next_item_id;
  bool satisfied = false;
  std::int64_t timestamp = 0;
};

struct IngestStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

class ItemCatalog {
 public:
  ItemCatalog() = default;
  explicit ItemCatalog(std::size_t dimension) : dimension_(dimension) {}

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  bool contains(const std::string& id) const { return items_.count(id) > 0; }

  const Item& at(const std::string& id) const {
    auto it = items_.find(id);
    if (it == items_.end()) throw DataError("unknown item: " + id);
    return it->second;
  }

  // Rejects duplicates (first wins) and wrong-dimension vectors.
  bool add(Item item) {
    if (item.topic_vector.size() != dimension_) {
      ++ingest_stats_.rejected;
      return false;
    }
    if (item.traffic_weight < 0.0) {
      ++ingest_stats_.rejected;
      return false;
    }
    if (item.visually_interesting_score &&
        (*item.visually_interesting_score < 0.0 ||
         *item.visually_interesting_score > 1.0)) {
      ++ingest_stats_.rejected;
      return false;
    }
    normalize(item.topic_vector);
    auto [it, inserted] = items_.emplace(item.item_id, std::move(item));
    if (!inserted) {
      ++ingest_stats_.rejected;
      return false;
    }
    ++ingest_stats_.accepted;
    return true;
  }

  // Deterministic iteration order (item_id ascending).
  const std::map<std::string, Item>& items() const { return items_; }
  const IngestStats& ingest_stats() const { return ingest_stats_; }

  static void normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& x : v) x /= norm;
    }
  }

 private:
  std::size_t dimension_ = 0;
  std::map<std::string, Item> items_;
  IngestStats ingest_stats_;
};

struct InteractionLog {
  std::vector<InteractionRecord> records;  // verbatim file order
  std::size_t dropped = 0;
};

inline void to_json(json& j, const Item& it) {
  j = json{{"item_id", it.item_id},
           {"title", it.title},
           {"topic_vector", it.topic_vector},
           {"traffic_weight", it.traffic_weight},
           {"frame_captions", it.frame_captions}};
  if (it.thumbnail_caption) j["thumbnail_caption"] = *it.thumbnail_caption;
  if (it.visually_interesting_score)
    j["visually_interesting_score"] = *it.visually_interesting_score;
}

inline void from_json(const json& j, Item& it) {
  j.at("item_id").get_to(it.item_id);
  j.at("title").get_to(it.title);
  j.at("topic_vector").get_to(it.topic_vector);
  j.at("traffic_weight").get_to(it.traffic_weight);
  if (j.contains("frame_captions")) j.at("frame_captions").get_to(it.frame_captions);
  if (j.contains("thumbnail_caption") && !j["thumbnail_caption"].is_null())
    it.thumbnail_caption = j["thumbnail_caption"].get<std::string>();
  if (j.contains("visually_interesting_score") &&
      !j["visually_interesting_score"].is_null())
    it.visually_interesting_score = j["visually_interesting_score"].get<double>();
}

inline void to_json(json& j, const InteractionRecord& r) {
  j = json{{"user_id", r.user_id},
           {"context_item_id", r.context_item_id},
           {"next_item_id", r.next_item_id},
           {"satisfied", r.satisfied},
           {"timestamp", r.timestamp}};
}

inline void from_json(const json& j, InteractionRecord& r) {
  j.at("user_id").get_to(r.user_id);
  j.at("context_item_id").get_to(r.context_item_id);
  j.at("next_item_id").get_to(r.next_item_id);
  j.at("satisfied").get_to(r.satisfied);
  j.at("timestamp").get_to(r.timestamp);
}

// JSON-lines item loader. Rows with bad dimension or duplicate ids are
// counted and skipped; zero valid rows is fatal.
inline ItemCatalog load_items(const std::string& path, std::size_t dimension) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open item file: " + path);
  ItemCatalog catalog(dimension);
  std::string line;
  std::size_t bad_rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      Item item = json::parse(line).get<Item>();
      catalog.add(std::move(item));
    } catch (const json::exception&) {
      ++bad_rows;
    }
  }
  if (catalog.empty())
    throw DataError("no valid items in " + path + " (" +
                    std::to_string(bad_rows) + " malformed rows)");
  return catalog;
}

inline void store_items(const ItemCatalog& catalog, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write item file: " + path);
  for (const auto& [id, item] : catalog.items()) out << json(item).dump() << "\n";
}

// Records referencing items absent from the catalog are dropped and counted.
// Order is kept verbatim; sorting is the caller's responsibility.
inline InteractionLog load_interactions(const std::string& path,
                                        const ItemCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction file: " + path);
  InteractionLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      InteractionRecord rec = json::parse(line).get<InteractionRecord>();
      if (!catalog.contains(rec.context_item_id) ||
          !catalog.contains(rec.next_item_id)) {
        ++log.dropped;
        continue;
      }
      log.records.push_back(std::move(rec));
    } catch (const json::exception&) {
      ++log.dropped;
    }
  }
  return log;
}

inline void store_interactions(const InteractionLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write interaction file: " + path);
  for (const auto& rec : log.records) out << json(rec).dump() << "\n";
}

// Fraction of log records whose next item falls inside the subset.
// Empty log yields 0 by convention.
template <typename Set>
double impression_coverage(const Set& subset, const InteractionLog& log) {
  if (log.records.empty()) return 0.0;
  std::size_t covered = 0;
  for (const auto& rec : log.records)
    if (subset.count(rec.next_item_id)) ++covered;
  return static_cast<double>(covered) / static_cast<double>(log.records.size());
}

}  // namespace serendip
