#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "serendip/corpus.hpp"
#include "serendip/errors.hpp"

namespace serendip {

struct ClusterNode {
  std::string node_id;
  int level = 0;
  std::optional<std::string> parent;  // absent only at the root
  std::vector<std::string> children;
  std::string description;
  std::vector<double> centroid;
  double traffic_mass = 0.0;
  std::vector<std::string> member_items;  // item ids, ascending
};

struct TreeConfig {
  int levels = 4;
  std::vector<std::size_t> branching = {4, 4, 4};  // fan-out per internal level
  double balance_tolerance = 0.25;
  std::uint64_t seed = 0;
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

class ClusterTree {
 public:
  int levels() const { return levels_; }
  std::uint64_t version() const { return version_; }
  double balance_tolerance() const { return balance_tolerance_; }
  const std::string& root_id() const { return root_id_; }

  const std::map<std::string, ClusterNode>& nodes() const { return nodes_; }
  const std::map<std::string, std::string>& leaf_assignment() const {
    return leaf_assignment_;
  }

  const ClusterNode& node(const std::string& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw DataError("unknown cluster node: " + id);
    return it->second;
  }

  bool has_item(const std::string& item_id) const {
    return leaf_assignment_.count(item_id) > 0;
  }

  const std::string& leaf_of(const std::string& item_id) const {
    auto it = leaf_assignment_.find(item_id);
    if (it == leaf_assignment_.end())
      throw DataError("item not assigned in tree: " + item_id);
    return it->second;
  }

  // Unique ancestor of `node_id` at `level`; walks parent pointers.
  const std::string& ancestor_at(const std::string& node_id, int level) const {
    const ClusterNode* cur = &node(node_id);
    if (level < 0 || level > cur->level)
      throw ValidationError("ancestor_at: level " + std::to_string(level) +
                            " out of range for node at level " +
                            std::to_string(cur->level));
    while (cur->level > level) cur = &node(*cur->parent);
    return cur->node_id;
  }

  const std::string& item_ancestor_at(const std::string& item_id,
                                      int level) const {
    return ancestor_at(leaf_of(item_id), level);
  }

  // Exact, case-sensitive match after whitespace trimming. Absence is a value.
  std::optional<std::string> resolve_description(const std::string& text) const {
    auto it = by_description_.find(trim(text));
    if (it == by_description_.end()) return std::nullopt;
    return it->second;
  }

  // Non-empty node descriptions at one level, ascending by node id.
  std::vector<std::string> descriptions_at_level(int level) const {
    std::vector<std::string> out;
    for (const auto& [id, n] : nodes_)
      if (n.level == level && !n.member_items.empty()) out.push_back(n.description);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<std::string> node_ids_at_level(int level) const {
    std::vector<std::string> out;
    for (const auto& [id, n] : nodes_)
      if (n.level == level) out.push_back(id);
    return out;
  }

  // Greedy root-to-leaf descent by cosine similarity; ties broken by smaller
  // traffic mass, then node id.
  std::vector<std::string> assign_item(const Item& item) const {
    std::vector<std::string> path;
    const ClusterNode* cur = &node(root_id_);
    path.push_back(cur->node_id);
    while (!cur->children.empty()) {
      const ClusterNode* best = nullptr;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (const auto& cid : cur->children) {
        const ClusterNode& child = node(cid);
        double sim = dot(item.topic_vector, child.centroid);
        bool better;
        if (best == nullptr) {
          better = true;
        } else if (sim > best_sim + 1e-12) {
          better = true;
        } else if (sim < best_sim - 1e-12) {
          better = false;
        } else if (child.traffic_mass < best->traffic_mass - 1e-12) {
          better = true;  // tie: smaller traffic mass
        } else if (std::abs(child.traffic_mass - best->traffic_mass) <= 1e-12) {
          better = child.node_id < best->node_id;
        } else {
          better = false;
        }
        if (better) {
          best = &child;
          best_sim = sim;
        }
      }
      cur = best;
      path.push_back(cur->node_id);
    }
    return path;
  }

  static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  json to_json_doc() const {
    json nodes = json::array();
    for (const auto& [id, n] : nodes_) {
      json jn{{"node_id", n.node_id},
              {"level", n.level},
              {"children", n.children},
              {"description", n.description},
              {"centroid", n.centroid},
              {"traffic_mass", n.traffic_mass},
              {"member_items", n.member_items}};
      if (n.parent) jn["parent"] = *n.parent;
      nodes.push_back(std::move(jn));
    }
    return json{{"version", version_},
                {"levels", levels_},
                {"balance_tolerance", balance_tolerance_},
                {"nodes", nodes},
                {"leaf_assignment", leaf_assignment_}};
  }

  static ClusterTree from_json_doc(const json& j) {
    ClusterTree t;
    t.version_ = j.at("version").get<std::uint64_t>();
    t.levels_ = j.at("levels").get<int>();
    t.balance_tolerance_ = j.value("balance_tolerance", 0.25);
    for (const auto& jn : j.at("nodes")) {
      ClusterNode n;
      n.node_id = jn.at("node_id").get<std::string>();
      n.level = jn.at("level").get<int>();
      if (jn.contains("parent")) n.parent = jn["parent"].get<std::string>();
      jn.at("children").get_to(n.children);
      jn.at("description").get_to(n.description);
      jn.at("centroid").get_to(n.centroid);
      jn.at("traffic_mass").get_to(n.traffic_mass);
      if (jn.contains("member_items")) jn.at("member_items").get_to(n.member_items);
      t.nodes_.emplace(n.node_id, std::move(n));
    }
    t.leaf_assignment_ =
        j.at("leaf_assignment").get<std::map<std::string, std::string>>();
    t.finalize_index();
    return t;
  }

  void save(const std::string& path) const {
    std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp);
      if (!out) throw DataError("cannot write tree file: " + path);
      out << to_json_doc().dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
      throw DataError("atomic rename failed for: " + path);
  }

  static ClusterTree load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open tree file: " + path);
    json j;
    in >> j;
    return from_json_doc(j);
  }

  friend ClusterTree build_tree(const ItemCatalog& catalog, const TreeConfig& cfg);

 private:
  void finalize_index() {
    by_description_.clear();
    for (const auto& [id, n] : nodes_) {
      if (n.member_items.empty() && n.description.rfind("(empty", 0) == 0)
        continue;  // empty clusters excluded from resolution
      by_description_.emplace(n.description, id);
      if (!n.parent) root_id_ = id;
    }
  }

  int levels_ = 4;
  double balance_tolerance_ = 0.25;
  std::uint64_t version_ = 1;
  std::string root_id_;
  std::map<std::string, ClusterNode> nodes_;
  std::map<std::string, std::string> leaf_assignment_;
  std::unordered_map<std::string, std::string> by_description_;
};

namespace detail {

inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Top-3 distinctive terms: relative frequency in cluster over relative
// frequency in corpus, ties by term ascending.
inline std::string raw_description(
    const std::vector<const Item*>& members,
    const std::unordered_map<std::string, double>& corpus_freq) {
  std::map<std::string, double> counts;
  double total = 0.0;
  for (const Item* it : members)
    for (const auto& tok : tokenize(it->title)) {
      counts[tok] += 1.0;
      total += 1.0;
    }
  if (counts.empty() || total == 0.0) return "";
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& [term, c] : counts) {
    auto g = corpus_freq.find(term);
    double denom = (g == corpus_freq.end() || g->second <= 0.0) ? 1e-12 : g->second;
    scored.emplace_back((c / total) / denom, term);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::string out;
  for (std::size_t i = 0; i < scored.size() && i < 3; ++i) {
    if (i) out += " ";
    out += scored[i].second;
  }
  return out;
}

struct NodeBuild {
  std::string node_id;
  int level;
  std::optional<std::string> parent;
  std::vector<std::size_t> members;  // indices into the flat item array
};

inline double item_sim(const std::vector<double>& v,
                       const std::vector<double>& centroid) {
  return dot(v, centroid);
}

// k-means++ seeding followed by a few Lloyd iterations, all on unit vectors.
inline std::vector<std::vector<double>> kmeans_centroids(
    const std::vector<const Item*>& items, const std::vector<std::size_t>& idx,
    std::size_t k, std::size_t dim, std::mt19937_64& rng) {
  std::vector<std::vector<double>> centroids;
  // first seed: index chosen uniformly
  std::vector<std::size_t> order(idx);
  centroids.push_back(items[order[rng() % order.size()]]->topic_vector);
  std::vector<double> d2(order.size());
  while (centroids.size() < k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) {
        double sim = item_sim(items[order[i]]->topic_vector, c);
        best = std::min(best, std::max(0.0, 2.0 - 2.0 * sim));
      }
      d2[i] = best;
      sum += best;
    }
    std::size_t pick = 0;
    if (sum > 0.0) {
      double r = (static_cast<double>(rng()) /
                  static_cast<double>(std::numeric_limits<std::uint64_t>::max())) *
                 sum;
      double acc = 0.0;
      for (std::size_t i = 0; i < order.size(); ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng() % order.size();
    }
    centroids.push_back(items[order[pick]]->topic_vector);
  }
  // Lloyd refinement
  for (int iter = 0; iter < 8; ++iter) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i : idx) {
      std::size_t best = 0;
      double best_sim = -2.0;
      for (std::size_t c = 0; c < k; ++c) {
        double sim = item_sim(items[i]->topic_vector, centroids[c]);
        if (sim > best_sim) {
          best_sim = sim;
          best = c;
        }
      }
      for (std::size_t d = 0; d < dim; ++d)
        sums[best][d] += items[i]->topic_vector[d];
      ++counts[best];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      ItemCatalog::normalize(sums[c]);
      centroids[c] = sums[c];
    }
  }
  return centroids;
}

}  // namespace detail

// Recursive balanced k-means over topic vectors. Deterministic given seed.
// "Equal-sized" is enforced on traffic mass; cardinality falls out of the
// similarity assignment.
inline ClusterTree build_tree(const ItemCatalog& catalog, const TreeConfig& cfg) {
  if (catalog.empty()) throw ValidationError("build_tree: empty catalog");
  if (cfg.levels < 1) throw ValidationError("build_tree: levels must be >= 1");
  if (cfg.branching.size() != static_cast<std::size_t>(cfg.levels) - 1)
    throw ValidationError("build_tree: branching list must have levels-1 entries");
  for (std::size_t b : cfg.branching)
    if (b < 1) throw ValidationError("build_tree: fan-out must be >= 1");

  std::vector<const Item*> items;
  for (const auto& [id, item] : catalog.items()) items.push_back(&item);
  const std::size_t dim = catalog.dimension();

  ClusterTree tree;
  tree.levels_ = cfg.levels;
  tree.balance_tolerance_ = cfg.balance_tolerance;
  tree.version_ = 1;

  std::deque<detail::NodeBuild> queue;
  {
    detail::NodeBuild root;
    root.node_id = "n0";
    root.level = 0;
    root.members.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) root.members[i] = i;
    queue.push_back(std::move(root));
  }

  std::vector<ClusterNode> built;  // BFS order, for description assignment
  while (!queue.empty()) {
    detail::NodeBuild nb = std::move(queue.front());
    queue.pop_front();

    ClusterNode node;
    node.node_id = nb.node_id;
    node.level = nb.level;
    node.parent = nb.parent;
    for (std::size_t i : nb.members) node.member_items.push_back(items[i]->item_id);
    std::sort(node.member_items.begin(), node.member_items.end());

    std::vector<double> centroid(dim, 0.0);
    double mass = 0.0;
    for (std::size_t i : nb.members) {
      for (std::size_t d = 0; d < dim; ++d) centroid[d] += items[i]->topic_vector[d];
      mass += items[i]->traffic_weight;
    }
    ItemCatalog::normalize(centroid);
    node.centroid = centroid;
    node.traffic_mass = mass;

    const bool is_leaf = nb.level == cfg.levels - 1;
    if (is_leaf) {
      for (const auto& id : node.member_items)
        tree.leaf_assignment_[id] = node.node_id;
      built.push_back(std::move(node));
      continue;
    }

    // Fan-out is capped by population so degenerate inputs form a chain
    // instead of empty leaves.
    const std::size_t k =
        std::min<std::size_t>(cfg.branching[nb.level], std::max<std::size_t>(nb.members.size(), 1));
    std::mt19937_64 rng(cfg.seed ^ (std::hash<std::string>{}(nb.node_id) * 0x9e3779b97f4a7c15ULL));

    std::vector<std::vector<std::size_t>> groups(k);
    if (k == 1 || nb.members.empty()) {
      groups[0] = nb.members;
    } else {
      auto centroids = detail::kmeans_centroids(items, nb.members, k, dim, rng);
      for (std::size_t i : nb.members) {
        std::size_t best = 0;
        double best_sim = -2.0;
        for (std::size_t c = 0; c < k; ++c) {
          double sim = detail::item_sim(items[i]->topic_vector, centroids[c]);
          if (sim > best_sim) {
            best_sim = sim;
            best = c;
          }
        }
        groups[best].push_back(i);
      }
      // every child must hold at least one item
      for (std::size_t c = 0; c < k; ++c) {
        if (!groups[c].empty()) continue;
        std::size_t donor = 0;
        for (std::size_t g = 1; g < k; ++g)
          if (groups[g].size() > groups[donor].size()) donor = g;
        std::size_t best_pos = 0;
        double best_sim = -2.0;
        for (std::size_t p = 0; p < groups[donor].size(); ++p) {
          double sim =
              detail::item_sim(items[groups[donor][p]]->topic_vector, centroids[c]);
          if (sim > best_sim) {
            best_sim = sim;
            best_pos = p;
          }
        }
        groups[c].push_back(groups[donor][best_pos]);
        groups[donor].erase(groups[donor].begin() + static_cast<std::ptrdiff_t>(best_pos));
      }

      // traffic balancing: move items from over-weight to under-weight
      // children, least cosine loss first, while the max/min ratio improves
      std::vector<double> gmass(k, 0.0);
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t i : groups[c]) gmass[c] += items[i]->traffic_weight;
      const std::size_t max_moves = 8 * nb.members.size() + 16;
      for (std::size_t mv = 0; mv < max_moves; ++mv) {
        double lo = *std::min_element(gmass.begin(), gmass.end());
        double hi = *std::max_element(gmass.begin(), gmass.end());
        if (lo > 0.0 && hi / lo <= 1.0 + cfg.balance_tolerance) break;
        double best_loss = std::numeric_limits<double>::infinity();
        std::size_t ba = k, bb = k, bpos = 0;
        std::string best_item_id;
        for (std::size_t a = 0; a < k; ++a) {
          for (std::size_t b = 0; b < k; ++b) {
            if (a == b || gmass[a] <= gmass[b]) continue;
            double gap = gmass[a] - gmass[b];
            if (groups[a].size() <= 1) continue;
            for (std::size_t p = 0; p < groups[a].size(); ++p) {
              const Item* it = items[groups[a][p]];
              double w = it->traffic_weight;
              if (w <= 0.0 || w >= gap) continue;  // move must shrink the gap
              double loss = detail::item_sim(it->topic_vector, centroids[a]) -
                            detail::item_sim(it->topic_vector, centroids[b]);
              if (loss < best_loss - 1e-12 ||
                  (loss < best_loss + 1e-12 && it->item_id < best_item_id)) {
                best_loss = loss;
                ba = a;
                bb = b;
                bpos = p;
                best_item_id = it->item_id;
              }
            }
          }
        }
        if (ba != k) {
          std::size_t moved = groups[ba][bpos];
          groups[ba].erase(groups[ba].begin() + static_cast<std::ptrdiff_t>(bpos));
          groups[bb].push_back(moved);
          gmass[ba] -= items[moved]->traffic_weight;
          gmass[bb] += items[moved]->traffic_weight;
          continue;
        }
        // no single move shrinks any gap; try swapping between the heaviest
        // and lightest child, which works at finer mass granularity
        std::size_t h = 0, l = 0;
        for (std::size_t c = 1; c < k; ++c) {
          if (gmass[c] > gmass[h]) h = c;
          if (gmass[c] < gmass[l]) l = c;
        }
        double gap = gmass[h] - gmass[l];
        double best_swap_loss = std::numeric_limits<double>::infinity();
        std::size_t sh = groups[h].size(), sl = groups[l].size();
        std::size_t bph = sh, bpl = sl;
        for (std::size_t ph = 0; ph < sh; ++ph) {
          const Item* ih = items[groups[h][ph]];
          for (std::size_t pl = 0; pl < sl; ++pl) {
            const Item* il = items[groups[l][pl]];
            double diff = ih->traffic_weight - il->traffic_weight;
            if (diff <= 0.0 || diff >= gap) continue;
            double loss = detail::item_sim(ih->topic_vector, centroids[h]) -
                          detail::item_sim(ih->topic_vector, centroids[l]) +
                          detail::item_sim(il->topic_vector, centroids[l]) -
                          detail::item_sim(il->topic_vector, centroids[h]);
            if (loss < best_swap_loss) {
              best_swap_loss = loss;
              bph = ph;
              bpl = pl;
            }
          }
        }
        if (bph == sh) break;  // balancing has converged as far as it can
        std::swap(groups[h][bph], groups[l][bpl]);
        double dh = items[groups[l][bpl]]->traffic_weight -
                    items[groups[h][bph]]->traffic_weight;
        gmass[h] -= dh;
        gmass[l] += dh;
      }
    }

    for (std::size_t c = 0; c < k; ++c) {
      detail::NodeBuild child;
      child.node_id = nb.node_id + "." + std::to_string(c);
      child.level = nb.level + 1;
      child.parent = nb.node_id;
      child.members = groups[c];
      std::sort(child.members.begin(), child.members.end(), [&](std::size_t x, std::size_t y) {
        return items[x]->item_id < items[y]->item_id;
      });
      node.children.push_back(child.node_id);
      queue.push_back(std::move(child));
    }
    built.push_back(std::move(node));
  }

  // descriptions: distinctive title terms, tree-wide uniqueness via "#k"
  std::unordered_map<std::string, double> corpus_freq;
  double corpus_total = 0.0;
  for (const Item* it : items)
    for (const auto& tok : detail::tokenize(it->title)) {
      corpus_freq[tok] += 1.0;
      corpus_total += 1.0;
    }
  if (corpus_total > 0.0)
    for (auto& [t, c] : corpus_freq) c /= corpus_total;

  std::set<std::string> used;
  for (auto& node : built) {
    std::string desc;
    if (node.member_items.empty()) {
      desc = "(empty cluster " + node.node_id + ")";
    } else {
      std::vector<const Item*> members;
      for (const auto& id : node.member_items) members.push_back(&catalog.at(id));
      desc = detail::raw_description(members, corpus_freq);
      if (desc.empty()) desc = "cluster " + node.node_id;
    }
    std::string unique = desc;
    for (int kfx = 2; used.count(unique); ++kfx)
      unique = desc + " #" + std::to_string(kfx);
    used.insert(unique);
    node.description = unique;
    tree.nodes_.emplace(node.node_id, std::move(node));
  }
  // build fingerprint over structure and parameters, so a rebuilt tree
  // invalidates downstream caches
  std::uint64_t h = 1469598103934665603ULL;
  h ^= cfg.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(cfg.levels);
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  for (const auto& [id, node] : tree.nodes_) {
    mix(id);
    mix(node.description);
    for (const auto& m : node.member_items) mix(m);
  }
  tree.version_ = h | 1ULL;  // never zero

  tree.finalize_index();
  return tree;
}

}  // namespace serendip
