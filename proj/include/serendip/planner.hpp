#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "serendip/clustertree.hpp"
#include "serendip/corpus.hpp"
#include "serendip/errors.hpp"

namespace serendip {

enum class PromptType { TextOnly, VideoOnly, VideoAndText, VideoCoT };

inline const char* to_string(PromptType t) {
  switch (t) {
    case PromptType::TextOnly: return "text_only";
    case PromptType::VideoOnly: return "video_only";
    case PromptType::VideoAndText: return "video_and_text";
    case PromptType::VideoCoT: return "video_cot";
  }
  return "?";
}

inline PromptType prompt_type_from_string(const std::string& s) {
  if (s == "text_only") return PromptType::TextOnly;
  if (s == "video_only") return PromptType::VideoOnly;
  if (s == "video_and_text") return PromptType::VideoAndText;
  if (s == "video_cot") return PromptType::VideoCoT;
  throw ValidationError("unknown prompt type: " + s);
}

struct PromptBlock {
  std::string kind;  // title | cluster_description | frame_caption | thumbnail_caption
  std::string text;
};

struct Prompt {
  PromptType prompt_type = PromptType::TextOnly;
  std::string system_text;
  std::vector<PromptBlock> context_blocks;
  std::string instruction_text;
  int cot_stage = 0;  // 0: single-shot, 1: summary, 2: cluster selection

  json to_wire() const {
    json blocks = json::array();
    for (const auto& b : context_blocks)
      blocks.push_back(json{{"kind", b.kind}, {"text", b.text}});
    return json{{"prompt_type", std::string(to_string(prompt_type))},
                {"blocks", blocks},
                {"instruction", instruction_text}};
  }
};

enum class ResolutionMethod { Exact, Fallback, Unresolved };

inline const char* to_string(ResolutionMethod m) {
  switch (m) {
    case ResolutionMethod::Exact: return "exact";
    case ResolutionMethod::Fallback: return "fallback";
    case ResolutionMethod::Unresolved: return "unresolved";
  }
  return "?";
}

struct PlanResult {
  std::string context_item_id;
  std::string raw_generation;
  std::optional<std::string> rationale;  // CoT stage-1 output
  std::optional<std::string> resolved_cluster;
  bool exact_match = false;
  ResolutionMethod resolution_method = ResolutionMethod::Unresolved;
  std::optional<std::string> error_note;
};

// Backend contract: identical prompts must yield identical texts when
// deterministic() is true. Implementations must be safe for concurrent calls.
class GenerationBackend {
 public:
  GenerationBackend() = default;
  GenerationBackend(GenerationBackend&& other) noexcept
      : calls_(other.calls_.load()) {}
  GenerationBackend& operator=(GenerationBackend&& other) noexcept {
    calls_.store(other.calls_.load());
    return *this;
  }
  virtual ~GenerationBackend() = default;

  std::string generate(const Prompt& prompt, const std::string& item_id) {
    ++calls_;
    return do_generate(prompt, item_id);
  }

  virtual bool deterministic() const = 0;
  std::size_t call_count() const { return calls_.load(); }
  void reset_call_count() { calls_.store(0); }

 protected:
  virtual std::string do_generate(const Prompt& prompt,
                                  const std::string& item_id) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

// f captions at indices floor(i*N/f); all N when the item has fewer than f.
inline std::vector<std::string> sample_frames(const Item& item, std::size_t f) {
  if (f == 0) throw ValidationError("sample_frames: f must be >= 1");
  const std::size_t n = item.frame_captions.size();
  if (n <= f) return item.frame_captions;
  std::vector<std::string> out;
  out.reserve(f);
  for (std::size_t i = 0; i < f; ++i)
    out.push_back(item.frame_captions[i * n / f]);
  return out;
}

// Prompt wording lives here so experiments stay comparable across runs.
struct PromptTemplates {
  std::string system_text =
      "You are a recommendation planner for a short-form video platform. "
      "You know the platform's interest cluster descriptions.";
  std::string direct_instruction =
      "Given the context video above, output the description of one interest "
      "cluster that would be a serendipitous next recommendation: related to "
      "the user's interest, yet outside the video's own cluster. Answer with "
      "the cluster description only.";
  std::string cot_stage1_instruction =
      "Step 1: summarize the content of the video above in two sentences, "
      "covering its topic and visual style.";
  std::string cot_stage2_prefix = "Content summary: ";
  std::string cot_stage2_instruction =
      "Step 2: based on the summary, output the description of one interest "
      "cluster that would be a serendipitous next recommendation. Answer with "
      "the cluster description only.";
};

struct PlannerConfig {
  std::size_t frames = 4;
  bool use_thumbnail = false;
  int level = 3;                   // planning level, same l as mining
  bool strict_resolution = false;  // true disables edit-distance fallback
  double max_normalized_distance = 0.25;
  std::size_t retries = 2;
  PromptTemplates templates;
};

inline Prompt assemble_prompt(const Item& item, const ClusterTree& tree,
                              PromptType type, const PlannerConfig& cfg,
                              int cot_stage = 0) {
  Prompt p;
  p.prompt_type = type;
  p.system_text = cfg.templates.system_text;
  p.cot_stage = cot_stage;
  p.context_blocks.push_back({"title", item.title});

  const bool wants_text = type == PromptType::TextOnly || type == PromptType::VideoAndText;
  const bool wants_video = type != PromptType::TextOnly;

  if (wants_text) {
    const std::string& leaf = tree.leaf_of(item.item_id);
    const std::string& own =
        tree.node(tree.ancestor_at(leaf, cfg.level)).description;
    p.context_blocks.push_back({"cluster_description", own});
  }
  if (wants_video) {
    if (cfg.use_thumbnail) {
      if (!item.thumbnail_caption)
        throw DataError("item has no thumbnail caption: " + item.item_id);
      p.context_blocks.push_back({"thumbnail_caption", *item.thumbnail_caption});
    } else {
      auto frames = sample_frames(item, cfg.frames);
      if (frames.empty() &&
          (type == PromptType::VideoOnly || type == PromptType::VideoCoT))
        throw DataError("video prompt with zero frame captions: " + item.item_id);
      for (auto& f : frames) p.context_blocks.push_back({"frame_caption", f});
    }
  }

  if (type == PromptType::VideoCoT) {
    p.instruction_text = cot_stage == 1 ? cfg.templates.cot_stage1_instruction
                                        : cfg.templates.cot_stage2_instruction;
  } else {
    p.instruction_text = cfg.templates.direct_instruction;
  }
  return p;
}

// Exact trimmed match against the planning-level vocabulary; under the
// fallback policy, nearest description by normalized Levenshtein distance
// within the threshold, ties lexicographic.
inline std::size_t levenshtein(const std::string& a, const std::string& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

inline double normalized_edit_distance(const std::string& a, const std::string& b) {
  std::size_t mx = std::max(a.size(), b.size());
  if (mx == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(mx);
}

inline std::pair<std::optional<std::string>, ResolutionMethod> resolve_generation(
    const ClusterTree& tree, const std::string& text, const PlannerConfig& cfg) {
  const std::string trimmed = ClusterTree::trim(text);
  if (auto node = tree.resolve_description(trimmed)) {
    if (tree.node(*node).level == cfg.level)
      return {node, ResolutionMethod::Exact};
  }
  if (cfg.strict_resolution) return {std::nullopt, ResolutionMethod::Unresolved};

  std::optional<std::string> best_desc;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& desc : tree.descriptions_at_level(cfg.level)) {
    double d = normalized_edit_distance(trimmed, desc);
    if (d > cfg.max_normalized_distance + 1e-12) continue;
    if (!best_desc || d < best_dist - 1e-12 ||
        (d < best_dist + 1e-12 && desc < *best_desc)) {
      best_dist = d;
      best_desc = desc;
    }
  }
  if (!best_desc) return {std::nullopt, ResolutionMethod::Unresolved};
  return {tree.resolve_description(*best_desc), ResolutionMethod::Fallback};
}

// One backend call per item, two for VideoCoT (summary, then selection with
// the summary folded into the stage-2 instruction). Unresolved output is a
// value, not an error.
inline PlanResult plan_cluster(GenerationBackend& backend, const ClusterTree& tree,
                               const Item& item, PromptType type,
                               const PlannerConfig& cfg) {
  PlanResult result;
  result.context_item_id = item.item_id;

  auto call = [&](const Prompt& p) -> std::string {
    for (std::size_t attempt = 0;; ++attempt) {
      try {
        return backend.generate(p, item.item_id);
      } catch (const BackendError& e) {
        if (attempt >= cfg.retries)
          throw BackendError("backend failed for item " + item.item_id + ": " +
                             e.what());
      }
    }
  };

  std::string generation;
  if (type == PromptType::VideoCoT) {
    Prompt stage1 = assemble_prompt(item, tree, type, cfg, 1);
    std::string summary = call(stage1);
    result.rationale = summary;
    Prompt stage2 = assemble_prompt(item, tree, type, cfg, 2);
    stage2.instruction_text = cfg.templates.cot_stage2_prefix + summary + "\n" +
                              stage2.instruction_text;
    generation = call(stage2);
  } else {
    generation = call(assemble_prompt(item, tree, type, cfg));
  }

  result.raw_generation = generation;
  auto [node, method] = resolve_generation(tree, generation, cfg);
  result.resolved_cluster = node;
  result.resolution_method = method;
  result.exact_match = method == ResolutionMethod::Exact;
  return result;
}

// ---------------------------------------------------------------------------
// Backends

// Emits the curated label for each item; for CoT stage 1 it emits a canned
// summary. Used as the test oracle.
class OracleStubBackend : public GenerationBackend {
 public:
  explicit OracleStubBackend(std::map<std::string, std::string> labels)
      : labels_(std::move(labels)) {}

  // Tree-derived oracle: for each item, the description of a sibling cluster
  // under the same level-(l-delta) parent (a guaranteed serendipitous plan).
  static OracleStubBackend from_tree(const ClusterTree& tree,
                                     const ItemCatalog& catalog, int level,
                                     int delta) {
    std::map<std::string, std::string> labels;
    for (const auto& [id, item] : catalog.items()) {
      const std::string& own = tree.item_ancestor_at(id, level);
      const std::string& broad = tree.item_ancestor_at(id, level - delta);
      // first sibling at `level` under `broad` that is not the item's own
      std::optional<std::string> pick;
      for (const auto& node_id : tree.node_ids_at_level(level)) {
        const auto& n = tree.node(node_id);
        if (n.member_items.empty()) continue;
        if (node_id == own) continue;
        if (tree.ancestor_at(node_id, level - delta) != broad) continue;
        pick = node_id;
        break;
      }
      labels[id] = pick ? tree.node(*pick).description : tree.node(own).description;
    }
    return OracleStubBackend(std::move(labels));
  }

  bool deterministic() const override { return true; }

 protected:
  std::string do_generate(const Prompt& prompt, const std::string& item_id) override {
    if (prompt.cot_stage == 1) return "A short summary of item " + item_id + ".";
    auto it = labels_.find(item_id);
    if (it == labels_.end())
      throw BackendError("oracle stub has no label for item " + item_id);
    return it->second;
  }

 private:
  std::map<std::string, std::string> labels_;
};

// Corrupts the oracle label with probability q, keyed on a hash of the item
// id and the seed, so repeated prompts stay identical.
class NoisyStubBackend : public GenerationBackend {
 public:
  NoisyStubBackend(std::map<std::string, std::string> labels, double q,
                   std::uint64_t seed)
      : labels_(std::move(labels)), q_(q), seed_(seed) {
    if (q < 0.0 || q > 1.0)
      throw ValidationError("noisy stub: q must be in [0,1]");
  }

  bool deterministic() const override { return true; }

 protected:
  std::string do_generate(const Prompt& prompt, const std::string& item_id) override {
    if (prompt.cot_stage == 1) return "A short summary of item " + item_id + ".";
    auto it = labels_.find(item_id);
    if (it == labels_.end())
      throw BackendError("noisy stub has no label for item " + item_id);
    std::uint64_t h = std::hash<std::string>{}(item_id) ^ (seed_ * 0x9e3779b97f4a7c15ULL);
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    double u = static_cast<double>(h % 1000000007ULL) / 1000000007.0;
    if (u < q_) return it->second + " ???";  // never matches a description
    return it->second;
  }

 private:
  std::map<std::string, std::string> labels_;
  double q_;
  std::uint64_t seed_;
};

// Replays recorded generations keyed by (item, prompt type, stage).
class ReplayBackend : public GenerationBackend {
 public:
  explicit ReplayBackend(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open replay file: " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      Key k{j.at("item_id").get<std::string>(),
            j.at("prompt_type").get<std::string>(), j.value("stage", 0)};
      recordings_[k] = j.at("text").get<std::string>();
    }
  }

  bool deterministic() const override { return true; }

 protected:
  std::string do_generate(const Prompt& prompt, const std::string& item_id) override {
    Key k{item_id, to_string(prompt.prompt_type), prompt.cot_stage};
    auto it = recordings_.find(k);
    if (it == recordings_.end())
      throw BackendError("no recorded generation for item " + item_id +
                         " prompt " + to_string(prompt.prompt_type) + " stage " +
                         std::to_string(prompt.cot_stage));
    return it->second;
  }

 private:
  using Key = std::tuple<std::string, std::string, int>;
  std::map<Key, std::string> recordings_;
};

inline void record_replay_row(std::ostream& out, const std::string& item_id,
                              PromptType type, int stage, const std::string& text) {
  out << json{{"item_id", item_id},
              {"prompt_type", std::string(to_string(type))},
              {"stage", stage},
              {"text", text}}
             .dump()
      << "\n";
}

}  // namespace serendip
