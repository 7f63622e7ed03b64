#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "serendip/corpus.hpp"

namespace serendip {

struct SyntheticConfig {
  std::size_t n_items = 2000;
  std::size_t dimension = 16;
  std::size_t n_topics = 32;
  std::size_t n_users = 100;
  std::size_t n_interactions = 20000;
  double traffic_exponent = 0.7;  // 0 gives near-uniform traffic
  std::uint64_t seed = 7;
};

namespace detail {

inline const std::vector<std::string>& word_bank() {
  static const std::vector<std::string> words = {
      "chess",    "guitar",  "baking",   "soccer",   "origami", "astronomy",
      "kayak",    "pottery", "salsa",    "sushi",    "drums",   "skiing",
      "garden",   "magic",   "poker",    "anime",    "crochet", "surfing",
      "violin",   "ramen",   "boxing",   "haiku",    "tango",   "espresso",
      "cycling",  "jazz",    "woodwork", "climbing", "calligraphy", "drone",
      "archery",  "bonsai",  "karaoke",  "parkour",  "quilting", "robotics",
      "sailing",  "tarot",   "ukulele",  "vlogging", "welding", "yoga",
      "zumba",    "aquarium", "birding", "candles",  "darts",   "embroidery",
      "fencing",  "geology", "hiking",   "illusion", "juggling", "knitting",
      "lacrosse", "murals",  "numismatics", "opera", "pinball", "quizzes",
      "rowing",   "sketching", "trivia", "unicycle", "ventriloquism", "wrestling",
      "xylophone", "yodeling", "ziplines", "astrology", "billiards", "ceramics"};
  return words;
}

inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) / 9007199254740992.0;
}

inline double gauss(std::mt19937_64& rng) {
  // Box-Muller, hand-rolled for cross-platform determinism
  double u1 = std::max(unit_draw(rng), 1e-12);
  double u2 = unit_draw(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace detail

// Items grouped around random topic archetypes: topic vectors are noisy
// copies of the archetype direction, titles draw from topic-specific word
// pools, traffic follows a rough power law.
inline ItemCatalog generate_items(const SyntheticConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  const auto& words = detail::word_bank();

  std::vector<std::vector<double>> archetypes(cfg.n_topics);
  for (auto& a : archetypes) {
    a.resize(cfg.dimension);
    for (auto& x : a) x = detail::gauss(rng);
    ItemCatalog::normalize(a);
  }
  // three dedicated words per topic, cycled through the bank
  std::vector<std::vector<std::string>> topic_words(cfg.n_topics);
  for (std::size_t t = 0; t < cfg.n_topics; ++t)
    for (std::size_t w = 0; w < 3; ++w)
      topic_words[t].push_back(words[(t * 3 + w) % words.size()] +
                               (t * 3 + w >= words.size()
                                    ? std::to_string((t * 3 + w) / words.size())
                                    : ""));

  ItemCatalog catalog(cfg.dimension);
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    std::size_t t = i % cfg.n_topics;
    Item item;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "v%05zu", i);
    item.item_id = buf;
    item.topic_vector = archetypes[t];
    for (auto& x : item.topic_vector) x += 0.35 * detail::gauss(rng);
    ItemCatalog::normalize(item.topic_vector);

    const auto& tw = topic_words[t];
    item.title = tw[rng() % tw.size()];
    for (int w = 0; w < 2; ++w) item.title += " " + tw[rng() % tw.size()];
    if (detail::unit_draw(rng) < 0.3)
      item.title += " " + words[rng() % words.size()];

    // power-law-ish traffic with jitter
    double rank = static_cast<double>(i % cfg.n_items) + 1.0;
    item.traffic_weight = 1000.0 / std::pow(rank, cfg.traffic_exponent) *
                          (0.5 + detail::unit_draw(rng));

    std::size_t n_frames = 2 + rng() % 7;
    for (std::size_t f = 0; f < n_frames; ++f)
      item.frame_captions.push_back("frame " + std::to_string(f) + " of " +
                                    item.title);
    item.thumbnail_caption = "thumbnail of " + item.title;
    item.visually_interesting_score = detail::unit_draw(rng);
    catalog.add(std::move(item));
  }
  return catalog;
}

// Transitions mix same-topic, neighbor-topic, and random next items;
// satisfaction is likeliest for the neighbor-topic ("surprising but close")
// transitions so mining has signal to find.
inline InteractionLog generate_interactions(const ItemCatalog& catalog,
                                            const SyntheticConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0xabcdef12345ULL);
  std::vector<const Item*> items;
  for (const auto& [id, item] : catalog.items()) items.push_back(&item);

  // traffic-weighted context sampling via cumulative weights
  std::vector<double> cum;
  double total = 0.0;
  for (const Item* it : items) {
    total += it->traffic_weight;
    cum.push_back(total);
  }
  auto draw_weighted = [&]() -> std::size_t {
    double r = detail::unit_draw(rng) * total;
    return static_cast<std::size_t>(
        std::lower_bound(cum.begin(), cum.end(), r) - cum.begin());
  };
  auto similarity = [](const Item* a, const Item* b) {
    double s = 0.0;
    for (std::size_t d = 0; d < a->topic_vector.size(); ++d)
      s += a->topic_vector[d] * b->topic_vector[d];
    return s;
  };

  InteractionLog log;
  for (std::size_t i = 0; i < cfg.n_interactions; ++i) {
    const Item* context = items[draw_weighted()];
    const Item* next = nullptr;
    double roll = detail::unit_draw(rng);
    for (int attempt = 0; attempt < 20 && next == nullptr; ++attempt) {
      const Item* cand = items[draw_weighted()];
      if (cand == context) continue;
      double sim = similarity(context, cand);
      if (roll < 0.5) {
        if (sim > 0.8) next = cand;  // same interest
      } else if (roll < 0.8) {
        if (sim > 0.2 && sim <= 0.8) next = cand;  // adjacent interest
      } else {
        next = cand;  // anything
      }
    }
    if (next == nullptr) next = items[draw_weighted()];
    if (next == context) continue;

    double sim = similarity(context, next);
    double p_satisfied = sim > 0.8 ? 0.35 : (sim > 0.2 ? 0.55 : 0.15);
    InteractionRecord rec;
    rec.user_id = "u" + std::to_string(rng() % cfg.n_users);
    rec.context_item_id = context->item_id;
    rec.next_item_id = next->item_id;
    rec.satisfied = detail::unit_draw(rng) < p_satisfied;
    rec.timestamp = 1700000000 + static_cast<std::int64_t>(i) * 60;
    log.records.push_back(std::move(rec));
  }
  return log;
}

}  // namespace serendip
