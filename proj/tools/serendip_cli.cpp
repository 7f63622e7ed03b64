// Pipeline orchestrator: reproducible, configuration-driven subcommands over
// the catalog -> tree -> mining -> curation -> batch planning -> retrieval ->
// evaluation chain. Exit codes: 0 ok, 1 validation error, 2 data error,
// 3 backend error. Each subcommand prints one JSON summary line on stdout.

#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "serendip/batchinfer.hpp"
#include "serendip/clustertree.hpp"
#include "serendip/corpus.hpp"
#include "serendip/errors.hpp"
#include "serendip/evalsim.hpp"
#include "serendip/planner.hpp"
#include "serendip/remote_backend.hpp"
#include "serendip/retriever.hpp"
#include "serendip/serendipity.hpp"
#include "serendip/synthetic.hpp"

namespace fs = std::filesystem;
using namespace serendip;

namespace {

struct PipelineConfig {
  // paths
  std::string items_path = "data/items.jsonl";
  std::string interactions_path = "data/interactions.jsonl";
  std::string tree_path = "data/tree.json";
  std::string stats_path = "data/mined_stats.jsonl";
  std::string training_path = "data/training.jsonl";
  std::string cache_path = "data/plan_cache.json";
  std::string impressions_path = "data/impressions.jsonl";
  // corpus
  std::size_t dimension = 16;
  // tree
  int levels = 4;
  std::vector<std::size_t> branching = {4, 4, 4};
  double balance_tolerance = 0.25;
  std::uint64_t tree_seed = 42;
  // serendipity
  int level = 3;
  int delta = 1;
  std::size_t top_k = 10;
  std::size_t min_support = 5;
  std::int64_t session_gap_seconds = 1800;
  // planner
  std::string prompt_type = "video_cot";
  std::size_t frames = 4;
  bool use_thumbnail = false;
  bool strict_resolution = false;
  double max_normalized_distance = 0.25;
  std::string backend = "oracle";  // oracle | noisy:q,seed | replay:path | remote:host:port
  // batch
  double target_coverage = 0.8;
  std::size_t workers = 4;
  std::uint64_t corpus_version = 1;
  // retriever
  double lambda = 0.0000011460074;  // ln(2) / 7 days, in 1/seconds
  double beta = 0.1;
  // simulation
  std::size_t sim_users = 50;
  std::size_t sim_steps = 10000;
  std::size_t sim_k = 5;
  double p_similar = 0.3;
  double p_serendip = 0.5;
  double p_unrelated = 0.1;
  double visual_boost = 0.0;
  std::uint64_t sim_seed = 1;
  // gen-data
  std::size_t gen_items = 2000;
  std::size_t gen_interactions = 20000;
  std::uint64_t gen_seed = 7;

  void validate() const {
    if (level - delta < 0) throw ValidationError("l - delta must be >= 0");
    if (delta < 1) throw ValidationError("delta must be >= 1");
    if (level > levels - 1) throw ValidationError("level exceeds tree depth");
    if (top_k == 0) throw ValidationError("top-k must be positive");
    if (target_coverage < 0.0 || target_coverage > 1.0)
      throw ValidationError("target coverage must be in [0,1]");
    if (branching.size() != static_cast<std::size_t>(levels) - 1)
      throw ValidationError("branching must list levels-1 fan-outs");
  }
};

// plain key=value config file, '#' comments, CLI flags override
void load_config_file(const std::string& path, PipelineConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = ClusterTree::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("bad config line: " + line);
    std::string key = ClusterTree::trim(line.substr(0, eq));
    std::string value = ClusterTree::trim(line.substr(eq + 1));
    if (key == "items_path") cfg.items_path = value;
    else if (key == "interactions_path") cfg.interactions_path = value;
    else if (key == "tree_path") cfg.tree_path = value;
    else if (key == "stats_path") cfg.stats_path = value;
    else if (key == "training_path") cfg.training_path = value;
    else if (key == "cache_path") cfg.cache_path = value;
    else if (key == "impressions_path") cfg.impressions_path = value;
    else if (key == "dimension") cfg.dimension = std::stoul(value);
    else if (key == "levels") cfg.levels = std::stoi(value);
    else if (key == "branching") {
      cfg.branching.clear();
      std::stringstream ss(value);
      std::string tok;
      while (std::getline(ss, tok, ',')) cfg.branching.push_back(std::stoul(tok));
    }
    else if (key == "balance_tolerance") cfg.balance_tolerance = std::stod(value);
    else if (key == "tree_seed") cfg.tree_seed = std::stoull(value);
    else if (key == "level") cfg.level = std::stoi(value);
    else if (key == "delta") cfg.delta = std::stoi(value);
    else if (key == "top_k") cfg.top_k = std::stoul(value);
    else if (key == "min_support") cfg.min_support = std::stoul(value);
    else if (key == "session_gap_seconds") cfg.session_gap_seconds = std::stoll(value);
    else if (key == "prompt_type") cfg.prompt_type = value;
    else if (key == "frames") cfg.frames = std::stoul(value);
    else if (key == "use_thumbnail") cfg.use_thumbnail = value == "true";
    else if (key == "strict_resolution") cfg.strict_resolution = value == "true";
    else if (key == "max_normalized_distance") cfg.max_normalized_distance = std::stod(value);
    else if (key == "backend") cfg.backend = value;
    else if (key == "target_coverage") cfg.target_coverage = std::stod(value);
    else if (key == "workers") cfg.workers = std::stoul(value);
    else if (key == "corpus_version") cfg.corpus_version = std::stoull(value);
    else if (key == "lambda") cfg.lambda = std::stod(value);
    else if (key == "beta") cfg.beta = std::stod(value);
    else if (key == "sim_users") cfg.sim_users = std::stoul(value);
    else if (key == "sim_steps") cfg.sim_steps = std::stoul(value);
    else if (key == "sim_k") cfg.sim_k = std::stoul(value);
    else if (key == "p_similar") cfg.p_similar = std::stod(value);
    else if (key == "p_serendip") cfg.p_serendip = std::stod(value);
    else if (key == "p_unrelated") cfg.p_unrelated = std::stod(value);
    else if (key == "visual_boost") cfg.visual_boost = std::stod(value);
    else if (key == "sim_seed") cfg.sim_seed = std::stoull(value);
    else if (key == "gen_items") cfg.gen_items = std::stoul(value);
    else if (key == "gen_interactions") cfg.gen_interactions = std::stoul(value);
    else if (key == "gen_seed") cfg.gen_seed = std::stoull(value);
    else throw ValidationError("unknown config key: " + key);
  }
}

PlannerConfig planner_config(const PipelineConfig& cfg) {
  PlannerConfig pc;
  pc.frames = cfg.frames;
  pc.use_thumbnail = cfg.use_thumbnail;
  pc.level = cfg.level;
  pc.strict_resolution = cfg.strict_resolution;
  pc.max_normalized_distance = cfg.max_normalized_distance;
  return pc;
}

std::unique_ptr<GenerationBackend> make_backend(const PipelineConfig& cfg,
                                                const ClusterTree& tree,
                                                const ItemCatalog& catalog) {
  const std::string& spec = cfg.backend;
  if (spec == "oracle") {
    return std::make_unique<OracleStubBackend>(
        OracleStubBackend::from_tree(tree, catalog, cfg.level, cfg.delta));
  }
  if (spec.rfind("noisy:", 0) == 0) {
    // noisy:<q>,<seed>
    std::string rest = spec.substr(6);
    auto comma = rest.find(',');
    double q = std::stod(rest.substr(0, comma));
    std::uint64_t seed = comma == std::string::npos
                             ? 1
                             : std::stoull(rest.substr(comma + 1));
    auto oracle = OracleStubBackend::from_tree(tree, catalog, cfg.level, cfg.delta);
    std::map<std::string, std::string> labels;
    for (const auto& [id, item] : catalog.items()) {
      Prompt probe;
      probe.cot_stage = 0;
      labels[id] = oracle.generate(probe, id);
    }
    return std::make_unique<NoisyStubBackend>(std::move(labels), q, seed);
  }
  if (spec.rfind("replay:", 0) == 0)
    return std::make_unique<ReplayBackend>(spec.substr(7));
  if (spec.rfind("remote:", 0) == 0) {
    std::string rest = spec.substr(7);
    auto colon = rest.rfind(':');
    if (colon == std::string::npos)
      throw ValidationError("remote backend spec must be remote:host:port");
    return std::make_unique<RemoteBackend>(rest.substr(0, colon),
                                           std::stoi(rest.substr(colon + 1)));
  }
  throw ValidationError("unknown backend spec: " + spec);
}

void emit(const json& summary) { std::cout << summary.dump() << std::endl; }

void ensure_parent_dir(const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// ---- subcommand bodies ----

json cmd_gen_data(const PipelineConfig& cfg) {
  SyntheticConfig sc;
  sc.n_items = cfg.gen_items;
  sc.dimension = cfg.dimension;
  sc.n_users = cfg.sim_users;
  sc.n_interactions = cfg.gen_interactions;
  sc.seed = cfg.gen_seed;
  auto catalog = generate_items(sc);
  auto log = generate_interactions(catalog, sc);
  ensure_parent_dir(cfg.items_path);
  ensure_parent_dir(cfg.interactions_path);
  store_items(catalog, cfg.items_path);
  store_interactions(log, cfg.interactions_path);
  return {{"command", "gen-data"},
          {"items", catalog.size()},
          {"interactions", log.records.size()},
          {"items_path", cfg.items_path},
          {"interactions_path", cfg.interactions_path}};
}

json cmd_build_tree(const PipelineConfig& cfg) {
  auto catalog = load_items(cfg.items_path, cfg.dimension);
  TreeConfig tc{cfg.levels, cfg.branching, cfg.balance_tolerance, cfg.tree_seed};
  auto tree = build_tree(catalog, tc);
  ensure_parent_dir(cfg.tree_path);
  tree.save(cfg.tree_path);
  std::size_t leaves = 0;
  for (const auto& [id, n] : tree.nodes())
    if (n.level == tree.levels() - 1) ++leaves;
  return {{"command", "build-tree"},
          {"nodes", tree.nodes().size()},
          {"leaves", leaves},
          {"levels", tree.levels()},
          {"version", tree.version()},
          {"tree_path", cfg.tree_path}};
}

json cmd_mine(const PipelineConfig& cfg) {
  auto catalog = load_items(cfg.items_path, cfg.dimension);
  auto log = load_interactions(cfg.interactions_path, catalog);
  auto tree = ClusterTree::load(cfg.tree_path);
  auto result = mine_pairs(log, tree, cfg.level, cfg.delta);
  ensure_parent_dir(cfg.stats_path);
  std::ofstream out(cfg.stats_path);
  if (!out) throw DataError("cannot write stats file: " + cfg.stats_path);
  for (const auto& s : result.stats)
    out << json{{"context_item_id", s.context_item_id},
                {"target_cluster_id", s.target_cluster_id},
                {"positive_count", s.positive_count},
                {"total_count", s.total_count}}
               .dump()
        << "\n";
  return {{"command", "mine"},
          {"stats", result.stats.size()},
          {"serendipitous_transitions", result.serendipitous_transitions},
          {"skipped_records", result.skipped_records},
          {"stats_path", cfg.stats_path}};
}

std::vector<SatisfactionStat> load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stats file: " + path);
  std::vector<SatisfactionStat> stats;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    SatisfactionStat s;
    j.at("context_item_id").get_to(s.context_item_id);
    j.at("target_cluster_id").get_to(s.target_cluster_id);
    j.at("positive_count").get_to(s.positive_count);
    j.at("total_count").get_to(s.total_count);
    stats.push_back(std::move(s));
  }
  return stats;
}

json cmd_curate(const PipelineConfig& cfg) {
  auto tree = ClusterTree::load(cfg.tree_path);
  auto stats = load_stats(cfg.stats_path);
  auto examples = curate_training_data(stats, tree, cfg.top_k, cfg.min_support);
  ensure_parent_dir(cfg.training_path);
  export_training_file(examples, tree, cfg.level, cfg.training_path);
  std::set<std::string> clusters;
  for (const auto& ex : examples) clusters.insert(ex.target_cluster_id);
  return {{"command", "curate"},
          {"examples", examples.size()},
          {"clusters", clusters.size()},
          {"training_path", cfg.training_path}};
}

json cmd_serve_batch(const PipelineConfig& cfg, bool incremental, bool compact) {
  auto catalog = load_items(cfg.items_path, cfg.dimension);
  auto log = load_interactions(cfg.interactions_path, catalog);
  auto tree = ClusterTree::load(cfg.tree_path);
  auto selection = select_corpus(catalog, log, cfg.target_coverage);

  auto backend = make_backend(cfg, tree, catalog);
  BatchConfig bc;
  bc.prompt_type = prompt_type_from_string(cfg.prompt_type);
  bc.planner = planner_config(cfg);
  bc.workers = cfg.workers;
  bc.corpus_version = cfg.corpus_version;
  bc.run_id = "run-" + std::to_string(std::time(nullptr));

  PlanCache previous;
  const PlanCache* prev_ptr = nullptr;
  if (incremental && fs::exists(cfg.cache_path)) {
    previous = load_cache(cfg.cache_path);
    prev_ptr = &previous;  // run_batch rebuilds in full if the tree moved
  }
  auto cache = run_batch(*backend, tree, catalog, selection, bc, prev_ptr);
  if (compact) compact_cache(cache, selection);
  ensure_parent_dir(cfg.cache_path);
  store_cache(cache, cfg.cache_path);
  const auto& run = cache.run_log.back();
  return {{"command", "serve-batch"},
          {"selected", selection.selected.size()},
          {"achieved_coverage", selection.achieved_coverage},
          {"target_unreachable", selection.target_unreachable},
          {"processed_count", run.processed_count},
          {"reused_count", run.reused_count},
          {"failure_count", run.failure_count},
          {"backend_calls", backend->call_count()},
          {"cache_path", cfg.cache_path}};
}

json cmd_recommend(const PipelineConfig& cfg, const std::string& context,
                   std::size_t k, const std::string& mode) {
  auto catalog = load_items(cfg.items_path, cfg.dimension);
  auto log = load_interactions(cfg.interactions_path, catalog);
  auto tree = ClusterTree::load(cfg.tree_path);
  auto model = train_cooccurrence(log, catalog, cfg.lambda);
  RetrieverConfig rc{cfg.level, cfg.beta};

  json out = {{"command", "recommend"}, {"context", context}, {"mode", mode}};
  std::vector<Recommendation> recs;
  if (mode == "serendip") {
    if (!fs::exists(cfg.cache_path))
      throw NoPlanError("plan cache not found; run serve-batch first");
    auto cache = load_cache(cfg.cache_path, tree.version());
    recs = recommend_restricted(model, tree, cache, context, k, rc);
    auto entry = cache.entries.find(context);
    if (entry != cache.entries.end() && entry->second.resolved_cluster)
      out["planned_cluster_description"] =
          tree.node(*entry->second.resolved_cluster).description;
  } else if (mode == "exploit") {
    recs = recommend_exploit(model, catalog, context, k, rc);
  } else {
    throw ValidationError("mode must be serendip or exploit");
  }
  json items = json::array();
  for (const auto& r : recs)
    items.push_back({{"item_id", r.item_id},
                     {"score", r.score},
                     {"title", catalog.at(r.item_id).title}});
  out["recommendations"] = items;
  return out;
}

std::vector<ImpressionEvent> load_impressions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open impressions file: " + path);
  std::vector<ImpressionEvent> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ImpressionEvent e;
    j.at("model").get_to(e.model);
    j.at("user_id").get_to(e.user_id);
    j.at("context_item_id").get_to(e.context_item_id);
    j.at("item_id").get_to(e.item_id);
    j.at("engaged").get_to(e.engaged);
    events.push_back(std::move(e));
  }
  return events;
}

json cmd_simulate(const PipelineConfig& cfg) {
  auto catalog = load_items(cfg.items_path, cfg.dimension);
  auto log = load_interactions(cfg.interactions_path, catalog);
  auto tree = ClusterTree::load(cfg.tree_path);
  if (!fs::exists(cfg.cache_path))
    throw DataError("plan cache not found; run serve-batch first");
  auto cache = load_cache(cfg.cache_path, tree.version());
  auto model = train_cooccurrence(log, catalog, cfg.lambda);
  RetrieverConfig rc{cfg.level, cfg.beta};

  std::vector<SimPolicy> policies;
  policies.push_back({"serendip", [&](const std::string& ctx, std::size_t k) {
                        return recommend_restricted(model, tree, cache, ctx, k, rc);
                      }});
  policies.push_back({"exploit", [&](const std::string& ctx, std::size_t k) {
                        return recommend_exploit(model, catalog, ctx, k, rc);
                      }});

  SimConfig sc;
  sc.n_users = cfg.sim_users;
  sc.n_steps = cfg.sim_steps;
  sc.k = cfg.sim_k;
  sc.level = cfg.level;
  sc.delta = cfg.delta;
  sc.p_similar = cfg.p_similar;
  sc.p_serendip = cfg.p_serendip;
  sc.p_unrelated = cfg.p_unrelated;
  sc.visual_boost = cfg.visual_boost;
  sc.seed = cfg.sim_seed;
  auto out = simulate(catalog, tree, policies, sc);

  ensure_parent_dir(cfg.impressions_path);
  std::ofstream imp(cfg.impressions_path);
  if (!imp) throw DataError("cannot write impressions: " + cfg.impressions_path);
  for (const auto& e : out.impressions)
    imp << json{{"model", e.model},
                {"user_id", e.user_id},
                {"context_item_id", e.context_item_id},
                {"item_id", e.item_id},
                {"engaged", e.engaged}}
               .dump()
        << "\n";
  return {{"command", "simulate"},
          {"steps", cfg.sim_steps},
          {"impressions", out.impressions.size()},
          {"impressions_path", cfg.impressions_path}};
}

json cmd_eval(const PipelineConfig& cfg, const std::string& bucket_csv) {
  auto catalog = load_items(cfg.items_path, cfg.dimension);
  auto tree = ClusterTree::load(cfg.tree_path);
  json out = {{"command", "eval"}};

  if (fs::exists(cfg.training_path)) {
    auto tf = load_training_file(cfg.training_path);
    auto backend = make_backend(cfg, tree, catalog);
    PlannerConfig pc = planner_config(cfg);
    PromptType type = prompt_type_from_string(cfg.prompt_type);
    std::vector<std::pair<PlanResult, std::string>> labeled;
    for (const auto& ex : tf.examples) {
      if (!catalog.contains(ex.context_item_id)) continue;
      labeled.emplace_back(plan_cluster(*backend, tree,
                                        catalog.at(ex.context_item_id), type, pc),
                           ex.target_description);
    }
    auto report = evaluate(labeled, tree);
    out["match_rate"] = report.match_rate;
    out["recall"] = report.recall;
    out["n_examples"] = report.n_examples;
  }

  if (fs::exists(cfg.impressions_path)) {
    auto impressions = load_impressions(cfg.impressions_path);
    auto novelty = novelty_report(impressions);
    json jn = json::object();
    for (const auto& [m, r] : novelty)
      jn[m] = {{"impressions", r.impressions},
               {"novel_impressions", r.novel_impressions},
               {"novel_ratio", r.novel_ratio},
               {"positive_feedback_ratio", r.positive_feedback_ratio}};
    out["novelty"] = jn;

    try {
      auto buckets = bucket_analysis(catalog, impressions, "serendip", "exploit");
      json jb = json::array();
      for (const auto& b : buckets)
        jb.push_back({{"bucket", b.bucket},
                      {"gain", b.gain},
                      {"serendip_rate", b.serendip_rate},
                      {"exploit_rate", b.exploit_rate},
                      {"impressions", b.impressions}});
      out["buckets"] = jb;
      if (!bucket_csv.empty()) {
        std::ofstream csv(bucket_csv);
        csv << "bucket,min_score,max_score,serendip_rate,exploit_rate,gain,impressions\n";
        for (const auto& b : buckets)
          csv << b.bucket << "," << b.min_score << "," << b.max_score << ","
              << b.serendip_rate << "," << b.exploit_rate << "," << b.gain << ","
              << b.impressions << "\n";
      }
    } catch (const DataError&) {
      out["buckets"] = nullptr;  // no scored contexts in the impression log
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serendipitous recommendation pipeline"};
  app.require_subcommand(1);

  PipelineConfig cfg;
  std::string config_path;
  app.add_option("--config", config_path, "key=value config file");

  // flag overrides shared across subcommands
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--items", cfg.items_path);
    sub->add_option("--interactions", cfg.interactions_path);
    sub->add_option("--tree", cfg.tree_path);
    sub->add_option("--stats", cfg.stats_path);
    sub->add_option("--training", cfg.training_path);
    sub->add_option("--cache", cfg.cache_path);
    sub->add_option("--impressions", cfg.impressions_path);
    sub->add_option("--dimension", cfg.dimension);
    sub->add_option("--level", cfg.level);
    sub->add_option("--delta", cfg.delta);
    sub->add_option("--backend", cfg.backend);
    sub->add_option("--prompt-type", cfg.prompt_type);
    sub->add_option("--seed", cfg.tree_seed);
  };

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  add_common(gen);
  gen->add_option("--n-items", cfg.gen_items);
  gen->add_option("--n-interactions", cfg.gen_interactions);
  gen->add_option("--gen-seed", cfg.gen_seed);

  auto* bt = app.add_subcommand("build-tree", "build the cluster tree");
  add_common(bt);
  bt->add_option("--balance-tolerance", cfg.balance_tolerance);

  auto* mine = app.add_subcommand("mine", "mine serendipitous satisfaction stats");
  add_common(mine);

  auto* curate = app.add_subcommand("curate", "curate the fine-tuning file");
  add_common(curate);
  curate->add_option("--top-k", cfg.top_k);
  curate->add_option("--min-support", cfg.min_support);

  bool incremental = false, compact = false;
  auto* batch = app.add_subcommand("serve-batch", "coverage-targeted batch planning");
  add_common(batch);
  batch->add_option("--target-coverage", cfg.target_coverage);
  batch->add_option("--workers", cfg.workers);
  batch->add_flag("--incremental", incremental);
  batch->add_flag("--compact", compact);

  std::string rec_context, rec_mode = "serendip";
  std::size_t rec_k = 20;
  auto* rec = app.add_subcommand("recommend", "recommend for one context item");
  add_common(rec);
  rec->add_option("--context", rec_context)->required();
  rec->add_option("--k", rec_k);
  rec->add_option("--mode", rec_mode);

  auto* sim = app.add_subcommand("simulate", "run the synthetic-user simulator");
  add_common(sim);
  sim->add_option("--sim-steps", cfg.sim_steps);
  sim->add_option("--sim-seed", cfg.sim_seed);
  sim->add_option("--visual-boost", cfg.visual_boost);

  std::string bucket_csv;
  auto* eval = app.add_subcommand("eval", "metric reports from artifacts");
  add_common(eval);
  eval->add_option("--bucket-csv", bucket_csv);

  auto* pipe = app.add_subcommand("pipeline", "run every stage in order");
  add_common(pipe);
  bool force = false;
  pipe->add_flag("--force", force, "rebuild even when artifacts exist");

  // parse twice so --config loads before flag overrides apply
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    if (!config_path.empty()) {
      load_config_file(config_path, cfg);
      app.clear();
      app.parse(argc, argv);
    }
    cfg.validate();

    if (gen->parsed()) emit(cmd_gen_data(cfg));
    if (bt->parsed()) emit(cmd_build_tree(cfg));
    if (mine->parsed()) emit(cmd_mine(cfg));
    if (curate->parsed()) emit(cmd_curate(cfg));
    if (batch->parsed()) emit(cmd_serve_batch(cfg, incremental, compact));
    if (rec->parsed()) emit(cmd_recommend(cfg, rec_context, rec_k, rec_mode));
    if (sim->parsed()) emit(cmd_simulate(cfg));
    if (eval->parsed()) emit(cmd_eval(cfg, bucket_csv));
    if (pipe->parsed()) {
      // restartable: a stage whose artifact already exists is skipped
      if (force || !fs::exists(cfg.items_path)) emit(cmd_gen_data(cfg));
      if (force || !fs::exists(cfg.tree_path)) emit(cmd_build_tree(cfg));
      if (force || !fs::exists(cfg.stats_path)) emit(cmd_mine(cfg));
      if (force || !fs::exists(cfg.training_path)) emit(cmd_curate(cfg));
      if (force || !fs::exists(cfg.cache_path))
        emit(cmd_serve_batch(cfg, false, false));
      if (force || !fs::exists(cfg.impressions_path)) emit(cmd_simulate(cfg));
      emit(cmd_eval(cfg, ""));
    }
  } catch (const StalenessError& e) {
    std::cerr << "error: " << e.what()
              << " (hint: re-run serve-batch against the current tree)\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const BackendError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
