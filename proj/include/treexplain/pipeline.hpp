#pragma once

// Stage runners behind the command-line tool. Every stage reads and writes
// files under a work directory and leaves a manifest in
// <workdir>/manifests/<stage>.json.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "treexplain/analysis.hpp"
#include "treexplain/error.hpp"
#include "treexplain/explain.hpp"
#include "treexplain/features.hpp"
#include "treexplain/gcn.hpp"
#include "treexplain/graph.hpp"
#include "treexplain/hpo.hpp"
#include "treexplain/rng.hpp"
#include "treexplain/synthetic.hpp"
#include "treexplain/treebank.hpp"

namespace treexplain {

namespace fs = std::filesystem;

enum class HpoStrategy { Random, Evolution };

struct PipelineConfig {
  std::uint64_t seed = 7;
  fs::path workdir = "work";

  // inputs; unset means the synthetic corpus inside the work directory
  std::optional<fs::path> trees;
  std::optional<fs::path> embeddings;
  std::optional<fs::path> labels;
  std::optional<fs::path> stopwords;
  std::optional<fs::path> tag_aliases;

  std::size_t synth_count = 500;
  double synth_gold_noise = 0.1;

  std::size_t feature_dim = 32;
  double test_fraction = 0.2;
  TrainConfig train;

  SubgraphXConfig subgraphx;
  std::size_t explain_limit = 0;  // 0 = every test graph
  std::size_t threads = 1;

  bool hpo_enabled = false;
  HpoStrategy hpo_strategy = HpoStrategy::Random;
  std::size_t hpo_budget = 20;
  std::size_t hpo_sample = 10;
  EvolutionOptions hpo_evolution;

  std::size_t chain_depth = 2;

  // every seeded component draws from the one global seed
  void propagate_seed() {
    train.rng_seed = seed;
    subgraphx.rng_seed = seed;
  }
};

namespace detail {

template <class T>
void take(const nlohmann::json& section, const char* key, T& out) {
  if (section.contains(key)) out = section.at(key).get<T>();
}

inline void take_path(const nlohmann::json& section, const char* key, std::optional<fs::path>& out,
                      const fs::path& base) {
  if (!section.contains(key) || section.at(key).is_null()) return;
  fs::path p = section.at(key).get<std::string>();
  out = p.is_absolute() ? p : base / p;
}

inline void reject_unknown(const nlohmann::json& section, const std::string& name, std::set<std::string> known) {
  if (!section.is_object()) throw Error(ErrorCode::InvalidConfig, "section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items())
    if (!known.count(key)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "' in section '" + name + "'");
}

inline std::string hex64(std::uint64_t x) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << x;
  return out.str();
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << text;
}

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw Error(ErrorCode::Io, what + " not found: " + p.string());
}

}  // namespace detail

// Relative paths inside the file resolve against the file's directory.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const fs::path& base = ".") {
  PipelineConfig c;
  try {
    detail::reject_unknown(j, "top level",
                           {"seed", "workdir", "paths", "synth", "features", "split", "train", "subgraphx", "explain",
                            "hpo", "analysis"});
    detail::take(j, "seed", c.seed);
    if (j.contains("workdir")) {
      fs::path w = j.at("workdir").get<std::string>();
      c.workdir = w.is_absolute() ? w : base / w;
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      detail::reject_unknown(p, "paths", {"trees", "embeddings", "labels", "stopwords", "tag_aliases"});
      detail::take_path(p, "trees", c.trees, base);
      detail::take_path(p, "embeddings", c.embeddings, base);
      detail::take_path(p, "labels", c.labels, base);
      detail::take_path(p, "stopwords", c.stopwords, base);
      detail::take_path(p, "tag_aliases", c.tag_aliases, base);
    }
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      detail::reject_unknown(s, "synth", {"count", "gold_noise"});
      detail::take(s, "count", c.synth_count);
      detail::take(s, "gold_noise", c.synth_gold_noise);
    }
    if (j.contains("features")) {
      detail::reject_unknown(j.at("features"), "features", {"dim"});
      detail::take(j.at("features"), "dim", c.feature_dim);
    }
    if (j.contains("split")) {
      detail::reject_unknown(j.at("split"), "split", {"test_fraction"});
      detail::take(j.at("split"), "test_fraction", c.test_fraction);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      detail::reject_unknown(t, "train",
                             {"epochs", "learning_rate", "hidden_dims", "head_hidden", "l2_penalty", "batch_size",
                              "early_stop_patience", "momentum", "val_fraction", "activation"});
      detail::take(t, "epochs", c.train.epochs);
      detail::take(t, "learning_rate", c.train.learning_rate);
      detail::take(t, "hidden_dims", c.train.hidden_dims);
      detail::take(t, "head_hidden", c.train.head_hidden);
      detail::take(t, "l2_penalty", c.train.l2_penalty);
      detail::take(t, "batch_size", c.train.batch_size);
      detail::take(t, "early_stop_patience", c.train.early_stop_patience);
      detail::take(t, "momentum", c.train.momentum);
      detail::take(t, "val_fraction", c.train.val_fraction);
      if (t.contains("activation")) c.train.activation = activation_from_string(t.at("activation").get<std::string>());
    }
    if (j.contains("subgraphx")) {
      const auto& s = j.at("subgraphx");
      detail::reject_unknown(s, "subgraphx",
                             {"num_hops", "rollout", "min_atoms", "c_exploration", "expand_atoms", "local_radius",
                              "sample_num", "max_nodes", "score_mode", "mask_mode", "exact_limit", "tie_epsilon"});
      c.subgraphx = subgraphx_config_from_json(s);
    }
    if (j.contains("explain")) {
      detail::reject_unknown(j.at("explain"), "explain", {"limit", "threads"});
      detail::take(j.at("explain"), "limit", c.explain_limit);
      detail::take(j.at("explain"), "threads", c.threads);
    }
    if (j.contains("hpo")) {
      const auto& h = j.at("hpo");
      detail::reject_unknown(h, "hpo",
                             {"enabled", "strategy", "budget", "sample", "population", "generations", "tournament",
                              "mutation_rate"});
      detail::take(h, "enabled", c.hpo_enabled);
      if (h.contains("strategy")) {
        const auto s = h.at("strategy").get<std::string>();
        if (s != "random" && s != "evolution") throw Error(ErrorCode::InvalidConfig, "hpo strategy '" + s + "'");
        c.hpo_strategy = s == "random" ? HpoStrategy::Random : HpoStrategy::Evolution;
      }
      detail::take(h, "budget", c.hpo_budget);
      detail::take(h, "sample", c.hpo_sample);
      detail::take(h, "population", c.hpo_evolution.population);
      detail::take(h, "generations", c.hpo_evolution.generations);
      detail::take(h, "tournament", c.hpo_evolution.tournament);
      detail::take(h, "mutation_rate", c.hpo_evolution.mutation_rate);
    }
    if (j.contains("analysis")) {
      detail::reject_unknown(j.at("analysis"), "analysis", {"chain_depth"});
      detail::take(j.at("analysis"), "chain_depth", c.chain_depth);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
  if (c.feature_dim < 8) throw Error(ErrorCode::InvalidConfig, "features.dim must be at least 8");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0))
    throw Error(ErrorCode::InvalidConfig, "split.test_fraction must be in (0,1)");
  if (c.synth_count == 0) throw Error(ErrorCode::InvalidConfig, "synth.count must be positive");
  if (c.threads == 0) throw Error(ErrorCode::InvalidConfig, "explain.threads must be positive");
  c.propagate_seed();
  return c;
}

inline PipelineConfig load_pipeline_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j, path.parent_path());
}

// Effective settings. The work directory is left out so that identical runs
// in different directories hash the same.
inline nlohmann::json to_json(const PipelineConfig& c) {
  auto opt = [](const std::optional<fs::path>& p) -> nlohmann::json {
    return p ? nlohmann::json(p->filename().string()) : nlohmann::json(nullptr);
  };
  nlohmann::json sx = to_json(c.subgraphx);
  sx.erase("rng_seed");
  return {
      {"seed", c.seed},
      {"paths",
       {{"trees", opt(c.trees)},
        {"embeddings", opt(c.embeddings)},
        {"labels", opt(c.labels)},
        {"stopwords", opt(c.stopwords)},
        {"tag_aliases", opt(c.tag_aliases)}}},
      {"synth", {{"count", c.synth_count}, {"gold_noise", c.synth_gold_noise}}},
      {"features", {{"dim", c.feature_dim}}},
      {"split", {{"test_fraction", c.test_fraction}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"learning_rate", c.train.learning_rate},
        {"hidden_dims", c.train.hidden_dims},
        {"head_hidden", c.train.head_hidden},
        {"l2_penalty", c.train.l2_penalty},
        {"batch_size", c.train.batch_size},
        {"early_stop_patience", c.train.early_stop_patience},
        {"momentum", c.train.momentum},
        {"val_fraction", c.train.val_fraction},
        {"activation", to_string(c.train.activation)}}},
      {"subgraphx", sx},
      {"explain", {{"limit", c.explain_limit}, {"threads", c.threads}}},
      {"hpo",
       {{"enabled", c.hpo_enabled},
        {"strategy", c.hpo_strategy == HpoStrategy::Random ? "random" : "evolution"},
        {"budget", c.hpo_budget},
        {"sample", c.hpo_sample},
        {"population", c.hpo_evolution.population},
        {"generations", c.hpo_evolution.generations},
        {"tournament", c.hpo_evolution.tournament},
        {"mutation_rate", c.hpo_evolution.mutation_rate}}},
      {"analysis", {{"chain_depth", c.chain_depth}}},
  };
}

inline std::string config_hash(const PipelineConfig& c) { return detail::hex64(fnv1a64(to_json(c).dump())); }

inline std::string file_digest(const fs::path& p) { return detail::hex64(fnv1a64(detail::read_text(p))); }

// ---------------------------------------------------------------------------
// Work directory layout

struct WorkLayout {
  fs::path root;

  fs::path corpus_trees() const { return root / "corpus" / "trees.ndjson"; }
  fs::path corpus_labels() const { return root / "corpus" / "labels.ndjson"; }
  fs::path graphs() const { return root / "graphs.ndjson"; }
  fs::path featured() const { return root / "featured.ndjson"; }
  fs::path split() const { return root / "split.json"; }
  fs::path model() const { return root / "model.json"; }
  fs::path history() const { return root / "train_history.csv"; }
  fs::path eval() const { return root / "eval.json"; }
  fs::path explanations() const { return root / "explanations.ndjson"; }
  fs::path hpo_trials() const { return root / "hpo_trials.csv"; }
  fs::path hpo_best() const { return root / "hpo_best.json"; }
  fs::path analysis() const { return root / "analysis"; }
  fs::path report() const { return root / "report"; }
  fs::path manifest(const std::string& stage) const { return root / "manifests" / (stage + ".json"); }
};

class StageRun {
 public:
  StageRun(std::string stage, const PipelineConfig& cfg) : stage_(std::move(stage)), cfg_(cfg), layout_{cfg.workdir} {
    fs::create_directories(layout_.root);
  }

  const WorkLayout& layout() const { return layout_; }

  // Records the file's digest under a name that does not depend on where the
  // work directory lives.
  void input(const fs::path& p) {
    detail::require_file(p, "input");
    inputs_[display_name(p)] = file_digest(p);
  }

  // For inputs read through a filter, digest what was actually consumed.
  void input(const fs::path& p, const std::string& consumed) {
    inputs_[display_name(p)] = detail::hex64(fnv1a64(consumed));
  }

  void output(const fs::path& p) { outputs_.insert(display_name(p)); }

  void finish() const {
    nlohmann::json m{{"stage", stage_},
                     {"seed", cfg_.seed},
                     {"config_hash", config_hash(cfg_)},
                     {"inputs", inputs_},
                     {"outputs", std::vector<std::string>(outputs_.begin(), outputs_.end())}};
    detail::write_text(layout_.manifest(stage_), m.dump(2) + "\n");
  }

 private:
  std::string display_name(const fs::path& p) const {
    const auto rel = fs::weakly_canonical(p).lexically_relative(fs::weakly_canonical(layout_.root));
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return "external/" + p.filename().string();
  }

  std::string stage_;
  const PipelineConfig& cfg_;
  WorkLayout layout_;
  std::map<std::string, std::string> inputs_;
  std::set<std::string> outputs_;
};

// ---------------------------------------------------------------------------
// Stages

inline void stage_synth(const PipelineConfig& cfg) {
  StageRun run("synth", cfg);
  SyntheticOptions opt;
  opt.count = cfg.synth_count;
  opt.seed = cfg.seed;
  opt.gold_noise = cfg.synth_gold_noise;
  const auto corpus = generate_corpus(opt);
  detail::write_text(run.layout().corpus_trees(), corpus_trees_ndjson(corpus));
  detail::write_text(run.layout().corpus_labels(), corpus_labels_ndjson(corpus));
  run.output(run.layout().corpus_trees());
  run.output(run.layout().corpus_labels());
  run.finish();
}

inline fs::path trees_path(const PipelineConfig& cfg) { return cfg.trees.value_or(WorkLayout{cfg.workdir}.corpus_trees()); }

inline std::optional<fs::path> labels_path(const PipelineConfig& cfg) {
  if (cfg.labels) return cfg.labels;
  const auto synth = WorkLayout{cfg.workdir}.corpus_labels();
  if (!cfg.trees && fs::exists(synth)) return synth;
  return std::nullopt;
}

inline std::size_t stage_graphs(const PipelineConfig& cfg) {
  StageRun run("graphs", cfg);
  const auto src = trees_path(cfg);
  run.input(src);
  LabelMap labels = default_label_map();
  if (cfg.tag_aliases) {
    run.input(*cfg.tag_aliases);
    labels = LabelMap::load(cfg.tag_aliases->string());
  }
  std::vector<SentenceGraph> graphs;
  for (const auto& t : read_trees_file(src.string()))
    graphs.push_back(tree_to_graph(t, UnknownLabelPolicy::MapToNotAConstituent, labels));
  write_graphs_file(run.layout().graphs().string(), graphs);
  run.output(run.layout().graphs());
  run.finish();
  return graphs.size();
}

inline std::size_t stage_features(const PipelineConfig& cfg) {
  StageRun run("features", cfg);
  run.input(run.layout().graphs());
  auto graphs = read_graphs_file(run.layout().graphs().string());

  if (const auto lp = labels_path(cfg)) {
    run.input(*lp);
    const auto teacher = load_labels(lp->string());
    for (auto& g : graphs) {
      auto it = teacher.find(g.sentence_id);
      if (it != teacher.end()) g.teacher_label = it->second.label;
    }
  }

  std::map<std::string, EmbeddingTable> tables;
  if (cfg.embeddings) {
    run.input(*cfg.embeddings);
    for (auto& t : load_embeddings(cfg.embeddings->string())) tables[t.graph_id] = std::move(t);
  }
  std::vector<FeaturedGraph> featured;
  for (const auto& g : graphs) {
    if (cfg.embeddings) {
      auto it = tables.find(g.sentence_id);
      if (it == tables.end()) throw Error(ErrorCode::MissingNodeVector, "no embedding record for '" + g.sentence_id + "'");
      featured.push_back(assign_features(g, it->second));
    } else {
      featured.push_back(assign_features(g, hash_embed(g, cfg.feature_dim, cfg.seed)));
    }
  }
  write_featured_file(run.layout().featured().string(), featured);
  run.output(run.layout().featured());
  run.finish();
  return featured.size();
}

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

inline Split make_split(const std::vector<FeaturedGraph>& graphs, double test_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(graphs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x73706c6974ULL));
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(graphs.size())));
  std::vector<char> is_test(graphs.size(), 0);
  for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = 1;
  Split s;
  for (std::size_t i = 0; i < graphs.size(); ++i) (is_test[i] ? s.test : s.train).push_back(graphs[i].graph.sentence_id);
  return s;
}

inline Split read_split(const fs::path& p) {
  try {
    const auto j = nlohmann::json::parse(detail::read_text(p));
    return {j.at("train").get<std::vector<std::string>>(), j.at("test").get<std::vector<std::string>>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, p.string() + ": " + e.what());
  }
}

inline std::vector<FeaturedGraph> select_graphs(const std::vector<FeaturedGraph>& all, const std::vector<std::string>& ids) {
  std::map<std::string, const FeaturedGraph*> by_id;
  for (const auto& g : all) by_id[g.graph.sentence_id] = &g;
  std::vector<FeaturedGraph> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::MalformedRecord, "split names unknown graph '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

inline TrainResult stage_train(const PipelineConfig& cfg) {
  cfg.train.validate();
  StageRun run("train", cfg);
  run.input(run.layout().featured());
  const auto all = read_featured_file(run.layout().featured().string());
  if (all.empty()) throw Error(ErrorCode::EmptyDataset, "no featured graphs");
  const auto split = make_split(all, cfg.test_fraction, cfg.seed);
  detail::write_text(run.layout().split(), nlohmann::json{{"train", split.train}, {"test", split.test}}.dump(1) + "\n");
  const auto result = train(select_graphs(all, split.train), cfg.train);
  save_model(run.layout().model().string(), result.model);
  detail::write_text(run.layout().history(), history_csv(result.history));
  for (const auto& p : {run.layout().split(), run.layout().model(), run.layout().history()}) run.output(p);
  run.finish();
  return result;
}

inline nlohmann::json stage_eval(const PipelineConfig& cfg) {
  StageRun run("eval", cfg);
  for (const auto& p : {run.layout().featured(), run.layout().split(), run.layout().model()}) run.input(p);
  const auto all = read_featured_file(run.layout().featured().string());
  const auto split = read_split(run.layout().split());
  const auto model = load_model(run.layout().model().string());
  const auto train_set = select_graphs(all, split.train);
  const auto test_set = select_graphs(all, split.test);
  bool have_gold = !test_set.empty();
  for (const auto& g : test_set) have_gold = have_gold && g.gold_label.has_value();
  nlohmann::json out{
      {"train_size", train_set.size()},
      {"test_size", test_set.size()},
      {"train_teacher", to_json(evaluate(model, train_set, Reference::Teacher))},
      {"test_teacher", test_set.empty() ? nlohmann::json(nullptr) : to_json(evaluate(model, test_set, Reference::Teacher))},
      {"test_gold", have_gold ? to_json(evaluate(model, test_set, Reference::Gold)) : nlohmann::json(nullptr)},
  };
  detail::write_text(run.layout().eval(), out.dump(2) + "\n");
  run.output(run.layout().eval());
  run.finish();
  return out;
}

inline std::vector<FeaturedGraph> test_graphs(const WorkLayout& layout, std::size_t limit) {
  auto graphs = select_graphs(read_featured_file(layout.featured().string()), read_split(layout.split()).test);
  if (limit > 0 && graphs.size() > limit) graphs.resize(limit);
  return graphs;
}

inline std::vector<Explanation> stage_explain(const PipelineConfig& cfg) {
  cfg.subgraphx.validate();  // before touching the model
  StageRun run("explain", cfg);
  for (const auto& p : {run.layout().featured(), run.layout().split(), run.layout().model()}) run.input(p);
  const auto model = load_model(run.layout().model().string());
  const auto graphs = test_graphs(run.layout(), cfg.explain_limit);
  const auto explanations = explain_all(model, graphs, cfg.subgraphx, cfg.threads);
  write_explanations(run.layout().explanations().string(), explanations);
  run.output(run.layout().explanations());
  run.finish();
  return explanations;
}

// Trial objective: mean of (s_m, s_u, sparsity) over the sampled graphs that
// are large enough for the trial's min_atoms; 0 when none are.
inline TrialEvalFn explanation_objective(const GcnModel& model, const std::vector<FeaturedGraph>& sample) {
  return [&model, &sample](const SubgraphXConfig& c) {
    std::vector<FeaturedGraph> usable;
    for (const auto& g : sample)
      if (g.graph.size() >= static_cast<std::size_t>(c.min_atoms)) usable.push_back(g);
    TrialOutcome out;
    if (usable.empty()) return out;
    for (const auto& e : explain_all(model, usable, c, 1)) out.triples.push_back({e.s_masked, e.s_unmasked, e.sparsity});
    out.objective = objective(out.triples);
    return out;
  };
}

inline SearchResult stage_hpo(const PipelineConfig& cfg) {
  cfg.subgraphx.validate();
  if (cfg.hpo_budget == 0) throw Error(ErrorCode::InvalidConfig, "hpo.budget must be positive");
  StageRun run("hpo", cfg);
  for (const auto& p : {run.layout().featured(), run.layout().split(), run.layout().model()}) run.input(p);
  const auto model = load_model(run.layout().model().string());
  const auto sample = test_graphs(run.layout(), cfg.hpo_sample);
  if (sample.empty()) throw Error(ErrorCode::EmptyDataset, "no test graphs to tune on");
  const auto space = SearchSpace::subgraphx();
  const auto eval = explanation_objective(model, sample);
  const auto result = cfg.hpo_strategy == HpoStrategy::Random
                          ? random_search(space, eval, cfg.hpo_budget, cfg.seed, cfg.subgraphx, cfg.threads)
                          : evolutionary_search(space, eval, cfg.hpo_evolution, cfg.seed, cfg.subgraphx, cfg.threads);
  detail::write_text(run.layout().hpo_trials(), trials_csv(space, result.history, true));
  nlohmann::json best{{"trial_index", result.best.index},
                      {"objective", result.best.objective},
                      {"config", to_json(result.best.config)},
                      {"best_so_far", result.best_so_far}};
  detail::write_text(run.layout().hpo_best(), best.dump(2) + "\n");
  run.output(run.layout().hpo_trials());
  run.output(run.layout().hpo_best());
  run.finish();
  return result;
}

inline std::string group_name(int cls, Correctness c) { return "class" + std::to_string(cls) + "_" + to_string(c); }

inline nlohmann::json exemplars_json(const std::vector<Explanation>& es) {
  const auto ex = select_exemplars(es);
  auto one = [&](const std::optional<std::size_t>& i) -> nlohmann::json {
    return i ? to_json(es[*i]) : nlohmann::json(nullptr);
  };
  return {{"essential", one(ex.essential)}, {"noise", one(ex.noise)}, {"wrong", one(ex.wrong)}, {"neglected", one(ex.neglected)}};
}

inline nlohmann::json stage_analyze(const PipelineConfig& cfg) {
  StageRun run("analyze", cfg);
  for (const auto& p : {run.layout().featured(), run.layout().explanations()}) run.input(p);
  StopwordSet stop = default_stopwords();
  if (cfg.stopwords) {
    run.input(*cfg.stopwords);
    stop = load_stopwords(cfg.stopwords->string());
  }
  std::map<std::string, const FeaturedGraph*> by_id;
  const auto all = read_featured_file(run.layout().featured().string());
  for (const auto& g : all) by_id[g.graph.sentence_id] = &g;
  const auto explanations = read_explanations(run.layout().explanations().string());

  std::vector<SemanticResult> semantic;
  std::vector<StructuralRecord> records;
  nlohmann::json skipped = nlohmann::json::array();
  std::string semantic_ndjson;
  for (const auto& e : explanations) {
    auto it = by_id.find(e.graph_id);
    if (it == by_id.end()) throw Error(ErrorCode::MalformedRecord, "explanation for unknown graph '" + e.graph_id + "'");
    const auto& g = it->second->graph;
    try {
      auto r = extract_semantic_labels(g, e, stop);
      nlohmann::json words = nlohmann::json::array();
      for (const auto& w : r.words) words.push_back({{"word", w.surface}, {"chain", w.chain}});
      semantic_ndjson += nlohmann::json{{"graph_id", r.graph_id},
                                        {"predicted_class", r.predicted_class},
                                        {"verdict", to_string(e.verdict)},
                                        {"correctness", to_string(e.correctness)},
                                        {"words", words}}
                             .dump() +
                         '\n';
      semantic.push_back(std::move(r));
    } catch (const Error& err) {
      skipped.push_back({{"graph_id", e.graph_id}, {"error", std::string(to_string(err.code()))}});
    }
    auto rec = structural_metrics(g);
    rec.predicted_class = e.predicted_class;
    rec.correctness = e.correctness;
    records.push_back(std::move(rec));
  }

  const auto dir = run.layout().analysis();
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto emit = [&](const std::string& name, const std::string& text) {
    detail::write_text(dir / name, text);
    run.output(dir / name);
  };
  emit("semantic.ndjson", semantic_ndjson);
  emit("words.csv", words_csv(frequency_report(semantic, cfg.chain_depth)));
  emit("metrics.csv", metrics_csv(records));
  emit("exemplars.json", exemplars_json(explanations).dump(2) + "\n");

  std::map<std::string, std::vector<StructuralRecord>> groups;
  for (const auto& r : records) groups[group_name(r.predicted_class, r.correctness)].push_back(r);
  nlohmann::json group_sizes = nlohmann::json::object();
  for (const auto& [name, rs] : groups) {
    group_sizes[name] = rs.size();
    if (rs.size() < 3) continue;
    const auto m = correlation_matrix(rs);
    emit("correlation_" + name + ".csv", correlation_csv(m));
    emit("correlation_" + name + ".svg", correlation_svg(m, name));
  }
  nlohmann::json summary{{"explanations", explanations.size()}, {"groups", group_sizes}, {"skipped", skipped}};
  emit("summary.json", summary.dump(2) + "\n");
  run.finish();
  return summary;
}

// Drops the trailing wall_time column so the bundle is reproducible.
inline std::string strip_wall_time(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto cut = line.rfind(',');
    out += (cut == std::string::npos ? line : line.substr(0, cut)) + '\n';
  }
  return out;
}

inline nlohmann::json stage_report(const PipelineConfig& cfg) {
  StageRun run("report", cfg);
  const auto& L = run.layout();
  const auto dir = L.report();
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto emit = [&](const std::string& name, const std::string& text) {
    detail::write_text(dir / name, text);
    run.output(dir / name);
  };
  auto copy = [&](const fs::path& src, const std::string& name) {
    run.input(src);
    emit(name, detail::read_text(src));
  };

  copy(L.eval(), "eval.json");
  copy(L.explanations(), "explanations.ndjson");
  copy(L.history(), "train_history.csv");
  std::vector<std::string> analysis_files;
  if (fs::exists(L.analysis()))
    for (const auto& entry : fs::directory_iterator(L.analysis())) analysis_files.push_back(entry.path().filename().string());
  std::sort(analysis_files.begin(), analysis_files.end());
  if (analysis_files.empty()) throw Error(ErrorCode::Io, "analysis outputs missing; run analyze first");
  for (const auto& f : analysis_files) copy(L.analysis() / f, f);
  if (fs::exists(L.hpo_trials())) {
    const auto trials = strip_wall_time(detail::read_text(L.hpo_trials()));
    run.input(L.hpo_trials(), trials);
    emit("hpo_trials.csv", trials);
    copy(L.hpo_best(), "hpo_best.json");
  }

  const auto es = read_explanations(L.explanations().string());
  std::map<std::string, std::size_t> verdicts;
  double fid = 0.0, spars = 0.0;
  std::vector<ScoreTriple> triples;
  for (const auto& e : es) {
    ++verdicts[to_string(e.correctness) + "/" + to_string(e.verdict)];
    fid += e.fidelity;
    spars += e.sparsity;
    triples.push_back({e.s_masked, e.s_unmasked, e.sparsity});
  }
  const double n = es.empty() ? 1.0 : static_cast<double>(es.size());
  nlohmann::json summary{{"seed", cfg.seed},
                         {"config_hash", config_hash(cfg)},
                         {"explanations", es.size()},
                         {"verdicts", verdicts},
                         {"mean_fidelity", fid / n},
                         {"mean_sparsity", spars / n},
                         {"objective", es.empty() ? nlohmann::json(nullptr) : nlohmann::json(objective(triples))}};
  emit("summary.json", summary.dump(2) + "\n");
  run.finish();
  return summary;
}

}  // namespace treexplain
