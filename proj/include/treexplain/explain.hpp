#pragma once

// Subgraph explanations in the SubgraphX style: Monte-Carlo tree search over
// weakly connected node sets, each scored by the (local) Shapley value of
// the set acting as a single player.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <exception>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "treexplain/error.hpp"
#include "treexplain/features.hpp"
#include "treexplain/gcn.hpp"
#include "treexplain/graph.hpp"
#include "treexplain/rng.hpp"

namespace treexplain {

enum class ScoreMode { Probability, Logit };

struct SubgraphXConfig {
  // searchable hyperparameters
  int num_hops = 3;
  int rollout = 100;
  int min_atoms = 1;
  double c_exploration = 10.0;
  int expand_atoms = 3;
  int local_radius = 2;
  int sample_num = 3;
  int max_nodes = 6;
  std::uint64_t rng_seed = 0;

  // fixed knobs
  ScoreMode score_mode = ScoreMode::Probability;
  MaskMode mask_mode = MaskMode::ZeroFeatures;
  std::size_t exact_limit = 12;  // enumerate coalitions up to this many non-player nodes
  double tie_epsilon = 0.0;

  void validate() const {
    auto in = [](auto v, auto lo, auto hi) { return v >= lo && v <= hi; };
    std::string bad;
    if (!in(num_hops, 1, 5)) bad += " num_hops in [1,5];";
    if (!in(rollout, 50, 300)) bad += " rollout in [50,300];";
    if (!in(min_atoms, 1, 10)) bad += " min_atoms in [1,10];";
    if (!(c_exploration >= 0.1 && c_exploration <= 30.0)) bad += " c_exploration in [0.1,30];";
    if (!in(expand_atoms, 1, 5)) bad += " expand_atoms in [1,5];";
    if (!in(local_radius, 1, 5)) bad += " local_radius in [1,5];";
    if (!in(sample_num, 1, 5)) bad += " sample_num in [1,5];";
    if (!in(max_nodes, 2, 40)) bad += " max_nodes in [2,40];";
    if (max_nodes < min_atoms)
      bad += " max_nodes (" + std::to_string(max_nodes) + ") must be >= min_atoms (" + std::to_string(min_atoms) + ");";
    if (tie_epsilon < 0.0) bad += " tie_epsilon >= 0;";
    if (!bad.empty()) throw Error(ErrorCode::InvalidConfig, "subgraphx config:" + bad);
  }

  friend bool operator==(const SubgraphXConfig&, const SubgraphXConfig&) = default;
};

inline nlohmann::json to_json(const SubgraphXConfig& c) {
  return {{"num_hops", c.num_hops},         {"rollout", c.rollout},
          {"min_atoms", c.min_atoms},       {"c_exploration", c.c_exploration},
          {"expand_atoms", c.expand_atoms}, {"local_radius", c.local_radius},
          {"sample_num", c.sample_num},     {"max_nodes", c.max_nodes},
          {"rng_seed", c.rng_seed},         {"score_mode", c.score_mode == ScoreMode::Logit ? "logit" : "probability"},
          {"mask_mode", c.mask_mode == MaskMode::ZeroFeatures ? "zero_features" : "zero_features_and_edges"},
          {"exact_limit", c.exact_limit},   {"tie_epsilon", c.tie_epsilon}};
}

// Missing keys keep their defaults. Does not validate.
inline SubgraphXConfig subgraphx_config_from_json(const nlohmann::json& j, SubgraphXConfig c = {}) {
  try {
    c.num_hops = j.value("num_hops", c.num_hops);
    c.rollout = j.value("rollout", c.rollout);
    c.min_atoms = j.value("min_atoms", c.min_atoms);
    c.c_exploration = j.value("c_exploration", c.c_exploration);
    c.expand_atoms = j.value("expand_atoms", c.expand_atoms);
    c.local_radius = j.value("local_radius", c.local_radius);
    c.sample_num = j.value("sample_num", c.sample_num);
    c.max_nodes = j.value("max_nodes", c.max_nodes);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.exact_limit = j.value("exact_limit", c.exact_limit);
    c.tie_epsilon = j.value("tie_epsilon", c.tie_epsilon);
    if (j.contains("score_mode")) {
      const auto s = j["score_mode"].get<std::string>();
      if (s != "logit" && s != "probability") throw Error(ErrorCode::InvalidConfig, "score_mode '" + s + "'");
      c.score_mode = s == "logit" ? ScoreMode::Logit : ScoreMode::Probability;
    }
    if (j.contains("mask_mode")) {
      const auto s = j["mask_mode"].get<std::string>();
      if (s != "zero_features" && s != "zero_features_and_edges")
        throw Error(ErrorCode::InvalidConfig, "mask_mode '" + s + "'");
      c.mask_mode = s == "zero_features" ? MaskMode::ZeroFeatures : MaskMode::ZeroFeaturesAndEdges;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("subgraphx config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Value functions

// v(mask): model output for the class under explanation when only the nodes
// with mask[v] != 0 keep their features.
using ValueFn = std::function<double(const std::vector<char>&)>;

// Masked GCN evaluation for one graph and class, with the first layer's
// X·W product cached. Graphs of up to 64 nodes also memoize results per mask;
// an instance is therefore not safe to share between threads.
class GcnValue {
 public:
  GcnValue(const GcnModel& model, const FeaturedGraph& fg, int target, ScoreMode score = ScoreMode::Probability,
           MaskMode mask = MaskMode::ZeroFeatures)
      : model_(&model), fg_(&fg), target_(target), score_(score), mask_(mask), adj_(normalize_adjacency(fg.graph)) {
    if (fg.features.cols() != model.layers.front().w.rows())
      throw Error(ErrorCode::DimensionMismatch, "features vs model input");
    xw_ = fg.features * model.layers.front().w;
  }

  double operator()(const std::vector<char>& keep) const {
    if (keep.size() > 64) return evaluate(keep);
    std::uint64_t key = 0;
    for (std::size_t v = 0; v < keep.size(); ++v)
      if (keep[v]) key |= std::uint64_t{1} << v;
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    const double value = evaluate(keep);
    memo_.emplace(key, value);
    return value;
  }

  int target() const { return target_; }

 private:
  double evaluate(const std::vector<char>& keep) const {
    const auto& m = *model_;
    Eigen::MatrixXd xw = xw_;
    for (Eigen::Index r = 0; r < xw.rows(); ++r)
      if (!keep[static_cast<std::size_t>(r)]) xw.row(r).setZero();
    const Eigen::MatrixXd adj = mask_ == MaskMode::ZeroFeatures ? adj_ : normalize_adjacency(fg_->graph, &keep);
    Eigen::MatrixXd z = adj * xw;
    z.rowwise() += m.layers.front().b.transpose();
    Eigen::MatrixXd h = detail::activate(z, m.activation);
    for (std::size_t l = 1; l < m.layers.size(); ++l) {
      z = adj * (h * m.layers[l].w);
      z.rowwise() += m.layers[l].b.transpose();
      h = detail::activate(z, m.activation);
    }
    Eigen::VectorXd u = h.colwise().mean().transpose();
    for (std::size_t k = 0; k < m.head.size(); ++k) {
      Eigen::VectorXd s = m.head[k].w.transpose() * u + m.head[k].b;
      u = (k + 1 < m.head.size()) ? Eigen::VectorXd(detail::activate(s, m.activation)) : s;
    }
    if (score_ == ScoreMode::Logit) return u(target_);
    return detail::softmax(u)(target_);
  }

  const GcnModel* model_;
  const FeaturedGraph* fg_;
  int target_;
  ScoreMode score_;
  MaskMode mask_;
  Eigen::MatrixXd adj_;
  Eigen::MatrixXd xw_;
  mutable std::unordered_map<std::uint64_t, double> memo_;
};

inline int predicted_class(const GcnModel& m, const FeaturedGraph& fg) {
  Eigen::Index best = 0;
  forward(m, fg).maxCoeff(&best);
  return static_cast<int>(best);
}

// ---------------------------------------------------------------------------
// Shapley value of a coalition acting as one player

struct ShapleyOptions {
  std::size_t local_radius = 2;
  std::size_t sample_num = 3;
  std::size_t exact_limit = 12;
  std::uint64_t seed = 0;
};

inline ShapleyOptions shapley_options(const SubgraphXConfig& c) {
  return {static_cast<std::size_t>(c.local_radius), static_cast<std::size_t>(c.sample_num), c.exact_limit, c.rng_seed};
}

inline std::uint64_t node_set_hash(const NodeSet& s) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (auto v : s) h = mix_seed(h, static_cast<std::uint64_t>(v));
  return h;
}

// Universe = players plus everything within local_radius undirected hops.
// Nodes outside the universe stay masked in every evaluation.
inline double shapley_score(const SentenceGraph& g, const ValueFn& value, const NodeSet& players,
                            const ShapleyOptions& opt) {
  if (players.empty()) throw Error(ErrorCode::EmptyPlayerSet, "shapley score of an empty coalition");
  const auto universe = neighborhood(g, players, opt.local_radius);
  NodeSet others;
  std::set_difference(universe.begin(), universe.end(), players.begin(), players.end(), std::back_inserter(others));
  const std::size_t m = others.size();

  std::vector<char> mask(g.size(), 0);
  auto marginal = [&](auto&& set_coalition) {
    std::fill(mask.begin(), mask.end(), 0);
    set_coalition();
    const double without = value(mask);
    for (auto p : players) mask[p] = 1;
    return value(mask) - without;
  };

  if (m <= opt.exact_limit) {
    // weight(|S|) = |S|! (m-|S|)! / (m+1)!
    std::vector<double> weight(m + 1);
    for (std::size_t s = 0; s <= m; ++s) {
      double w = 1.0 / static_cast<double>(m + 1);
      // 1 / C(m, s)
      for (std::size_t k = 1; k <= s; ++k) w *= static_cast<double>(k) / static_cast<double>(m - s + k);
      weight[s] = w;
    }
    double total = 0.0;
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << m); ++bits) {
      const auto size = static_cast<std::size_t>(std::popcount(bits));
      total += weight[size] * marginal([&] {
        for (std::size_t k = 0; k < m; ++k)
          if (bits >> k & 1U) mask[others[k]] = 1;
      });
    }
    return total;
  }

  const auto base = mix_seed(opt.seed, node_set_hash(players));
  double total = 0.0;
  const std::size_t samples = std::max<std::size_t>(opt.sample_num, 1);
  for (std::size_t i = 0; i < samples; ++i) {
    Rng rng(mix_seed(base, i));
    // the bloc's position among m + 1 slots is uniform; predecessors are a
    // uniformly random prefix of a random permutation of the others
    std::vector<NodeId> perm = others;
    rng.shuffle(perm);
    const std::size_t split = rng.below(m + 1);
    total += marginal([&] {
      for (std::size_t k = 0; k < split; ++k) mask[perm[k]] = 1;
    });
  }
  return total / static_cast<double>(samples);
}

inline double shapley_score(const GcnModel& model, const FeaturedGraph& fg, const NodeSet& players,
                            const SubgraphXConfig& cfg) {
  GcnValue v(model, fg, predicted_class(model, fg), cfg.score_mode, cfg.mask_mode);
  return shapley_score(fg.graph, std::cref(v), players, shapley_options(cfg));
}

// ---------------------------------------------------------------------------
// Monte-Carlo tree search over connected subgraphs

struct MctsStats {
  std::size_t root_visits = 0;
  std::size_t states = 0;
  std::size_t evaluations = 0;
};

struct MctsResult {
  NodeSet subgraph;
  double reward = 0.0;
  MctsStats stats;
};

using RewardFn = std::function<double(const NodeSet&)>;

namespace detail {

// Largest weak component of `set` minus `drop`; ties go to the component
// holding the smallest id.
inline NodeSet largest_component_without(const SentenceGraph& g, const NodeSet& set, NodeId drop) {
  NodeSet rest;
  for (auto v : set)
    if (v != drop) rest.push_back(v);
  if (rest.empty()) return rest;
  auto comps = connected_components(induced_subgraph(g, rest));
  auto best = comps.begin();
  for (auto it = comps.begin(); it != comps.end(); ++it)
    if (it->size() > best->size()) best = it;
  return *best;
}

inline std::size_t degree_within(const SentenceGraph& g, NodeId v, const std::vector<char>& in) {
  std::size_t d = 0;
  for (auto w : g.neighbors(v)) d += in[w] != 0;
  return d;
}

}  // namespace detail

// The search root: the num_hops neighborhood of the highest-degree node,
// widened hop by hop if it holds fewer than min_atoms nodes.
inline NodeSet search_root(const SentenceGraph& g, const SubgraphXConfig& cfg) {
  NodeId center = 0;
  for (NodeId v = 1; v < g.size(); ++v)
    if (g.degree(v) > g.degree(center)) center = v;
  auto hops = static_cast<std::size_t>(cfg.num_hops);
  NodeSet root = neighborhood(g, {center}, hops);
  while (root.size() < static_cast<std::size_t>(cfg.min_atoms) && root.size() < g.size())
    root = neighborhood(g, {center}, ++hops);
  return root;
}

// Children of a state remove one of its expand_atoms lowest-degree nodes
// (degree inside the state, ties by id) and keep the largest remaining
// weak component.
inline std::vector<NodeSet> expand_state(const SentenceGraph& g, const NodeSet& state, std::size_t expand_atoms) {
  std::vector<char> in(g.size(), 0);
  for (auto v : state) in[v] = 1;
  std::vector<std::pair<std::size_t, NodeId>> order;
  for (auto v : state) order.emplace_back(detail::degree_within(g, v, in), v);
  std::sort(order.begin(), order.end());
  std::vector<NodeSet> children;
  for (std::size_t k = 0; k < order.size() && k < expand_atoms; ++k) {
    auto child = detail::largest_component_without(g, state, order[k].second);
    if (child.empty() || std::find(children.begin(), children.end(), child) != children.end()) continue;
    children.push_back(std::move(child));
  }
  return children;
}

inline MctsResult mcts_search(const SentenceGraph& g, const RewardFn& reward, const SubgraphXConfig& cfg) {
  cfg.validate();
  const auto min_atoms = static_cast<std::size_t>(cfg.min_atoms);
  const auto max_nodes = static_cast<std::size_t>(cfg.max_nodes);
  if (min_atoms > g.size())
    throw Error(ErrorCode::GraphTooSmall, "graph has " + std::to_string(g.size()) + " nodes, min_atoms is " +
                                              std::to_string(min_atoms));

  struct State {
    NodeSet nodes;
    std::vector<std::size_t> children;
    bool expanded = false;
    std::size_t visits = 0;
    double total = 0.0;
  };
  std::vector<State> states;
  std::map<NodeSet, std::size_t> index;
  std::map<NodeSet, double> cache;
  MctsStats stats;

  auto intern = [&](NodeSet s) {
    auto [it, inserted] = index.emplace(s, states.size());
    if (inserted) states.push_back(State{std::move(s), {}, false, 0, 0.0});
    return it->second;
  };
  auto score = [&](const NodeSet& s) {
    auto it = cache.find(s);
    if (it != cache.end()) return it->second;
    ++stats.evaluations;
    const double r = reward(s);
    cache.emplace(s, r);
    return r;
  };
  auto eligible = [&](const NodeSet& s) { return s.size() >= min_atoms && s.size() <= max_nodes; };

  const std::size_t root = intern(search_root(g, cfg));

  for (int iter = 0; iter < cfg.rollout; ++iter) {
    std::vector<std::size_t> path{root};
    std::size_t cur = root;
    while (states[cur].nodes.size() > min_atoms) {
      if (!states[cur].expanded) {
        auto kids = expand_state(g, states[cur].nodes, static_cast<std::size_t>(cfg.expand_atoms));
        std::vector<std::size_t> ids;
        for (auto& k : kids) ids.push_back(intern(std::move(k)));
        states[cur].children = std::move(ids);
        states[cur].expanded = true;
      }
      const auto& kids = states[cur].children;
      if (kids.empty()) break;
      std::size_t pick = kids.front();
      double best = -std::numeric_limits<double>::infinity();
      const double log_parent = std::log(static_cast<double>(std::max<std::size_t>(states[cur].visits, 1)));
      for (auto k : kids) {
        const auto& s = states[k];
        if (s.visits == 0) {
          pick = k;
          break;
        }
        const double ucb = s.total / static_cast<double>(s.visits) +
                           cfg.c_exploration * std::sqrt(log_parent / static_cast<double>(s.visits));
        if (ucb > best) {
          best = ucb;
          pick = k;
        }
      }
      cur = pick;
      path.push_back(cur);
    }

    // back up the best eligible reward seen along the path
    std::optional<double> value;
    for (auto s : path)
      if (eligible(states[s].nodes)) {
        const double r = score(states[s].nodes);
        value = value ? std::max(*value, r) : r;
      }
    if (!value) value = score(states[path.back()].nodes);
    for (auto s : path) {
      ++states[s].visits;
      states[s].total += *value;
    }
  }

  MctsResult out;
  bool found = false;
  for (const auto& [set, r] : cache) {
    if (!eligible(set)) continue;
    // higher reward, then smaller set; std::map order breaks remaining ties
    if (!found || r > out.reward || (r == out.reward && set.size() < out.subgraph.size())) {
      out.subgraph = set;
      out.reward = r;
      found = true;
    }
  }
  if (!found) {
    // nothing in the size window was reachable: fall back to the smallest
    // evaluated state
    for (const auto& [set, r] : cache)
      if (!found || set.size() < out.subgraph.size() || (set.size() == out.subgraph.size() && r > out.reward)) {
        out.subgraph = set;
        out.reward = r;
        found = true;
      }
  }
  stats.root_visits = states[root].visits;
  stats.states = states.size();
  out.stats = stats;
  return out;
}

// ---------------------------------------------------------------------------
// Scores, verdicts, exemplars

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

inline double fidelity(double s_masked, double s_unmasked) { return 1.0 - std::abs(s_masked - s_unmasked); }

inline double sparsity(const SentenceGraph& g, const NodeSet& subgraph) {
  if (subgraph.empty()) throw Error(ErrorCode::EmptyNodeSet, "sparsity of an empty subgraph");
  for (auto v : subgraph) g.check(v);
  return 1.0 - static_cast<double>(subgraph.size()) / static_cast<double>(g.size());
}

enum class Verdict { Essential, Noisy };
enum class Correctness { Correct, Incorrect, Unknown };

inline std::string to_string(Verdict v) { return v == Verdict::Essential ? "essential" : "noisy"; }
inline std::string to_string(Correctness c) {
  switch (c) {
    case Correctness::Correct: return "correct";
    case Correctness::Incorrect: return "incorrect";
    case Correctness::Unknown: return "unknown";
  }
  return "unknown";
}

// Ties (|s_m - s_u| <= tie_epsilon) are Noisy.
inline Verdict classify_explanation(double s_masked, double s_unmasked, double tie_epsilon = 0.0) {
  return s_masked > s_unmasked + tie_epsilon ? Verdict::Essential : Verdict::Noisy;
}

struct ScorePair {
  double s_masked = 0.0;
  double s_unmasked = 0.0;
  double raw_masked = 0.0;
  double raw_unmasked = 0.0;
};

// Players = subgraph for the masked score, its complement for the unmasked
// score (0 when the complement is empty). Both clamped to [0,1].
inline ScorePair score_pair(const SentenceGraph& g, const ValueFn& value, const NodeSet& subgraph,
                            const ShapleyOptions& opt) {
  ScorePair p;
  p.raw_masked = shapley_score(g, value, subgraph, opt);
  NodeSet complement;
  for (NodeId v = 0; v < g.size(); ++v)
    if (!std::binary_search(subgraph.begin(), subgraph.end(), v)) complement.push_back(v);
  p.raw_unmasked = complement.empty() ? 0.0 : shapley_score(g, value, complement, opt);
  p.s_masked = clamp01(p.raw_masked);
  p.s_unmasked = clamp01(p.raw_unmasked);
  return p;
}

struct Explanation {
  std::string graph_id;
  int predicted_class = 0;
  NodeSet subgraph;
  double s_masked = 0.0;
  double s_unmasked = 0.0;
  double raw_masked = 0.0;
  double raw_unmasked = 0.0;
  double fidelity = 0.0;
  double sparsity = 0.0;
  Verdict verdict = Verdict::Noisy;
  Correctness correctness = Correctness::Unknown;
};

inline Explanation explain_graph(const GcnModel& model, const FeaturedGraph& fg, const SubgraphXConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(cfg.min_atoms) > fg.graph.size())
    throw Error(ErrorCode::GraphTooSmall, "graph '" + fg.graph.sentence_id + "' is smaller than min_atoms");
  const int cls = predicted_class(model, fg);
  GcnValue value(model, fg, cls, cfg.score_mode, cfg.mask_mode);
  const auto opt = shapley_options(cfg);
  const ValueFn vf = std::cref(value);
  auto search = mcts_search(fg.graph, [&](const NodeSet& s) { return shapley_score(fg.graph, vf, s, opt); }, cfg);
  const auto pair = score_pair(fg.graph, vf, search.subgraph, opt);

  Explanation e;
  e.graph_id = fg.graph.sentence_id;
  e.predicted_class = cls;
  e.subgraph = search.subgraph;
  e.s_masked = pair.s_masked;
  e.s_unmasked = pair.s_unmasked;
  e.raw_masked = pair.raw_masked;
  e.raw_unmasked = pair.raw_unmasked;
  e.fidelity = fidelity(e.s_masked, e.s_unmasked);
  e.sparsity = sparsity(fg.graph, e.subgraph);
  e.verdict = classify_explanation(e.s_masked, e.s_unmasked, cfg.tie_epsilon);
  if (fg.gold_label) e.correctness = cls == *fg.gold_label ? Correctness::Correct : Correctness::Incorrect;
  return e;
}

// Explanations of independent graphs, optionally on several threads. Output
// order follows input order and results do not depend on the thread count.
inline std::vector<Explanation> explain_all(const GcnModel& model, const std::vector<FeaturedGraph>& graphs,
                                            const SubgraphXConfig& cfg, std::size_t threads = 1) {
  cfg.validate();
  std::vector<std::optional<Explanation>> out(graphs.size());
  std::vector<std::exception_ptr> errors(graphs.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < graphs.size(); i += step) {
      try {
        out[i] = explain_graph(model, graphs[i], cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, graphs.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  std::vector<Explanation> result;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    result.push_back(std::move(*out[i]));
  }
  return result;
}

struct Exemplars {
  std::optional<std::size_t> essential;  // correct, most important essential subgraph
  std::optional<std::size_t> noise;      // correct, noisiest
  std::optional<std::size_t> wrong;      // incorrect, subgraph driving the error
  std::optional<std::size_t> neglected;  // incorrect, part the model ignored
};

// Indices into `explanations`; first index wins ties. Explanations with
// unknown correctness are ignored.
inline Exemplars select_exemplars(const std::vector<Explanation>& explanations) {
  Exemplars ex;
  auto consider = [](std::optional<std::size_t>& slot, std::size_t i, double score, const auto& all, bool masked) {
    const double current = slot ? (masked ? all[*slot].s_masked : all[*slot].s_unmasked) : 0.0;
    if (!slot || score > current) slot = i;
  };
  for (std::size_t i = 0; i < explanations.size(); ++i) {
    const auto& e = explanations[i];
    if (e.correctness == Correctness::Unknown) continue;
    const bool correct = e.correctness == Correctness::Correct;
    if (e.verdict == Verdict::Essential)
      consider(correct ? ex.essential : ex.wrong, i, e.s_masked, explanations, true);
    else
      consider(correct ? ex.noise : ex.neglected, i, e.s_unmasked, explanations, false);
  }
  return ex;
}

// ---------------------------------------------------------------------------
// Explanation NDJSON

inline nlohmann::json to_json(const Explanation& e) {
  return {{"graph_id", e.graph_id},
          {"predicted_class", e.predicted_class},
          {"subgraph", e.subgraph},
          {"s_masked", e.s_masked},
          {"s_unmasked", e.s_unmasked},
          {"s_masked_raw", e.raw_masked},
          {"s_unmasked_raw", e.raw_unmasked},
          {"fidelity", e.fidelity},
          {"sparsity", e.sparsity},
          {"verdict", to_string(e.verdict)},
          {"correctness", to_string(e.correctness)}};
}

inline Explanation explanation_from_json(const nlohmann::json& j) {
  try {
    Explanation e;
    e.graph_id = j.at("graph_id").get<std::string>();
    e.predicted_class = j.at("predicted_class").get<int>();
    e.subgraph = make_node_set(j.at("subgraph").get<std::vector<NodeId>>());
    e.s_masked = j.at("s_masked").get<double>();
    e.s_unmasked = j.at("s_unmasked").get<double>();
    e.raw_masked = j.value("s_masked_raw", e.s_masked);
    e.raw_unmasked = j.value("s_unmasked_raw", e.s_unmasked);
    e.fidelity = j.at("fidelity").get<double>();
    e.sparsity = j.at("sparsity").get<double>();
    const auto verdict = j.at("verdict").get<std::string>();
    if (verdict != "essential" && verdict != "noisy") throw Error(ErrorCode::MalformedRecord, "verdict " + verdict);
    e.verdict = verdict == "essential" ? Verdict::Essential : Verdict::Noisy;
    const auto c = j.at("correctness").get<std::string>();
    e.correctness = c == "correct" ? Correctness::Correct : c == "incorrect" ? Correctness::Incorrect : Correctness::Unknown;
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::MalformedRecord, std::string("explanation: ") + ex.what());
  }
}

inline void write_explanations(const std::string& path, const std::vector<Explanation>& es) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  for (const auto& e : es) out << to_json(e).dump() << '\n';
}

inline std::vector<Explanation> read_explanations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<Explanation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(explanation_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::MalformedRecord, path + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace treexplain
