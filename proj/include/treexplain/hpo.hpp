#pragma once

// Black-box search over the explainer hyperparameters, maximizing the mean
// of masked score, unmasked score and sparsity over a sample of graphs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "treexplain/error.hpp"
#include "treexplain/explain.hpp"
#include "treexplain/rng.hpp"

namespace treexplain {

struct ScoreTriple {
  double s_masked = 0.0;
  double s_unmasked = 0.0;
  double sparsity = 0.0;

  friend bool operator==(const ScoreTriple&, const ScoreTriple&) = default;
};

// (1/3)(mean s_m + mean s_u + mean s_s). With raw_sum the per-sample sums
// are used as printed, without dividing by n.
inline double objective(const std::vector<ScoreTriple>& triples, bool raw_sum = false) {
  if (triples.empty()) throw Error(ErrorCode::EmptyList, "objective of an empty sample");
  double m = 0.0, u = 0.0, s = 0.0;
  for (const auto& t : triples) {
    m += t.s_masked;
    u += t.s_unmasked;
    s += t.sparsity;
  }
  const double n = raw_sum ? 1.0 : static_cast<double>(triples.size());
  return (m / n + u / n + s / n) / 3.0;
}

enum class ParamKind { Integer, Float };

struct ParamRange {
  std::string name;
  ParamKind kind;
  double low;
  double high;
};

struct SearchSpace {
  std::vector<ParamRange> params;

  static SearchSpace subgraphx() {
    return {{
        {"num_hops", ParamKind::Integer, 1, 5},
        {"rollout", ParamKind::Integer, 50, 300},
        {"min_atoms", ParamKind::Integer, 1, 10},
        {"c_exploration", ParamKind::Float, 0.1, 30.0},
        {"expand_atoms", ParamKind::Integer, 1, 5},
        {"local_radius", ParamKind::Integer, 1, 5},
        {"sample_num", ParamKind::Integer, 1, 5},
        {"max_nodes", ParamKind::Integer, 2, 40},
    }};
  }

  const ParamRange& param(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return p;
    throw Error(ErrorCode::InvalidConfig, "no hyperparameter '" + name + "'");
  }
};

inline double get_param(const SubgraphXConfig& c, const std::string& name) {
  if (name == "num_hops") return c.num_hops;
  if (name == "rollout") return c.rollout;
  if (name == "min_atoms") return c.min_atoms;
  if (name == "c_exploration") return c.c_exploration;
  if (name == "expand_atoms") return c.expand_atoms;
  if (name == "local_radius") return c.local_radius;
  if (name == "sample_num") return c.sample_num;
  if (name == "max_nodes") return c.max_nodes;
  throw Error(ErrorCode::InvalidConfig, "no hyperparameter '" + name + "'");
}

inline void set_param(SubgraphXConfig& c, const std::string& name, double v) {
  const int i = static_cast<int>(std::lround(v));
  if (name == "num_hops") c.num_hops = i;
  else if (name == "rollout") c.rollout = i;
  else if (name == "min_atoms") c.min_atoms = i;
  else if (name == "c_exploration") c.c_exploration = v;
  else if (name == "expand_atoms") c.expand_atoms = i;
  else if (name == "local_radius") c.local_radius = i;
  else if (name == "sample_num") c.sample_num = i;
  else if (name == "max_nodes") c.max_nodes = i;
  else throw Error(ErrorCode::InvalidConfig, "no hyperparameter '" + name + "'");
}

inline double draw_param(const ParamRange& p, Rng& rng) {
  if (p.kind == ParamKind::Integer)
    return static_cast<double>(rng.between(static_cast<long long>(p.low), static_cast<long long>(p.high)));
  return rng.uniform(p.low, p.high);
}

inline bool within_space(const SearchSpace& space, const SubgraphXConfig& c) {
  for (const auto& p : space.params) {
    const double v = get_param(c, p.name);
    if (v < p.low || v > p.high) return false;
  }
  return c.max_nodes >= c.min_atoms;
}

// Uniform draw; combinations with max_nodes < min_atoms are redrawn.
inline SubgraphXConfig sample_config(const SearchSpace& space, Rng& rng, const SubgraphXConfig& base = {}) {
  while (true) {
    SubgraphXConfig c = base;
    for (const auto& p : space.params) set_param(c, p.name, draw_param(p, rng));
    if (within_space(space, c)) return c;
  }
}

struct TrialOutcome {
  double objective = 0.0;
  std::vector<ScoreTriple> triples;
};

using TrialEvalFn = std::function<TrialOutcome(const SubgraphXConfig&)>;

struct TrialResult {
  std::size_t index = 0;
  SubgraphXConfig config;
  double objective = 0.0;
  std::vector<ScoreTriple> triples;
  double wall_time = 0.0;  // seconds
};

struct SearchResult {
  TrialResult best;
  std::vector<TrialResult> history;  // in trial order
  std::vector<double> best_so_far;
};

namespace detail {

// Evaluates configs[i] into results[first + i]; work is spread over threads
// but every result lands at its own index.
inline void evaluate_trials(const std::vector<SubgraphXConfig>& configs, const TrialEvalFn& eval,
                            std::size_t first_index, std::vector<TrialResult>& out, std::size_t threads) {
  std::vector<TrialResult> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < configs.size(); i += step) {
      try {
        const auto start = std::chrono::steady_clock::now();
        auto outcome = eval(configs[i]);
        const auto stop = std::chrono::steady_clock::now();
        if (!(outcome.objective >= 0.0 && outcome.objective <= 1.0))
          throw Error(ErrorCode::InvalidConfig, "trial objective outside [0,1]");
        results[i] = TrialResult{first_index + i, configs[i], outcome.objective, std::move(outcome.triples),
                                 std::chrono::duration<double>(stop - start).count()};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, configs.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(results[i]));
  }
}

inline void finish(SearchResult& r) {
  r.best_so_far.clear();
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    if (!best || r.history[i].objective > r.history[*best].objective) best = i;
    r.best_so_far.push_back(r.history[*best].objective);
  }
  if (best) r.best = r.history[*best];
}

}  // namespace detail

inline SearchResult random_search(const SearchSpace& space, const TrialEvalFn& eval, std::size_t budget,
                                  std::uint64_t seed, const SubgraphXConfig& base = {}, std::size_t threads = 1) {
  if (budget == 0) throw Error(ErrorCode::InvalidConfig, "search budget must be at least 1");
  Rng rng(mix_seed(seed, 0x72616e64ULL));
  std::vector<SubgraphXConfig> configs;
  for (std::size_t i = 0; i < budget; ++i) configs.push_back(sample_config(space, rng, base));
  SearchResult r;
  detail::evaluate_trials(configs, eval, 0, r.history, threads);
  detail::finish(r);
  return r;
}

struct EvolutionOptions {
  std::size_t population = 10;
  std::size_t generations = 19;
  std::size_t tournament = 2;
  double mutation_rate = 0.25;  // per field; at least one field always mutates
};

// Tournament selection, per-field uniform mutation, and (mu + lambda)
// survival so the best individual is never lost.
inline SearchResult evolutionary_search(const SearchSpace& space, const TrialEvalFn& eval, const EvolutionOptions& opt,
                                        std::uint64_t seed, const SubgraphXConfig& base = {}, std::size_t threads = 1) {
  if (opt.population < 2) throw Error(ErrorCode::InvalidConfig, "population must be at least 2");
  Rng rng(mix_seed(seed, 0x65766f6cULL));
  SearchResult r;

  std::vector<SubgraphXConfig> initial;
  for (std::size_t i = 0; i < opt.population; ++i) initial.push_back(sample_config(space, rng, base));
  detail::evaluate_trials(initial, eval, 0, r.history, threads);
  std::vector<std::size_t> population(opt.population);
  for (std::size_t i = 0; i < opt.population; ++i) population[i] = i;

  auto better = [&](std::size_t a, std::size_t b) {
    return r.history[a].objective > r.history[b].objective ||
           (r.history[a].objective == r.history[b].objective && a < b);
  };

  for (std::size_t gen = 0; gen < opt.generations; ++gen) {
    std::vector<SubgraphXConfig> offspring;
    for (std::size_t k = 0; k < opt.population; ++k) {
      std::size_t parent = population[rng.below(population.size())];
      for (std::size_t t = 1; t < std::max<std::size_t>(opt.tournament, 1); ++t) {
        const auto challenger = population[rng.below(population.size())];
        if (better(challenger, parent)) parent = challenger;
      }
      while (true) {
        SubgraphXConfig child = r.history[parent].config;
        const std::size_t forced = rng.below(space.params.size());
        for (std::size_t f = 0; f < space.params.size(); ++f)
          if (f == forced || rng.uniform() < opt.mutation_rate)
            set_param(child, space.params[f].name, draw_param(space.params[f], rng));
        if (within_space(space, child)) {
          offspring.push_back(child);
          break;
        }
      }
    }
    const std::size_t first = r.history.size();
    detail::evaluate_trials(offspring, eval, first, r.history, threads);
    for (std::size_t k = 0; k < offspring.size(); ++k) population.push_back(first + k);
    std::sort(population.begin(), population.end(), better);
    population.resize(opt.population);
  }
  detail::finish(r);
  return r;
}


// Known-optimum objective for exercising the searches: 1 minus the Euclidean
// distance to `target` over range-normalized coordinates, divided by sqrt(d)
// so the result stays in [0,1].
inline TrialEvalFn planted_objective(const SearchSpace& space, const SubgraphXConfig& target) {
  return [space, target](const SubgraphXConfig& c) {
    if (space.params.empty()) return TrialOutcome{1.0, {}};
    double sq = 0.0;
    for (const auto& p : space.params) {
      const double span = p.high - p.low;
      const double d = span > 0.0 ? (get_param(c, p.name) - get_param(target, p.name)) / span : 0.0;
      sq += d * d;
    }
    return TrialOutcome{1.0 - std::sqrt(sq / static_cast<double>(space.params.size())), {}};
  };
}

// ---------------------------------------------------------------------------

inline std::string trials_csv(const SearchSpace& space, const std::vector<TrialResult>& history,
                              bool include_wall_time = true) {
  std::ostringstream out;
  out << std::setprecision(12);
  out << "trial_index";
  for (const auto& p : space.params) out << ',' << p.name;
  out << ",objective";
  if (include_wall_time) out << ",wall_time";
  out << '\n';
  for (const auto& t : history) {
    out << t.index;
    for (const auto& p : space.params) out << ',' << get_param(t.config, p.name);
    out << ',' << t.objective;
    if (include_wall_time) out << ',' << t.wall_time;
    out << '\n';
  }
  return out.str();
}

}  // namespace treexplain
