#include <gtest/gtest.h>

#include <cstdio>
#include <numeric>

#include "test_support.hpp"
#include "treexplain/explain.hpp"

namespace tx = treexplain;

namespace {

struct RandomValue {
  tx::FeaturedGraph fg;
  tx::GcnModel model;
  std::shared_ptr<tx::GcnValue> value;
};

RandomValue random_value(tx::Rng& rng, std::size_t n) {
  RandomValue r;
  r.fg = tx::testing::random_featured(rng, n, 4, 0);
  r.model = tx::testing::with_random_biases(tx::init_model(4, {6, 6}, {4}, 2, tx::Activation::Tanh, rng.next()), rng);
  r.value = std::make_shared<tx::GcnValue>(r.model, r.fg, 1);
  return r;
}

tx::Explanation make_expl(double sm, double su, tx::Correctness c) {
  tx::Explanation e;
  e.s_masked = sm;
  e.s_unmasked = su;
  e.verdict = tx::classify_explanation(sm, su);
  e.correctness = c;
  return e;
}

}  // namespace

TEST(Config, ValidationRanges) {
  tx::SubgraphXConfig c;
  EXPECT_NO_THROW(c.validate());
  auto bad = [](auto mutate) {
    tx::SubgraphXConfig c;
    mutate(c);
    try {
      c.validate();
    } catch (const tx::Error& e) {
      return e.code() == tx::ErrorCode::InvalidConfig;
    }
    return false;
  };
  EXPECT_TRUE(bad([](auto& c) { c.num_hops = 0; }));
  EXPECT_TRUE(bad([](auto& c) { c.rollout = 301; }));
  EXPECT_TRUE(bad([](auto& c) { c.c_exploration = 0.05; }));
  EXPECT_TRUE(bad([](auto& c) { c.sample_num = 6; }));
  EXPECT_TRUE(bad([](auto& c) { c.max_nodes = 41; }));
  EXPECT_TRUE(bad([](auto& c) {
    c.min_atoms = 5;
    c.max_nodes = 4;
  }));
  EXPECT_TRUE(bad([](auto& c) { c.tie_epsilon = -1; }));
}

TEST(Config, JsonRoundTripAndDefaults) {
  tx::SubgraphXConfig c;
  c.rollout = 77;
  c.c_exploration = 2.5;
  c.mask_mode = tx::MaskMode::ZeroFeaturesAndEdges;
  EXPECT_EQ(tx::subgraphx_config_from_json(tx::to_json(c)), c);
  EXPECT_EQ(tx::subgraphx_config_from_json(nlohmann::json::object()), tx::SubgraphXConfig{});
  EXPECT_THROW(tx::subgraphx_config_from_json({{"score_mode", "odds"}}), tx::Error);
  EXPECT_THROW(tx::subgraphx_config_from_json({{"rollout", "many"}}), tx::Error);
}

TEST(GcnValue, MatchesMaskedForward) {
  tx::Rng rng(4);
  auto r = random_value(rng, 8);
  std::vector<char> keep{1, 0, 1, 1, 0, 0, 1, 1};
  tx::NodeSet kept{0, 2, 3, 6, 7};
  EXPECT_NEAR((*r.value)(keep), tx::masked_forward(r.model, r.fg, kept)(1), 1e-14);
  tx::GcnValue edges(r.model, r.fg, 1, tx::ScoreMode::Probability, tx::MaskMode::ZeroFeaturesAndEdges);
  EXPECT_NEAR(edges(keep), tx::masked_forward(r.model, r.fg, kept, tx::MaskMode::ZeroFeaturesAndEdges)(1), 1e-14);
}

TEST(Shapley, EnumerationMatchesTextbook) {
  tx::Rng rng(10);
  for (int i = 0; i < 25; ++i) {
    auto r = random_value(rng, 3 + rng.below(6));
    const auto& g = r.fg.graph;
    tx::NodeSet players{static_cast<tx::NodeId>(rng.below(g.size()))};
    if (rng.uniform() < 0.5) players = tx::neighborhood(g, players, 1);
    tx::ShapleyOptions opt{2, 3, 12, 0};
    const tx::ValueFn vf = std::cref(*r.value);
    EXPECT_NEAR(tx::shapley_score(g, vf, players, opt), tx::testing::textbook_shapley(g, vf, players, 2), 1e-12);
  }
}

TEST(Shapley, MonteCarloConvergesAndIsSeeded) {
  tx::Rng rng(12);
  auto r = random_value(rng, 9);
  const auto& g = r.fg.graph;
  const tx::ValueFn vf = std::cref(*r.value);
  const tx::NodeSet players{g.root()};
  const double exact = tx::testing::textbook_shapley(g, vf, players, 5);
  tx::ShapleyOptions mc{5, 4000, 0, 3};
  const double est = tx::shapley_score(g, vf, players, mc);
  EXPECT_NEAR(est, exact, 0.02);
  EXPECT_EQ(est, tx::shapley_score(g, vf, players, mc));
  mc.seed = 4;
  EXPECT_NE(est, tx::shapley_score(g, vf, players, mc));
}

TEST(Shapley, AdditiveScorerGivesOwnWeight) {
  tx::Rng rng(13);
  const auto g = tx::testing::random_sentence_graph(rng, 10);
  std::vector<double> w(g.size());
  for (auto& x : w) x = rng.uniform(-1, 1);
  const tx::ValueFn additive = [&](const std::vector<char>& mask) {
    double s = 0.0;
    for (std::size_t v = 0; v < mask.size(); ++v) s += mask[v] ? w[v] : 0.0;
    return s;
  };
  for (tx::NodeId v = 0; v < g.size(); ++v)
    EXPECT_NEAR(tx::shapley_score(g, additive, {v}, {3, 3, 12, 0}), w[v], 1e-12);
  EXPECT_NEAR(tx::shapley_score(g, additive, {0, 1}, {3, 3, 12, 0}), w[0] + w[1], 1e-12);
}

TEST(Shapley, NodesOutsideUniverseStayMasked) {
  // a path of specials; value only looks at the far end
  const auto g = tx::tree_to_graph(tx::parse_bracketed("(S (VP (NP (PP (NN x)))))"), tx::UnknownLabelPolicy::Reject);
  const tx::ValueFn far_end = [](const std::vector<char>& mask) { return mask[4] ? 1.0 : 0.0; };
  EXPECT_EQ(tx::shapley_score(g, far_end, {0}, {1, 3, 12, 0}), 0.0);
  EXPECT_EQ(tx::shapley_score(g, far_end, {4}, {1, 3, 12, 0}), 1.0);
}

TEST(Shapley, EmptyPlayersRejected) {
  const auto g = tx::testing::cat_sleeps_graph();
  const tx::ValueFn zero = [](const std::vector<char>&) { return 0.0; };
  try {
    tx::shapley_score(g, zero, {}, {});
    FAIL();
  } catch (const tx::Error& e) {
    EXPECT_EQ(e.code(), tx::ErrorCode::EmptyPlayerSet);
  }
}

TEST(Mcts, SearchRootAndExpansion) {
  const auto g = tx::testing::cat_sleeps_graph();
  tx::SubgraphXConfig c;
  c.num_hops = 1;
  EXPECT_EQ(tx::search_root(g, c), (tx::NodeSet{0, 1, 2, 3}));
  c.min_atoms = 6;
  c.max_nodes = 6;
  EXPECT_EQ(tx::search_root(g, c).size(), 6u);

  const auto kids = tx::expand_state(g, {0, 1, 2, 3, 4, 5}, 2);
  EXPECT_EQ(kids, (std::vector<tx::NodeSet>{{0, 1, 3, 4, 5}, {0, 1, 2, 4, 5}}));
  // removing the clause node splits the tree; the larger half survives
  const auto split = tx::expand_state(g, {0, 1, 2, 3, 4, 5}, 5);
  EXPECT_NE(std::find(split.begin(), split.end(), tx::NodeSet{1, 2, 3}), split.end());
}

TEST(Mcts, FindsExhaustiveOptimumOnSmallGraphs) {
  tx::Rng rng(31);
  int hits = 0;
  for (int i = 0; i < 20; ++i) {
    const auto g = tx::testing::random_sentence_graph(rng, 6 + rng.below(5));
    std::vector<double> w(g.size());
    for (auto& x : w) x = rng.uniform(-1, 1);
    const tx::RewardFn reward = [&](const tx::NodeSet& s) {
      double r = 0.0;
      for (auto v : s) r += w[v];
      return r;
    };
    tx::SubgraphXConfig c;
    c.num_hops = 5;
    c.rollout = 300;
    c.expand_atoms = 5;
    c.max_nodes = 4;
    const auto res = tx::mcts_search(g, reward, c);
    double best = -1e9;
    for (const auto& s : tx::testing::connected_subsets(g, 1, 4)) best = std::max(best, reward(s));
    EXPECT_LE(res.reward, best + 1e-12);
    EXPECT_EQ(res.reward, reward(res.subgraph));
    EXPECT_LE(res.subgraph.size(), 4u);
    EXPECT_TRUE(tx::is_weakly_connected(g, res.subgraph));
    hits += res.reward >= best - 1e-12;
  }
  EXPECT_GE(hits, 16);
}

TEST(Mcts, DeterministicAndGuarded) {
  tx::Rng rng(5);
  const auto g = tx::testing::random_sentence_graph(rng, 12);
  const tx::RewardFn reward = [](const tx::NodeSet& s) { return 1.0 / static_cast<double>(s.size() + s.front()); };
  tx::SubgraphXConfig c;
  const auto a = tx::mcts_search(g, reward, c);
  const auto b = tx::mcts_search(g, reward, c);
  EXPECT_EQ(a.subgraph, b.subgraph);
  EXPECT_EQ(a.stats.root_visits, static_cast<std::size_t>(c.rollout));
  c.min_atoms = 10;
  c.max_nodes = 12;
  const auto tiny = tx::tree_to_graph(tx::parse_bracketed("(S (NP (NN x)))"), tx::UnknownLabelPolicy::Reject);
  try {
    tx::mcts_search(tiny, reward, c);
    FAIL();
  } catch (const tx::Error& e) {
    EXPECT_EQ(e.code(), tx::ErrorCode::GraphTooSmall);
  }
}

TEST(Scores, FidelitySparsityVerdict) {
  EXPECT_DOUBLE_EQ(tx::fidelity(0.9, 0.2), 0.3);
  EXPECT_DOUBLE_EQ(tx::fidelity(0.4, 0.4), 1.0);
  const auto g = tx::testing::cat_sleeps_graph();
  EXPECT_DOUBLE_EQ(tx::sparsity(g, {1, 2, 3}), 0.5);
  EXPECT_THROW(tx::sparsity(g, {}), tx::Error);
  EXPECT_EQ(tx::classify_explanation(0.6, 0.5), tx::Verdict::Essential);
  EXPECT_EQ(tx::classify_explanation(0.5, 0.5), tx::Verdict::Noisy);
  EXPECT_EQ(tx::classify_explanation(0.4, 0.5), tx::Verdict::Noisy);
  EXPECT_EQ(tx::classify_explanation(0.55, 0.5, 0.1), tx::Verdict::Noisy);
  EXPECT_EQ(tx::clamp01(-0.2), 0.0);
  EXPECT_EQ(tx::clamp01(1.3), 1.0);
}

TEST(Scores, ScorePairClampsAndHandlesFullSubgraph) {
  const auto g = tx::testing::cat_sleeps_graph();
  const tx::ValueFn v = [](const std::vector<char>& m) { return 2.0 * m[1] - 0.5 * m[4]; };
  const auto p = tx::score_pair(g, v, {1, 2, 3}, {5, 3, 12, 0});
  EXPECT_DOUBLE_EQ(p.raw_masked, 2.0);
  EXPECT_DOUBLE_EQ(p.raw_unmasked, -0.5);
  EXPECT_EQ(p.s_masked, 1.0);
  EXPECT_EQ(p.s_unmasked, 0.0);
  const auto full = tx::score_pair(g, v, {0, 1, 2, 3, 4, 5}, {5, 3, 12, 0});
  EXPECT_EQ(full.raw_unmasked, 0.0);
}

TEST(Exemplars, MatchLinearScan) {
  using C = tx::Correctness;
  tx::Rng rng(8);
  for (int round = 0; round < 50; ++round) {
    std::vector<tx::Explanation> es;
    const auto n = rng.below(12);
    for (std::size_t i = 0; i < n; ++i) {
      const double sm = static_cast<double>(rng.below(5)) / 4.0, su = static_cast<double>(rng.below(5)) / 4.0;
      const auto c = rng.below(3);
      es.push_back(make_expl(sm, su, c == 0 ? C::Correct : c == 1 ? C::Incorrect : C::Unknown));
    }
    auto scan = [&](C c, tx::Verdict v, bool masked) -> std::optional<std::size_t> {
      std::optional<std::size_t> best;
      for (std::size_t i = 0; i < es.size(); ++i) {
        if (es[i].correctness != c || es[i].verdict != v) continue;
        const double s = masked ? es[i].s_masked : es[i].s_unmasked;
        if (!best || s > (masked ? es[*best].s_masked : es[*best].s_unmasked)) best = i;
      }
      return best;
    };
    const auto ex = tx::select_exemplars(es);
    EXPECT_EQ(ex.essential, scan(C::Correct, tx::Verdict::Essential, true));
    EXPECT_EQ(ex.noise, scan(C::Correct, tx::Verdict::Noisy, false));
    EXPECT_EQ(ex.wrong, scan(C::Incorrect, tx::Verdict::Essential, true));
    EXPECT_EQ(ex.neglected, scan(C::Incorrect, tx::Verdict::Noisy, false));
  }
  EXPECT_FALSE(tx::select_exemplars({}).essential);
}

TEST(ExplainGraph, ConsistentFieldsAndThreadInvariance) {
  const auto data = tx::testing::synthetic_featured(6, 16, 2);
  const auto model = tx::init_model(16, {8}, {4}, 2, tx::Activation::Relu, 3);
  tx::SubgraphXConfig c;
  c.rollout = 50;
  const auto one = tx::explain_all(model, data, c, 1);
  const auto three = tx::explain_all(model, data, c, 3);
  ASSERT_EQ(one.size(), data.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    const auto& e = one[i];
    EXPECT_EQ(tx::to_json(e), tx::to_json(three[i]));
    EXPECT_EQ(e.graph_id, data[i].graph.sentence_id);
    EXPECT_DOUBLE_EQ(e.fidelity, 1.0 - std::abs(e.s_masked - e.s_unmasked));
    EXPECT_DOUBLE_EQ(e.sparsity, 1.0 - static_cast<double>(e.subgraph.size()) / static_cast<double>(data[i].graph.size()));
    EXPECT_EQ(e.verdict, tx::classify_explanation(e.s_masked, e.s_unmasked));
    EXPECT_GE(e.subgraph.size(), 1u);
    EXPECT_LE(e.subgraph.size(), 6u);
    EXPECT_EQ(e.correctness, e.predicted_class == *data[i].gold_label ? tx::Correctness::Correct : tx::Correctness::Incorrect);
  }
}

TEST(ExplanationFile, RoundTrip) {
  auto e = make_expl(0.75, 0.25, tx::Correctness::Incorrect);
  e.graph_id = "g";
  e.subgraph = {1, 4};
  e.raw_masked = 1.5;
  const std::string path = ::testing::TempDir() + "expl.ndjson";
  tx::write_explanations(path, {e, e});
  const auto back = tx::read_explanations(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(tx::to_json(back[1]), tx::to_json(e));
  std::remove(path.c_str());
}
