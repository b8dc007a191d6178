#include <gtest/gtest.h>

#include <deque>
#include <functional>
#include <map>
#include <numeric>

#include "test_support.hpp"
#include "treexplain/graph.hpp"

namespace tx = treexplain;

namespace {

// Independent conversion: recursive descent directly over the bracket text,
// skipping (TAG word) preterminals.
struct OracleGraph {
  std::vector<std::string> surfaces;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

OracleGraph oracle_convert(const std::string& text) {
  OracleGraph g;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && text[i] == ' ') ++i;
  };
  auto read_atom = [&] {
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '(' && text[j] != ')') ++j;
    auto s = text.substr(i, j - i);
    i = j;
    return s;
  };
  std::function<void(std::optional<std::size_t>)> node = [&](std::optional<std::size_t> parent) {
    ++i;  // '('
    const auto tag = read_atom();
    skip_ws();
    if (text[i] != '(') {  // preterminal: (TAG word)
      const auto word = read_atom();
      skip_ws();
      ++i;  // ')'
      const bool phrase = tx::default_label_map().contains(tag);
      std::optional<std::size_t> attach = parent;
      if (phrase) {
        g.surfaces.push_back(std::string(tx::map_label(tag, tx::UnknownLabelPolicy::MapToNotAConstituent).name));
        if (parent) g.edges.emplace_back(*parent, g.surfaces.size() - 1);
        attach = g.surfaces.size() - 1;
      }
      g.surfaces.push_back(word);
      if (attach) g.edges.emplace_back(*attach, g.surfaces.size() - 1);
      return;
    }
    g.surfaces.push_back(std::string(tx::map_label(tag, tx::UnknownLabelPolicy::MapToNotAConstituent).name));
    const auto me = g.surfaces.size() - 1;
    if (parent) g.edges.emplace_back(*parent, me);
    while (text[i] == '(') {
      node(me);
      skip_ws();
    }
    ++i;  // ')'
  };
  node(std::nullopt);
  return g;
}

std::optional<std::size_t> bfs_oracle(const tx::SentenceGraph& g, tx::NodeId from, tx::NodeId to) {
  std::map<tx::NodeId, std::size_t> seen{{from, 0}};
  std::deque<tx::NodeId> q{from};
  while (!q.empty()) {
    auto v = q.front();
    q.pop_front();
    if (v == to) return seen[v];
    for (const auto& [a, b] : g.edges())
      if (a == v && !seen.count(b)) {
        seen[b] = seen[v] + 1;
        q.push_back(b);
      }
  }
  return std::nullopt;
}

std::vector<tx::NodeSet> union_find_components(const tx::Subgraph& sg) {
  std::map<tx::NodeId, tx::NodeId> parent;
  for (auto v : sg.nodes) parent[v] = v;
  std::function<tx::NodeId(tx::NodeId)> find = [&](tx::NodeId v) {
    return parent[v] == v ? v : parent[v] = find(parent[v]);
  };
  for (const auto& [a, b] : sg.edges) parent[find(a)] = find(b);
  std::map<tx::NodeId, tx::NodeSet> groups;
  for (auto v : sg.nodes) groups[find(v)].push_back(v);
  std::vector<tx::NodeSet> out;
  for (auto& [root, members] : groups) out.push_back(members);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(TreeToGraph, CatSleeps) {
  const auto g = tx::testing::cat_sleeps_graph();
  ASSERT_EQ(g.size(), 6u);
  EXPECT_EQ(g.edges().size(), 5u);
  std::vector<std::string> surfaces;
  for (const auto& n : g.nodes()) surfaces.push_back(n.surface);
  EXPECT_EQ(surfaces, (std::vector<std::string>{"SENTENCE", "NOUN PHRASE", "the", "cat", "VERB PHRASE", "sleeps"}));
  EXPECT_EQ(g.root(), 0u);
  EXPECT_EQ(g.node(g.root()).surface, "SENTENCE");
  EXPECT_EQ(g.word_count(), 3u);
  EXPECT_EQ(g.node(3).position, 1u);

  const auto oracle = oracle_convert(tx::testing::kCatSleeps);
  EXPECT_EQ(oracle.surfaces, surfaces);
  EXPECT_EQ(oracle.edges, g.edges());
}

TEST(TreeToGraph, SmallestCase) {
  const auto g = tx::tree_to_graph(tx::parse_bracketed("(S (NP (NN hi)))"), tx::UnknownLabelPolicy::Reject);
  EXPECT_EQ(g.size(), 3u);
  EXPECT_EQ(g.edges().size(), 2u);
}

TEST(TreeToGraph, UnknownLabelPropagates) {
  const auto t = tx::parse_bracketed("(S (XQZ (NN a) (NN b)))");
  EXPECT_THROW(tx::tree_to_graph(t, tx::UnknownLabelPolicy::Reject), tx::Error);
  const auto g = tx::tree_to_graph(t, tx::UnknownLabelPolicy::MapToNotAConstituent);
  EXPECT_EQ(g.node(1).special_id, 24);
}

TEST(TreeToGraph, RootWrapperIsElided) {
  const auto g = tx::tree_to_graph(tx::parse_bracketed("(ROOT (S (NP (NN hi))))"), tx::UnknownLabelPolicy::Reject);
  EXPECT_EQ(g.size(), 3u);
  EXPECT_EQ(g.node(0).surface, "SENTENCE");
}

TEST(TreeToGraph, RandomTreesMatchOracleAndInvariants) {
  tx::Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto text = tx::testing::random_tree_text(rng);
    const auto tree = tx::parse_bracketed(text);
    const auto g = tx::tree_to_graph(tree, tx::UnknownLabelPolicy::MapToNotAConstituent);
    const auto oracle = oracle_convert(tx::print_bracketed(tree));
    std::vector<std::string> surfaces;
    for (const auto& n : g.nodes()) surfaces.push_back(n.surface);
    ASSERT_EQ(surfaces, oracle.surfaces) << text;
    ASSERT_EQ(g.edges(), oracle.edges) << text;

    EXPECT_EQ(g.word_count(), tree.leaves().size());
    std::vector<std::size_t> indeg(g.size(), 0);
    for (const auto& [a, b] : g.edges()) ++indeg[b];
    for (tx::NodeId v = 0; v < g.size(); ++v) {
      EXPECT_EQ(indeg[v], v == g.root() ? 0u : 1u);
      if (g.node(v).is_word()) EXPECT_TRUE(g.children(v).empty());
    }
    // Kahn: every node gets removed, so there is no cycle
    std::deque<tx::NodeId> q{g.root()};
    std::size_t removed = 0;
    auto remaining = indeg;
    while (!q.empty()) {
      auto v = q.front();
      q.pop_front();
      ++removed;
      for (auto c : g.children(v))
        if (--remaining[c] == 0) q.push_back(c);
    }
    EXPECT_EQ(removed, g.size());
  }
}

TEST(ShortestDistance, Basics) {
  const auto g = tx::testing::cat_sleeps_graph();
  EXPECT_EQ(tx::shortest_distance(g, 0, 0), 0u);
  EXPECT_EQ(tx::shortest_distance(g, 0, 3), 2u);
  EXPECT_EQ(tx::shortest_distance(g, 3, 0), std::nullopt);
  EXPECT_EQ(tx::shortest_distance(g, 1, 5), std::nullopt);
  EXPECT_THROW(tx::shortest_distance(g, 0, 17), tx::Error);
}

TEST(ShortestDistance, RandomGraphsMatchBfs) {
  tx::Rng rng(11);
  for (int i = 0; i < 40; ++i) {
    const auto g = tx::testing::random_sentence_graph(rng, 2 + rng.below(14));
    for (tx::NodeId a = 0; a < g.size(); ++a)
      for (tx::NodeId b = 0; b < g.size(); ++b) ASSERT_EQ(tx::shortest_distance(g, a, b), bfs_oracle(g, a, b));
  }
}

TEST(RemoveNodes, Cases) {
  const auto g = tx::testing::cat_sleeps_graph();
  const auto same = tx::remove_nodes(g, {});
  EXPECT_EQ(same, tx::full_subgraph(g));

  const auto pruned = tx::remove_nodes(g, {0});
  EXPECT_FALSE(pruned.root);
  EXPECT_EQ(pruned.nodes.size(), 5u);
  const auto comps = tx::connected_components(pruned);
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_EQ(comps[0], (tx::NodeSet{1, 2, 3}));
  EXPECT_EQ(comps[1], (tx::NodeSet{4, 5}));
  EXPECT_EQ(comps, union_find_components(pruned));
}

TEST(ConnectedComponents, EdgeCases) {
  const auto g = tx::testing::cat_sleeps_graph();
  EXPECT_EQ(tx::connected_components(tx::full_subgraph(g)).size(), 1u);
  tx::Subgraph isolated{{0, 2, 5, 7}, {}, std::nullopt};
  EXPECT_EQ(tx::connected_components(isolated).size(), 4u);
  EXPECT_TRUE(tx::connected_components(tx::Subgraph{}).empty());
}

TEST(ConnectedComponents, RandomPrunedGraphsMatchUnionFind) {
  tx::Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    const auto g = tx::testing::random_sentence_graph(rng, 2 + rng.below(20));
    tx::NodeSet drop;
    for (tx::NodeId v = 0; v < g.size(); ++v)
      if (rng.uniform() < 0.3) drop.push_back(v);
    const auto pruned = tx::remove_nodes(g, drop);
    EXPECT_EQ(pruned.nodes.size(), g.size() - drop.size());
    const auto comps = tx::connected_components(pruned);
    EXPECT_EQ(comps, union_find_components(pruned));
    std::size_t total = 0;
    for (const auto& c : comps) total += c.size();
    EXPECT_EQ(total, pruned.nodes.size());
  }
}

TEST(InducedSubgraph, Cases) {
  const auto g = tx::testing::cat_sleeps_graph();
  EXPECT_EQ(tx::induced_subgraph(g, {0, 1, 2, 3, 4, 5}), tx::full_subgraph(g));
  const auto np = tx::induced_subgraph(g, {1, 2, 3});
  EXPECT_EQ(np.nodes.size(), 3u);
  EXPECT_EQ(np.edges.size(), 2u);
  for (const auto& e : np.edges) EXPECT_NE(std::find(g.edges().begin(), g.edges().end(), e), g.edges().end());
  EXPECT_THROW(tx::induced_subgraph(g, {}), tx::Error);
}

TEST(Neighborhood, DirectionBlind) {
  const auto g = tx::testing::cat_sleeps_graph();
  EXPECT_EQ(tx::neighborhood(g, {3}, 1), (tx::NodeSet{1, 3}));
  EXPECT_EQ(tx::neighborhood(g, {3}, 2), (tx::NodeSet{0, 1, 2, 3}));
  EXPECT_TRUE(tx::is_weakly_connected(g, {1, 2, 3}));
  EXPECT_FALSE(tx::is_weakly_connected(g, {2, 3}));
}

TEST(GraphJson, RoundTripAndValidation) {
  auto g = tx::testing::cat_sleeps_graph();
  g.teacher_label = 1;
  const auto back = tx::graph_from_json(tx::to_json(g));
  EXPECT_EQ(back, g);

  auto j = tx::to_json(g);
  j["edges"].push_back({3, 4});  // second parent for node 4
  EXPECT_THROW(tx::graph_from_json(j), tx::Error);
  auto k = tx::to_json(g);
  k["edges"].push_back({2, 5});
  k["edges"].erase(4);  // word node 2 gets an out-edge
  EXPECT_THROW(tx::graph_from_json(k), tx::Error);
}
