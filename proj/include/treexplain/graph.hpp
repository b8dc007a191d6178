#pragma once

// Sentence graphs: directed out-trees over word nodes and constituent
// ("special") nodes, plus the graph primitives the explainer and the
// semantic extraction need.

#include <algorithm>
#include <cstddef>
#include <deque>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "treexplain/error.hpp"
#include "treexplain/treebank.hpp"

namespace treexplain {

using NodeId = std::size_t;
using Edge = std::pair<NodeId, NodeId>;
// Sorted, duplicate-free list of node ids.
using NodeSet = std::vector<NodeId>;

inline NodeSet make_node_set(std::vector<NodeId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

enum class NodeKind { Word, Special };

struct GraphNode {
  NodeId id = 0;
  NodeKind kind = NodeKind::Word;
  int special_id = 0;  // constituent id for special nodes, 0 for words
  std::string surface;
  std::optional<std::size_t> position;  // token index, word nodes only

  bool is_word() const { return kind == NodeKind::Word; }

  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

class SentenceGraph {
 public:
  SentenceGraph() = default;

  // Validates every structural invariant: dense ids, in-degree 1 except the
  // root, word nodes are sinks, acyclic and connected.
  static SentenceGraph build(std::vector<GraphNode> nodes, std::vector<Edge> edges, NodeId root,
                             std::string sentence_id = {}) {
    SentenceGraph g;
    g.nodes_ = std::move(nodes);
    g.edges_ = std::move(edges);
    g.root_ = root;
    g.sentence_id = std::move(sentence_id);
    g.index();
    g.validate();
    return g;
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const GraphNode& node(NodeId id) const {
    check(id);
    return nodes_[id];
  }
  const std::vector<Edge>& edges() const { return edges_; }
  NodeId root() const { return root_; }

  const std::vector<NodeId>& children(NodeId id) const {
    check(id);
    return children_[id];
  }
  std::optional<NodeId> parent(NodeId id) const {
    check(id);
    return parent_[id];
  }
  // Direction-blind adjacency: parent (if any) followed by children.
  const std::vector<NodeId>& neighbors(NodeId id) const {
    check(id);
    return neighbors_[id];
  }
  std::size_t degree(NodeId id) const { return neighbors(id).size(); }

  std::size_t word_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const GraphNode& n) { return n.is_word(); }));
  }

  void check(NodeId id) const {
    if (id >= nodes_.size())
      throw Error(ErrorCode::UnknownNodeId, "node " + std::to_string(id) + " not in graph of size " +
                                                std::to_string(nodes_.size()));
  }

  std::string sentence_id;
  std::optional<ClassId> gold_label;
  std::optional<ClassId> teacher_label;

  friend bool operator==(const SentenceGraph& a, const SentenceGraph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_ && a.root_ == b.root_ &&
           a.sentence_id == b.sentence_id && a.gold_label == b.gold_label &&
           a.teacher_label == b.teacher_label;
  }

 private:
  void index() {
    const auto n = nodes_.size();
    children_.assign(n, {});
    parent_.assign(n, std::nullopt);
    neighbors_.assign(n, {});
    for (const auto& [src, dst] : edges_) {
      if (src >= n || dst >= n)
        throw Error(ErrorCode::UnknownNodeId, "edge endpoint out of range");
      if (parent_[dst])
        throw Error(ErrorCode::MalformedRecord, "node " + std::to_string(dst) + " has two parents");
      parent_[dst] = src;
      children_[src].push_back(dst);
    }
    for (NodeId v = 0; v < n; ++v) {
      if (parent_[v]) neighbors_[v].push_back(*parent_[v]);
      neighbors_[v].insert(neighbors_[v].end(), children_[v].begin(), children_[v].end());
    }
  }

  void validate() const {
    const auto n = nodes_.size();
    if (n == 0) throw Error(ErrorCode::EmptyNodeSet, "graph has no nodes");
    for (NodeId v = 0; v < n; ++v) {
      const auto& node = nodes_[v];
      if (node.id != v) throw Error(ErrorCode::MalformedRecord, "node ids must be dense and 0-based");
      if (node.is_word() != node.position.has_value())
        throw Error(ErrorCode::MalformedRecord, "word nodes and only word nodes carry a position");
      if (node.is_word() && !children_[v].empty())
        throw Error(ErrorCode::MalformedRecord, "word node " + std::to_string(v) + " has out-edges");
      if (!node.is_word() && !special_kind_by_id(node.special_id))
        throw Error(ErrorCode::UnknownLabel, "special id " + std::to_string(node.special_id));
    }
    check(root_);
    if (parent_[root_]) throw Error(ErrorCode::MalformedRecord, "root has an incoming edge");
    // Every non-root node has exactly one parent; reaching all nodes from the
    // root then proves the graph is a connected out-tree (hence acyclic).
    std::vector<char> seen(n, 0);
    std::deque<NodeId> queue{root_};
    seen[root_] = 1;
    std::size_t reached = 1;
    while (!queue.empty()) {
      const auto v = queue.front();
      queue.pop_front();
      for (auto c : children_[v]) {
        if (seen[c]) throw Error(ErrorCode::MalformedRecord, "cycle through node " + std::to_string(c));
        seen[c] = 1;
        ++reached;
        queue.push_back(c);
      }
    }
    if (reached != n) throw Error(ErrorCode::DisconnectedGraph, "graph is not rooted at " + std::to_string(root_));
  }

  std::vector<GraphNode> nodes_;
  std::vector<Edge> edges_;
  NodeId root_ = 0;
  std::vector<std::vector<NodeId>> children_;
  std::vector<std::optional<NodeId>> parent_;
  std::vector<std::vector<NodeId>> neighbors_;
};

// An induced piece of a SentenceGraph that keeps the original node ids.
struct Subgraph {
  NodeSet nodes;
  std::vector<Edge> edges;
  std::optional<NodeId> root;

  friend bool operator==(const Subgraph&, const Subgraph&) = default;
};

// ---------------------------------------------------------------------------
// Tree -> graph

namespace detail {

inline bool is_wrapper_label(const std::string& label) {
  return label.empty() || label == "ROOT" || label == "TOP";
}

// A node holding exactly one word whose tag is not a phrase tag is a POS
// preterminal; its word hangs directly from the enclosing phrase.
inline bool is_preterminal(const ConstituencyTree& t, const TreeNode& n, const LabelMap& labels) {
  return !n.is_leaf && n.children.size() == 1 && t.node(n.children.front()).is_leaf &&
         !labels.contains(n.label);
}

}  // namespace detail

inline SentenceGraph tree_to_graph(const ConstituencyTree& tree, UnknownLabelPolicy policy,
                                   const LabelMap& labels = default_label_map()) {
  if (tree.nodes.empty()) throw Error(ErrorCode::EmptyTree, "tree has no nodes");

  TreeNodeId top = tree.root;
  while (!tree.node(top).is_leaf && detail::is_wrapper_label(tree.node(top).label) &&
         tree.node(top).children.size() == 1 && !tree.node(tree.node(top).children.front()).is_leaf)
    top = tree.node(top).children.front();

  std::vector<GraphNode> nodes;
  std::vector<Edge> edges;
  std::size_t position = 0;

  std::function<void(TreeNodeId, std::optional<NodeId>)> visit = [&](TreeNodeId tid,
                                                                    std::optional<NodeId> parent) {
    const auto& tn = tree.node(tid);
    if (detail::is_preterminal(tree, tn, labels)) {
      visit(tn.children.front(), parent);
      return;
    }
    const NodeId id = nodes.size();
    if (tn.is_leaf) {
      nodes.push_back(GraphNode{id, NodeKind::Word, 0, tn.label, position++});
    } else {
      const auto kind = map_label(tn.label, policy, labels);
      nodes.push_back(GraphNode{id, NodeKind::Special, kind.id, std::string(kind.name), std::nullopt});
    }
    if (parent) edges.emplace_back(*parent, id);
    for (auto c : tn.children) visit(c, id);
  };
  visit(top, std::nullopt);

  auto g = SentenceGraph::build(std::move(nodes), std::move(edges), 0, tree.sentence_id);
  g.gold_label = tree.gold_label;
  g.teacher_label = tree.teacher_label;
  return g;
}

// ---------------------------------------------------------------------------
// Distances, components, induced pieces

// Directed BFS hop counts from `from`; unreachable nodes hold nullopt.
inline std::vector<std::optional<std::size_t>> distances_from(const SentenceGraph& g, NodeId from) {
  g.check(from);
  std::vector<std::optional<std::size_t>> dist(g.size());
  std::deque<NodeId> queue{from};
  dist[from] = 0;
  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    for (auto c : g.children(v)) {
      if (!dist[c]) {
        dist[c] = *dist[v] + 1;
        queue.push_back(c);
      }
    }
  }
  return dist;
}

inline std::optional<std::size_t> shortest_distance(const SentenceGraph& g, NodeId from, NodeId to) {
  g.check(to);
  return distances_from(g, from)[to];
}

inline Subgraph full_subgraph(const SentenceGraph& g) {
  NodeSet all(g.size());
  std::iota(all.begin(), all.end(), NodeId{0});
  return Subgraph{std::move(all), g.edges(), g.root()};
}

inline Subgraph remove_nodes(const SentenceGraph& g, const NodeSet& drop) {
  for (auto v : drop) g.check(v);
  std::vector<char> dropped(g.size(), 0);
  for (auto v : drop) dropped[v] = 1;
  Subgraph out;
  for (NodeId v = 0; v < g.size(); ++v)
    if (!dropped[v]) out.nodes.push_back(v);
  for (const auto& e : g.edges())
    if (!dropped[e.first] && !dropped[e.second]) out.edges.push_back(e);
  if (!dropped[g.root()]) out.root = g.root();
  return out;
}

inline Subgraph induced_subgraph(const SentenceGraph& g, const NodeSet& keep) {
  if (keep.empty()) throw Error(ErrorCode::EmptyNodeSet, "induced subgraph needs at least one node");
  for (auto v : keep) g.check(v);
  std::vector<char> kept(g.size(), 0);
  for (auto v : keep) kept[v] = 1;
  Subgraph out;
  out.nodes = make_node_set(keep);
  for (const auto& e : g.edges())
    if (kept[e.first] && kept[e.second]) out.edges.push_back(e);
  if (kept[g.root()]) out.root = g.root();
  return out;
}

// Weakly connected components, each sorted, ordered by smallest member.
inline std::vector<NodeSet> connected_components(const Subgraph& sg) {
  if (sg.nodes.empty()) return {};
  const NodeId bound = sg.nodes.back() + 1;
  std::vector<std::vector<NodeId>> adj(bound);
  std::vector<char> present(bound, 0);
  for (auto v : sg.nodes) present[v] = 1;
  for (const auto& [a, b] : sg.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<char> seen(bound, 0);
  std::vector<NodeSet> comps;
  for (auto start : sg.nodes) {
    if (seen[start]) continue;
    NodeSet comp;
    std::vector<NodeId> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for (auto w : adj[v]) {
        if (present[w] && !seen[w]) {
          seen[w] = 1;
          stack.push_back(w);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  return comps;
}

inline bool is_weakly_connected(const SentenceGraph& g, const NodeSet& nodes) {
  if (nodes.empty()) return false;
  return connected_components(induced_subgraph(g, nodes)).size() == 1;
}

// All nodes within `hops` direction-blind steps of any seed (seeds included).
inline NodeSet neighborhood(const SentenceGraph& g, const NodeSet& seeds, std::size_t hops) {
  std::vector<std::optional<std::size_t>> dist(g.size());
  std::deque<NodeId> queue;
  for (auto s : seeds) {
    g.check(s);
    if (!dist[s]) {
      dist[s] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    if (*dist[v] == hops) continue;
    for (auto w : g.neighbors(v)) {
      if (!dist[w]) {
        dist[w] = *dist[v] + 1;
        queue.push_back(w);
      }
    }
  }
  NodeSet out;
  for (NodeId v = 0; v < g.size(); ++v)
    if (dist[v]) out.push_back(v);
  return out;
}

// ---------------------------------------------------------------------------
// Graph NDJSON

inline nlohmann::json to_json(const SentenceGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes()) {
    nlohmann::json j{{"id", n.id}, {"kind", n.is_word() ? "word" : "special"}, {"surface", n.surface}};
    if (!n.is_word()) j["special_id"] = n.special_id;
    if (n.position) j["position"] = *n.position;
    nodes.push_back(std::move(j));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : g.edges()) edges.push_back({a, b});
  nlohmann::json out{{"id", g.sentence_id}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)},
                     {"root", g.root()}};
  if (g.gold_label) out["gold_label"] = *g.gold_label;
  if (g.teacher_label) out["teacher_label"] = *g.teacher_label;
  return out;
}

inline SentenceGraph graph_from_json(const nlohmann::json& j) {
  try {
    std::vector<GraphNode> nodes;
    for (const auto& jn : j.at("nodes")) {
      GraphNode n;
      n.id = jn.at("id").get<NodeId>();
      const auto kind = jn.at("kind").get<std::string>();
      if (kind == "word") {
        n.kind = NodeKind::Word;
      } else if (kind == "special") {
        n.kind = NodeKind::Special;
        n.special_id = jn.at("special_id").get<int>();
      } else {
        throw Error(ErrorCode::MalformedRecord, "node kind '" + kind + "'");
      }
      n.surface = jn.at("surface").get<std::string>();
      if (jn.contains("position") && !jn["position"].is_null()) n.position = jn["position"].get<std::size_t>();
      nodes.push_back(std::move(n));
    }
    std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    std::vector<Edge> edges;
    for (const auto& je : j.at("edges")) edges.emplace_back(je.at(0).get<NodeId>(), je.at(1).get<NodeId>());
    const auto& jid = j.at("id");
    auto g = SentenceGraph::build(std::move(nodes), std::move(edges), j.at("root").get<NodeId>(),
                                  jid.is_string() ? jid.get<std::string>() : jid.dump());
    if (j.contains("gold_label") && !j["gold_label"].is_null()) g.gold_label = j["gold_label"].get<int>();
    if (j.contains("teacher_label") && !j["teacher_label"].is_null())
      g.teacher_label = j["teacher_label"].get<int>();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("graph record: ") + e.what());
  }
}

inline std::vector<SentenceGraph> read_graphs_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<SentenceGraph> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, path + ": " + e.what());
    }
    out.push_back(graph_from_json(j));
  }
  return out;
}

inline void write_graphs_file(const std::string& path, const std::vector<SentenceGraph>& graphs) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  for (const auto& g : graphs) out << to_json(g).dump() << '\n';
}

}  // namespace treexplain
