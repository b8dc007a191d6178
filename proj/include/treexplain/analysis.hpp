#pragma once

// Post-hoc analysis of explanations: the words reachable below an explained
// subgraph, structural statistics per graph and their correlations.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "treexplain/error.hpp"
#include "treexplain/explain.hpp"
#include "treexplain/graph.hpp"

namespace treexplain {

// ---------------------------------------------------------------------------
// Stopwords

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

using StopwordSet = std::set<std::string>;

inline const StopwordSet& default_stopwords() {
  static const StopwordSet words = [] {
    const char* list[] = {
        "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as", "at",
        "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did",
        "do", "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has", "have",
        "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "if", "in", "into",
        "is", "it", "its", "itself", "just", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of",
        "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she",
        "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then",
        "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "very", "was",
        "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would",
        "you", "your", "yours", "yourself", "yourselves", "'s", "n't", "'re", "'ve", "'ll", "'d", "'m",
        ",", ".", ":", ";", "!", "?", "``", "''", "-lrb-", "-rrb-", "--", "-", "...", "'", "\"",
    };
    return StopwordSet(std::begin(list), std::end(list));
  }();
  return words;
}

// One word per line, matched case-insensitively; '#' lines are comments.
inline StopwordSet load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open stopword list " + path);
  StopwordSet out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    out.insert(lowercase(line));
  }
  return out;
}

inline bool is_stopword(const StopwordSet& stop, const std::string& word) { return stop.count(lowercase(word)) > 0; }

// ---------------------------------------------------------------------------
// Semantic extraction

struct SemanticWord {
  std::string surface;
  std::vector<std::string> chain;  // constituent names, root first, parent last

  friend bool operator==(const SemanticWord&, const SemanticWord&) = default;
};

struct SemanticResult {
  std::string graph_id;
  int predicted_class = 0;
  std::vector<SemanticWord> words;  // breadth-first order from the kept cluster's top
  std::optional<Verdict> verdict;
  Correctness correctness = Correctness::Unknown;
};

inline std::vector<std::string> ancestor_chain(const SentenceGraph& g, NodeId v) {
  std::vector<std::string> chain;
  for (auto p = g.parent(v); p; p = g.parent(*p)) chain.push_back(g.node(*p).surface);
  std::reverse(chain.begin(), chain.end());
  return chain;
}

// 1. distance from the root to every subgraph node, d_min = their minimum
// 2. drop every node strictly closer to the root than d_min
// 3. keep the single weak component that still meets the subgraph
// 4. breadth-first walk of that component, keeping word nodes that are not
//    stopwords
inline SemanticResult extract_semantic_labels(const SentenceGraph& g, const NodeSet& subgraph, NodeId root,
                                              const StopwordSet& stopwords) {
  if (subgraph.empty()) throw Error(ErrorCode::EmptyNodeSet, "semantic extraction needs a subgraph");
  for (auto v : subgraph)
    if (v >= g.size())
      throw Error(ErrorCode::SubgraphOutsideGraph, "node " + std::to_string(v) + " not in graph '" + g.sentence_id + "'");
  g.check(root);

  const auto dist = distances_from(g, root);
  std::size_t d_min = std::numeric_limits<std::size_t>::max();
  for (auto v : subgraph) {
    if (!dist[v])
      throw Error(ErrorCode::SubgraphOutsideGraph, "node " + std::to_string(v) + " unreachable from the root");
    d_min = std::min(d_min, *dist[v]);
  }

  NodeSet drop;
  for (NodeId v = 0; v < g.size(); ++v)
    if (!dist[v] || *dist[v] < d_min) drop.push_back(v);
  const auto pruned = remove_nodes(g, drop);

  std::optional<NodeSet> cluster;
  for (auto& comp : connected_components(pruned)) {
    const bool meets = std::any_of(subgraph.begin(), subgraph.end(),
                                   [&](NodeId v) { return std::binary_search(comp.begin(), comp.end(), v); });
    if (!meets) continue;
    if (cluster)
      throw Error(ErrorCode::AmbiguousCluster,
                  "subgraph spans several clusters after pruning in graph '" + g.sentence_id + "'");
    cluster = std::move(comp);
  }

  SemanticResult out;
  out.graph_id = g.sentence_id;
  // the cluster is a subtree: its top node is its only member at depth d_min
  NodeId top = cluster->front();
  for (auto v : *cluster)
    if (*dist[v] < *dist[top]) top = v;
  std::deque<NodeId> queue{top};
  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    const auto& node = g.node(v);
    if (node.is_word() && !is_stopword(stopwords, node.surface))
      out.words.push_back(SemanticWord{node.surface, ancestor_chain(g, v)});
    for (auto c : g.children(v)) queue.push_back(c);
  }
  return out;
}

inline SemanticResult extract_semantic_labels(const SentenceGraph& g, const Explanation& e, const StopwordSet& stopwords) {
  auto r = extract_semantic_labels(g, e.subgraph, g.root(), stopwords);
  r.predicted_class = e.predicted_class;
  r.verdict = e.verdict;
  r.correctness = e.correctness;
  return r;
}

// ---------------------------------------------------------------------------
// Structural metrics on the direction-blind view

struct UndirectedGraph {
  std::vector<std::vector<std::size_t>> adj;

  std::size_t size() const { return adj.size(); }
  std::size_t edge_count() const {
    std::size_t twice = 0;
    for (const auto& a : adj) twice += a.size();
    return twice / 2;
  }

  static UndirectedGraph from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    UndirectedGraph g;
    g.adj.assign(n, {});
    for (const auto& [a, b] : edges) {
      g.adj.at(a).push_back(b);
      g.adj.at(b).push_back(a);
    }
    return g;
  }

  static UndirectedGraph from(const SentenceGraph& sg) { return from_edges(sg.size(), sg.edges()); }
};

inline std::vector<std::size_t> bfs_hops(const UndirectedGraph& g, std::size_t src) {
  constexpr auto unseen = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> d(g.size(), unseen);
  std::deque<std::size_t> q{src};
  d[src] = 0;
  while (!q.empty()) {
    const auto v = q.front();
    q.pop_front();
    for (auto w : g.adj[v])
      if (d[w] == unseen) {
        d[w] = d[v] + 1;
        q.push_back(w);
      }
  }
  return d;
}

inline bool is_connected(const UndirectedGraph& g) {
  if (g.size() == 0) return false;
  const auto d = bfs_hops(g, 0);
  return std::none_of(d.begin(), d.end(), [](std::size_t x) { return x == std::numeric_limits<std::size_t>::max(); });
}

inline std::vector<double> degree_centrality(const UndirectedGraph& g) {
  std::vector<double> out;
  for (const auto& a : g.adj) out.push_back(static_cast<double>(a.size()));
  return out;
}

// Brandes accumulation over unordered pairs (unnormalized).
inline std::vector<double> betweenness_centrality(const UndirectedGraph& g) {
  const auto n = g.size();
  std::vector<double> bc(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::vector<std::size_t>> pred(n);
    std::vector<double> sigma(n, 0.0), delta(n, 0.0);
    std::vector<long long> dist(n, -1);
    std::vector<std::size_t> order;
    std::deque<std::size_t> q{s};
    sigma[s] = 1.0;
    dist[s] = 0;
    while (!q.empty()) {
      const auto v = q.front();
      q.pop_front();
      order.push_back(v);
      for (auto w : g.adj[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          pred[w].push_back(v);
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const auto w = *it;
      for (auto v : pred[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) bc[w] += delta[w];
    }
  }
  for (auto& x : bc) x /= 2.0;
  return bc;
}

// (n - 1) / sum of hop distances; 0 for an isolated single node.
inline std::vector<double> closeness_centrality(const UndirectedGraph& g) {
  std::vector<double> out;
  for (std::size_t v = 0; v < g.size(); ++v) {
    const auto d = bfs_hops(g, v);
    double total = 0.0;
    for (auto x : d) total += static_cast<double>(x);
    out.push_back(total > 0.0 ? static_cast<double>(g.size() - 1) / total : 0.0);
  }
  return out;
}

// Power iteration on A + I (same leading eigenvector as A, but no
// oscillation on bipartite graphs such as trees); unit Euclidean norm.
inline std::vector<double> eigenvector_centrality(const UndirectedGraph& g, double tol = 1e-10,
                                                  std::size_t max_iter = 1000) {
  const auto n = g.size();
  std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(n, 1))));
  for (std::size_t it = 0; it < max_iter; ++it) {
    std::vector<double> y = x;
    for (std::size_t v = 0; v < n; ++v)
      for (auto w : g.adj[v]) y[v] += x[w];
    double norm = 0.0;
    for (auto yi : y) norm += yi * yi;
    norm = std::sqrt(norm);
    double change = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      y[v] /= norm;
      change += std::abs(y[v] - x[v]);
    }
    x = std::move(y);
    if (change < tol) break;
  }
  return x;
}

struct StructuralRecord {
  std::string graph_id;
  int predicted_class = 0;
  Correctness correctness = Correctness::Unknown;
  double node_count = 0, edge_count = 0;
  double degree_mean = 0, degree_max = 0;
  double betweenness_mean = 0, betweenness_max = 0;
  double closeness_mean = 0, closeness_max = 0;
  double eigenvector_mean = 0, eigenvector_max = 0;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"node_count",       "edge_count",      "degree_mean",
                                              "degree_max",       "betweenness_mean", "betweenness_max",
                                              "closeness_mean",   "closeness_max",   "eigenvector_mean",
                                              "eigenvector_max"};
  return names;
}

inline std::vector<double> metric_values(const StructuralRecord& r) {
  return {r.node_count,       r.edge_count,      r.degree_mean,    r.degree_max,       r.betweenness_mean,
          r.betweenness_max,  r.closeness_mean,  r.closeness_max,  r.eigenvector_mean, r.eigenvector_max};
}

inline StructuralRecord structural_metrics(const UndirectedGraph& g, std::string graph_id = {}) {
  if (!is_connected(g)) throw Error(ErrorCode::DisconnectedGraph, "structural metrics need a connected graph");
  auto mean_max = [](const std::vector<double>& v) {
    return std::pair{std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()),
                     *std::max_element(v.begin(), v.end())};
  };
  StructuralRecord r;
  r.graph_id = std::move(graph_id);
  r.node_count = static_cast<double>(g.size());
  r.edge_count = static_cast<double>(g.edge_count());
  std::tie(r.degree_mean, r.degree_max) = mean_max(degree_centrality(g));
  std::tie(r.betweenness_mean, r.betweenness_max) = mean_max(betweenness_centrality(g));
  std::tie(r.closeness_mean, r.closeness_max) = mean_max(closeness_centrality(g));
  std::tie(r.eigenvector_mean, r.eigenvector_max) = mean_max(eigenvector_centrality(g));
  return r;
}

inline StructuralRecord structural_metrics(const SentenceGraph& g) {
  return structural_metrics(UndirectedGraph::from(g), g.sentence_id);
}

// ---------------------------------------------------------------------------
// Correlations

struct CorrelationMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;  // NaN where a column is constant
};

// Pearson correlation from single-pass co-moment updates.
inline CorrelationMatrix correlation_matrix(const std::vector<StructuralRecord>& records) {
  if (records.size() < 3) throw Error(ErrorCode::TooFewRecords, "correlation needs at least 3 records");
  const auto& names = metric_names();
  const auto k = names.size();
  std::vector<double> mean(k, 0.0);
  std::vector<std::vector<double>> comoment(k, std::vector<double>(k, 0.0));
  double n = 0.0;
  for (const auto& r : records) {
    const auto x = metric_values(r);
    n += 1.0;
    std::vector<double> before(k);
    for (std::size_t i = 0; i < k; ++i) {
      before[i] = x[i] - mean[i];
      mean[i] += before[i] / n;
    }
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) comoment[i][j] += before[i] * (x[j] - mean[j]);
  }
  CorrelationMatrix out;
  out.names = names;
  out.values.assign(k, std::vector<double>(k, std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double vi = comoment[i][i], vj = comoment[j][j];
      if (!(vi > 0.0) || !(vj > 0.0)) continue;
      out.values[i][j] = i == j ? 1.0 : std::clamp(comoment[i][j] / std::sqrt(vi * vj), -1.0, 1.0);
    }
  }
  // enforce exact symmetry
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) out.values[j][i] = out.values[i][j];
  return out;
}

// ---------------------------------------------------------------------------
// Word frequency tables

struct FrequencyRow {
  int predicted_class = 0;
  Correctness correctness = Correctness::Unknown;
  std::string chain;  // nearest ancestors, outermost first, joined by " > "
  std::string word;
  std::size_t count = 0;

  friend bool operator==(const FrequencyRow&, const FrequencyRow&) = default;
};

inline std::string truncated_chain(const std::vector<std::string>& chain, std::size_t depth = 2) {
  std::string out;
  const auto start = chain.size() > depth ? chain.size() - depth : 0;
  for (auto i = start; i < chain.size(); ++i) {
    if (!out.empty()) out += " > ";
    out += chain[i];
  }
  return out;
}

// Rows grouped by (correctness, class, chain); inside a group by descending
// count, then word.
inline std::vector<FrequencyRow> frequency_report(const std::vector<SemanticResult>& results, std::size_t depth = 2) {
  using Key = std::tuple<int, int, std::string>;
  std::map<Key, std::map<std::string, std::size_t>> groups;
  for (const auto& r : results)
    for (const auto& w : r.words)
      ++groups[{static_cast<int>(r.correctness), r.predicted_class, truncated_chain(w.chain, depth)}][w.surface];
  std::vector<FrequencyRow> rows;
  for (const auto& [key, counts] : groups) {
    std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [word, count] : sorted)
      rows.push_back({std::get<1>(key), static_cast<Correctness>(std::get<0>(key)), std::get<2>(key), word, count});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV / SVG output

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_number(double x) {
  if (std::isnan(x)) return "null";
  std::ostringstream out;
  out.precision(12);
  out << x;
  return out.str();
}

inline std::string words_csv(const std::vector<FrequencyRow>& rows) {
  std::string out = "class,correctness,chain,word,count\n";
  for (const auto& r : rows)
    out += std::to_string(r.predicted_class) + ',' + to_string(r.correctness) + ',' + csv_field(r.chain) + ',' +
           csv_field(r.word) + ',' + std::to_string(r.count) + '\n';
  return out;
}

inline std::string metrics_csv(const std::vector<StructuralRecord>& records) {
  std::string out = "graph_id,class,correctness";
  for (const auto& n : metric_names()) out += ',' + n;
  out += '\n';
  for (const auto& r : records) {
    out += csv_field(r.graph_id) + ',' + std::to_string(r.predicted_class) + ',' + to_string(r.correctness);
    for (auto v : metric_values(r)) out += ',' + csv_number(v);
    out += '\n';
  }
  return out;
}

inline std::string correlation_csv(const CorrelationMatrix& m) {
  std::string out = "metric";
  for (const auto& n : m.names) out += ',' + n;
  out += '\n';
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    out += m.names[i];
    for (auto v : m.values[i]) out += ',' + csv_number(v);
    out += '\n';
  }
  return out;
}

// Diverging blue-white-red heatmap; undefined cells are drawn grey.
inline std::string correlation_svg(const CorrelationMatrix& m, const std::string& title) {
  const int cell = 36, label = 130, k = static_cast<int>(m.names.size());
  const int size = label + k * cell + 10;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + 20 << "\">\n";
  out << "<text x=\"4\" y=\"14\" font-size=\"12\">" << title << "</text>\n";
  for (int i = 0; i < k; ++i) {
    out << "<text x=\"4\" y=\"" << 20 + label + i * cell + cell / 2 << "\" font-size=\"9\">" << m.names[static_cast<std::size_t>(i)]
        << "</text>\n";
    out << "<text transform=\"translate(" << label + i * cell + cell / 2 << "," << 20 + label - 4
        << ") rotate(-60)\" font-size=\"9\">" << m.names[static_cast<std::size_t>(i)] << "</text>\n";
    for (int j = 0; j < k; ++j) {
      const double v = m.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      int r = 200, g = 200, b = 200;
      if (!std::isnan(v)) {
        const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(v))));
        r = v >= 0 ? 255 : fade;
        g = fade;
        b = v >= 0 ? fade : 255;
      }
      out << "<rect x=\"" << label + j * cell << "\" y=\"" << 20 + label + i * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << r << ',' << g << ',' << b << ")\"/>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace treexplain
