#pragma once

// Node features: externally exported embeddings (NDJSON) or a deterministic
// hash-based stand-in, assembled into per-graph feature matrices.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "treexplain/error.hpp"
#include "treexplain/graph.hpp"
#include "treexplain/rng.hpp"

namespace treexplain {

struct EmbeddingTable {
  std::string graph_id;
  std::size_t dim = 0;
  std::map<NodeId, std::vector<double>> vectors;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

struct FeaturedGraph {
  SentenceGraph graph;
  Eigen::MatrixXd features;  // row i belongs to node i
  ClassId teacher_label = 0;
  std::optional<ClassId> gold_label;

  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
};

struct TeacherLabel {
  ClassId label = 0;
  std::vector<double> probs;
};

// ---------------------------------------------------------------------------

inline EmbeddingTable embedding_from_json(const nlohmann::json& j) {
  EmbeddingTable t;
  try {
    t.graph_id = j.at("graph_id").get<std::string>();
    const auto dim = j.at("dim").get<long long>();
    if (dim <= 0) throw Error(ErrorCode::MalformedRecord, "dim must be positive");
    t.dim = static_cast<std::size_t>(dim);
    for (const auto& [key, values] : j.at("vectors").items()) {
      std::size_t consumed = 0;
      const auto id = std::stoull(key, &consumed);
      if (consumed != key.size()) throw Error(ErrorCode::MalformedRecord, "node id key '" + key + "'");
      if (!values.is_array()) throw Error(ErrorCode::MalformedRecord, "vector for node " + key);
      if (values.size() != t.dim)
        throw Error(ErrorCode::DimensionMismatch, t.graph_id + " node " + key + ": expected " +
                                                      std::to_string(t.dim) + " values, got " +
                                                      std::to_string(values.size()));
      std::vector<double> v;
      v.reserve(t.dim);
      for (const auto& x : values) {
        double value = 0.0;
        if (x.is_number()) {
          value = x.get<double>();
        } else if (x.is_string()) {
          // "NaN", "Infinity" and friends written by lenient exporters
          value = std::stod(x.get<std::string>());
        } else {
          throw Error(ErrorCode::MalformedRecord, "non-numeric entry for node " + key);
        }
        if (!std::isfinite(value))
          throw Error(ErrorCode::NonFiniteValue, t.graph_id + " node " + key);
        v.push_back(value);
      }
      t.vectors.emplace(static_cast<NodeId>(id), std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("embedding record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("embedding record: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw Error(ErrorCode::NonFiniteValue, std::string("embedding record: ") + e.what());
  }
  return t;
}

inline nlohmann::json to_json(const EmbeddingTable& t) {
  nlohmann::json vectors = nlohmann::json::object();
  for (const auto& [id, v] : t.vectors) vectors[std::to_string(id)] = v;
  return {{"graph_id", t.graph_id}, {"dim", t.dim}, {"vectors", std::move(vectors)}};
}

inline std::vector<EmbeddingTable> load_embeddings(std::istream& in) {
  std::vector<EmbeddingTable> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(embedding_from_json(j));
  }
  return out;
}

inline std::vector<EmbeddingTable> load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return load_embeddings(in);
}

inline std::map<std::string, TeacherLabel> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::map<std::string, TeacherLabel> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TeacherLabel l;
      l.label = j.at("teacher_label").get<int>();
      if (j.contains("teacher_probs")) l.probs = j["teacher_probs"].get<std::vector<double>>();
      out[j.at("graph_id").get<std::string>()] = std::move(l);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, std::string("labels record: ") + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

// Standard normal draws from a splitmix stream (Box-Muller), so hashed
// features are identical on every platform.
inline double hashed_normal(std::uint64_t& state) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  const double u1 = (static_cast<double>(splitmix64(state) >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = (static_cast<double>(splitmix64(state) >> 11) + 0.5) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace detail

inline std::vector<double> hash_word_vector(std::string_view surface, std::size_t dim, std::uint64_t seed) {
  std::uint64_t state = mix_seed(mix_seed(seed, fnv1a64(surface)), dim);
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (auto& x : v) {
    x = detail::hashed_normal(state);
    norm2 += x * x;
  }
  const double norm = std::sqrt(norm2);
  for (auto& x : v) x /= norm;
  return v;
}

inline constexpr double kSpecialNoiseScale = 0.05;

inline std::vector<double> hash_special_vector(int special_id, std::size_t dim, std::uint64_t seed) {
  std::uint64_t state = mix_seed(mix_seed(seed, 0x5bec1a1ULL), static_cast<std::uint64_t>(special_id));
  std::vector<double> v(dim);
  for (auto& x : v) x = kSpecialNoiseScale * detail::hashed_normal(state);
  v[static_cast<std::size_t>(special_id - 1) % dim] += 1.0;
  return v;
}

inline EmbeddingTable hash_embed(const SentenceGraph& g, std::size_t dim, std::uint64_t seed) {
  if (dim < 8) throw Error(ErrorCode::DimensionMismatch, "hash features need dim >= 8");
  EmbeddingTable t;
  t.graph_id = g.sentence_id;
  t.dim = dim;
  for (const auto& n : g.nodes())
    t.vectors[n.id] = n.is_word() ? hash_word_vector(n.surface, dim, seed) : hash_special_vector(n.special_id, dim, seed);
  return t;
}

inline FeaturedGraph assign_features(const SentenceGraph& g, const EmbeddingTable& t) {
  if (!g.teacher_label)
    throw Error(ErrorCode::MissingTeacherLabel, "graph '" + g.sentence_id + "' has no teacher label");
  FeaturedGraph fg;
  fg.graph = g;
  fg.teacher_label = *g.teacher_label;
  fg.gold_label = g.gold_label;
  fg.features.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(t.dim));
  for (NodeId v = 0; v < g.size(); ++v) {
    auto it = t.vectors.find(v);
    if (it == t.vectors.end())
      throw Error(ErrorCode::MissingNodeVector, "graph '" + g.sentence_id + "' node " + std::to_string(v));
    if (it->second.size() != t.dim) throw Error(ErrorCode::DimensionMismatch, "node " + std::to_string(v));
    for (std::size_t k = 0; k < t.dim; ++k) {
      if (!std::isfinite(it->second[k])) throw Error(ErrorCode::NonFiniteValue, "node " + std::to_string(v));
      fg.features(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(k)) = it->second[k];
    }
  }
  return fg;
}

// ---------------------------------------------------------------------------
// Featured-graph NDJSON: graph record plus a "features" matrix.

inline nlohmann::json to_json(const FeaturedGraph& fg) {
  auto j = to_json(fg.graph);
  j["teacher_label"] = fg.teacher_label;
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < fg.features.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(fg.features.cols()));
    for (Eigen::Index c = 0; c < fg.features.cols(); ++c) row[static_cast<std::size_t>(c)] = fg.features(r, c);
    rows.push_back(std::move(row));
  }
  j["features"] = std::move(rows);
  return j;
}

inline FeaturedGraph featured_from_json(const nlohmann::json& j) {
  auto g = graph_from_json(j);
  EmbeddingTable t;
  t.graph_id = g.sentence_id;
  try {
    const auto& rows = j.at("features");
    t.dim = rows.empty() ? 0 : rows.at(0).size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto row = rows[i].get<std::vector<double>>();
      if (row.size() != t.dim) throw Error(ErrorCode::DimensionMismatch, "feature row " + std::to_string(i));
      t.vectors[i] = std::move(row);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("featured graph: ") + e.what());
  }
  return assign_features(g, t);
}

inline std::vector<FeaturedGraph> read_featured_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<FeaturedGraph> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(featured_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, path + ": " + e.what());
    }
  }
  return out;
}

inline void write_featured_file(const std::string& path, const std::vector<FeaturedGraph>& graphs) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  for (const auto& fg : graphs) out << to_json(fg).dump() << '\n';
}

}  // namespace treexplain
