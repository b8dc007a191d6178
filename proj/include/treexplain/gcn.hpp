#pragma once

// Graph convolutional student classifier: stacked normalized-adjacency
// convolutions, mean-pool readout, MLP head, softmax. Trained on teacher
// labels with plain mini-batch gradient descent (optional momentum).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "treexplain/error.hpp"
#include "treexplain/features.hpp"
#include "treexplain/graph.hpp"
#include "treexplain/rng.hpp"

namespace treexplain {

enum class Activation { Relu, Tanh, Identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "relu";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw Error(ErrorCode::InvalidConfig, "unknown activation '" + s + "'");
}

namespace detail {

inline Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::Relu: return z.cwiseMax(0.0);
    case Activation::Tanh: return z.array().tanh().matrix();
    case Activation::Identity: return z;
  }
  return z;
}

// derivative expressed through pre-activation z
inline Eigen::MatrixXd activate_grad(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::Relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::Tanh: return (1.0 - z.array().tanh().square()).matrix();
    case Activation::Identity: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
  }
  return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

}  // namespace detail

struct DenseLayer {
  Eigen::MatrixXd w;  // in x out
  Eigen::VectorXd b;  // out

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) { return a.w == b.w && a.b == b.b; }
};

struct GcnModel {
  std::vector<DenseLayer> layers;  // graph convolutions
  std::vector<DenseLayer> head;    // MLP; the last layer emits logits
  int n_classes = 2;
  Activation activation = Activation::Relu;

  std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().w.rows()); }

  template <class F>
  void for_each_block(F&& f) {
    for (auto& l : layers) {
      f(l.w);
      f(l.b);
    }
    for (auto& l : head) {
      f(l.w);
      f(l.b);
    }
  }

  template <class F>
  void for_each_block(F&& f) const {
    for (const auto& l : layers) {
      f(l.w);
      f(l.b);
    }
    for (const auto& l : head) {
      f(l.w);
      f(l.b);
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_block([&](const auto& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  void validate() const {
    if (layers.empty() || head.empty()) throw Error(ErrorCode::InvalidConfig, "model needs conv and head layers");
    auto check_chain = [](const std::vector<DenseLayer>& ls, Eigen::Index in) {
      for (const auto& l : ls) {
        if (l.w.rows() != in || l.b.size() != l.w.cols())
          throw Error(ErrorCode::DimensionMismatch, "layer dimensions do not chain");
        in = l.w.cols();
      }
      return in;
    };
    const auto conv_out = check_chain(layers, layers.front().w.rows());
    if (check_chain(head, conv_out) != n_classes)
      throw Error(ErrorCode::DimensionMismatch, "head output does not match n_classes");
    for_each_block([](const auto& m) {
      if (!m.allFinite()) throw Error(ErrorCode::NonFiniteValue, "model parameter");
    });
  }

  friend bool operator==(const GcnModel&, const GcnModel&) = default;
};

// conv_dims = {input, hidden...}; head_hidden lists MLP hidden widths.
inline GcnModel init_model(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims,
                           const std::vector<std::size_t>& head_hidden, int n_classes, Activation act,
                           std::uint64_t seed) {
  if (input_dim == 0 || hidden_dims.empty() || n_classes < 2)
    throw Error(ErrorCode::InvalidConfig, "model needs input dim, at least one conv layer and two classes");
  Rng rng(mix_seed(seed, 0x6c617965ULL));
  auto make = [&](std::size_t in, std::size_t out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer l;
    l.w.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = rng.uniform(-bound, bound);
    l.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
    return l;
  };
  GcnModel m;
  m.n_classes = n_classes;
  m.activation = act;
  std::size_t in = input_dim;
  for (auto h : hidden_dims) {
    m.layers.push_back(make(in, h));
    in = h;
  }
  for (auto h : head_hidden) {
    m.head.push_back(make(in, h));
    in = h;
  }
  m.head.push_back(make(in, static_cast<std::size_t>(n_classes)));
  return m;
}

// ---------------------------------------------------------------------------
// Adjacency

// D^-1/2 (A + I) D^-1/2 over the direction-blind adjacency. With
// `keep_edges_of` set, edges touching a node outside the mask are dropped.
inline Eigen::MatrixXd normalize_adjacency(const SentenceGraph& g, const std::vector<char>* keep_edges_of = nullptr) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  for (const auto& [s, d] : g.edges()) {
    if (keep_edges_of && (!(*keep_edges_of)[s] || !(*keep_edges_of)[d])) continue;
    a(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(d)) = 1.0;
    a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(s)) = 1.0;
  }
  const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt().matrix();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

// ---------------------------------------------------------------------------
// Forward / backward

struct ForwardTrace {
  std::vector<Eigen::MatrixXd> conv_inputs;  // H_l
  std::vector<Eigen::MatrixXd> conv_pre;     // Z_l
  std::vector<Eigen::VectorXd> head_inputs;  // u_k
  std::vector<Eigen::VectorXd> head_pre;     // s_k
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;
};

inline ForwardTrace forward_trace(const GcnModel& m, const Eigen::MatrixXd& adj, const Eigen::MatrixXd& x) {
  if (m.layers.empty() || x.cols() != m.layers.front().w.rows())
    throw Error(ErrorCode::DimensionMismatch, "feature dim " + std::to_string(x.cols()) + " vs model input " +
                                                  std::to_string(m.input_dim()));
  ForwardTrace t;
  Eigen::MatrixXd h = x;
  for (const auto& l : m.layers) {
    t.conv_inputs.push_back(h);
    Eigen::MatrixXd z = adj * (h * l.w);
    z.rowwise() += l.b.transpose();
    h = detail::activate(z, m.activation);
    t.conv_pre.push_back(std::move(z));
  }
  Eigen::VectorXd u = h.colwise().mean().transpose();
  for (std::size_t k = 0; k < m.head.size(); ++k) {
    const auto& l = m.head[k];
    t.head_inputs.push_back(u);
    Eigen::VectorXd s = l.w.transpose() * u + l.b;
    u = (k + 1 < m.head.size()) ? Eigen::VectorXd(detail::activate(s, m.activation)) : s;
    t.head_pre.push_back(std::move(s));
  }
  t.logits = u;
  t.probs = detail::softmax(u);
  return t;
}

inline Eigen::VectorXd forward(const GcnModel& m, const FeaturedGraph& fg) {
  return forward_trace(m, normalize_adjacency(fg.graph), fg.features).probs;
}

enum class MaskMode { ZeroFeatures, ZeroFeaturesAndEdges };

inline Eigen::MatrixXd masked_features(const FeaturedGraph& fg, const std::vector<char>& keep) {
  Eigen::MatrixXd x = fg.features;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    if (!keep[static_cast<std::size_t>(r)]) x.row(r).setZero();
  return x;
}

inline Eigen::VectorXd masked_forward(const GcnModel& m, const FeaturedGraph& fg, const NodeSet& keep,
                                      MaskMode mode = MaskMode::ZeroFeatures) {
  std::vector<char> mask(fg.graph.size(), 0);
  for (auto v : keep) {
    fg.graph.check(v);
    mask[v] = 1;
  }
  const auto adj = mode == MaskMode::ZeroFeatures ? normalize_adjacency(fg.graph) : normalize_adjacency(fg.graph, &mask);
  return forward_trace(m, adj, masked_features(fg, mask)).probs;
}

struct Gradients {
  GcnModel grad;  // same shapes as the model
  double loss = 0.0;
};

// Cross-entropy of one graph against `target`, with gradients accumulated
// into `acc` scaled by `weight`.
inline double backprop(const GcnModel& m, const Eigen::MatrixXd& adj, const Eigen::MatrixXd& x, int target,
                       GcnModel& acc, double weight = 1.0) {
  const auto t = forward_trace(m, adj, x);
  const double loss = -std::log(std::max(t.probs(target), std::numeric_limits<double>::min()));

  Eigen::VectorXd d = t.probs;
  d(target) -= 1.0;  // dL/dlogits
  for (std::size_t k = m.head.size(); k-- > 0;) {
    if (k + 1 < m.head.size()) d = d.cwiseProduct(detail::activate_grad(t.head_pre[k], m.activation));
    acc.head[k].w.noalias() += weight * t.head_inputs[k] * d.transpose();
    acc.head[k].b.noalias() += weight * d;
    d = m.head[k].w * d;
  }
  const auto n = static_cast<double>(x.rows());
  Eigen::MatrixXd dh = Eigen::MatrixXd::Ones(x.rows(), 1) * (d.transpose() / n);
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    Eigen::MatrixXd dz = dh.cwiseProduct(detail::activate_grad(t.conv_pre[l], m.activation));
    Eigen::MatrixXd adz = adj.transpose() * dz;
    acc.layers[l].w.noalias() += weight * t.conv_inputs[l].transpose() * adz;
    acc.layers[l].b.noalias() += weight * dz.colwise().sum().transpose();
    if (l > 0) dh = adz * m.layers[l].w.transpose();
  }
  return loss;
}

inline GcnModel zeros_like(const GcnModel& m) {
  GcnModel z = m;
  z.for_each_block([](auto& b) { b.setZero(); });
  return z;
}

// Mean cross-entropy plus (l2/2)·Σ‖W‖² over weight matrices (biases are not
// penalized), and its gradient.
inline Gradients loss_and_gradients(const GcnModel& m, const std::vector<const FeaturedGraph*>& batch,
                                    const std::vector<Eigen::MatrixXd>& adjs, double l2_penalty) {
  Gradients g{zeros_like(m), 0.0};
  const double w = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    g.loss += w * backprop(m, adjs[i], batch[i]->features, batch[i]->teacher_label, g.grad, w);
  if (l2_penalty > 0.0) {
    auto add = [&](const std::vector<DenseLayer>& ps, std::vector<DenseLayer>& gs) {
      for (std::size_t k = 0; k < ps.size(); ++k) {
        g.loss += 0.5 * l2_penalty * ps[k].w.squaredNorm();
        gs[k].w += l2_penalty * ps[k].w;
      }
    };
    add(m.layers, g.grad.layers);
    add(m.head, g.grad.head);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 0.1;
  std::vector<std::size_t> hidden_dims{32, 32};
  std::vector<std::size_t> head_hidden{16};
  double l2_penalty = 1e-4;
  std::size_t batch_size = 32;
  std::uint64_t rng_seed = 7;
  std::size_t early_stop_patience = 50;
  double momentum = 0.9;
  double val_fraction = 0.1;
  Activation activation = Activation::Relu;
  std::optional<int> n_classes;  // inferred from labels when unset

  void validate() const {
    if (learning_rate <= 0.0 || batch_size == 0 || early_stop_patience == 0 || hidden_dims.empty())
      throw Error(ErrorCode::InvalidConfig, "learning_rate, batch_size, patience and hidden_dims must be positive");
    if (l2_penalty < 0.0 || momentum < 0.0 || momentum >= 1.0 || val_fraction < 0.0 || val_fraction >= 1.0)
      throw Error(ErrorCode::InvalidConfig, "l2_penalty >= 0, momentum and val_fraction in [0,1)");
    for (auto h : hidden_dims)
      if (h == 0) throw Error(ErrorCode::InvalidConfig, "hidden dims must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_acc = 0.0;  // train accuracy when there is no validation split
};

struct TrainResult {
  GcnModel model;
  std::vector<EpochRecord> history;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

inline int predict(const GcnModel& m, const Eigen::MatrixXd& adj, const Eigen::MatrixXd& x) {
  Eigen::Index best = 0;
  forward_trace(m, adj, x).probs.maxCoeff(&best);
  return static_cast<int>(best);
}

inline TrainResult train(const std::vector<FeaturedGraph>& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "no graphs to train on");
  const auto dim = dataset.front().dim();
  int max_label = 0;
  for (const auto& fg : dataset) {
    if (fg.dim() != dim) throw Error(ErrorCode::DimensionMismatch, "graph '" + fg.graph.sentence_id + "'");
    if (fg.teacher_label < 0) throw Error(ErrorCode::MissingTeacherLabel, "negative label");
    max_label = std::max(max_label, fg.teacher_label);
  }
  const int n_classes = cfg.n_classes.value_or(std::max(2, max_label + 1));
  if (max_label >= n_classes) throw Error(ErrorCode::InvalidConfig, "label exceeds n_classes");

  TrainResult result;
  result.model = init_model(dim, cfg.hidden_dims, cfg.head_hidden, n_classes, cfg.activation, cfg.rng_seed);

  std::vector<Eigen::MatrixXd> adjs;
  adjs.reserve(dataset.size());
  for (const auto& fg : dataset) adjs.push_back(normalize_adjacency(fg.graph));

  Rng rng(mix_seed(cfg.rng_seed, 0x747261696eULL));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(dataset.size())));
  if (n_val >= dataset.size()) n_val = 0;
  result.val_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  result.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(result.val_indices.begin(), result.val_indices.end());
  std::sort(result.train_indices.begin(), result.train_indices.end());
  const auto& monitor = result.val_indices.empty() ? result.train_indices : result.val_indices;

  auto accuracy = [&](const GcnModel& m) {
    std::size_t hit = 0;
    for (auto i : monitor) hit += predict(m, adjs[i], dataset[i].features) == dataset[i].teacher_label;
    return static_cast<double>(hit) / static_cast<double>(monitor.size());
  };

  GcnModel model = result.model;
  GcnModel velocity = zeros_like(model);
  double best_acc = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> train_order = result.train_indices;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(train_order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_order.size(); start += cfg.batch_size) {
      const auto stop = std::min(train_order.size(), start + cfg.batch_size);
      std::vector<const FeaturedGraph*> batch;
      std::vector<Eigen::MatrixXd> batch_adj;
      for (auto k = start; k < stop; ++k) {
        batch.push_back(&dataset[train_order[k]]);
        batch_adj.push_back(adjs[train_order[k]]);
      }
      auto g = loss_and_gradients(model, batch, batch_adj, cfg.l2_penalty);
      epoch_loss += g.loss * static_cast<double>(batch.size());
      // v <- mu v - lr g ; p <- p + v
      std::vector<Eigen::MatrixXd*> params_w, vel_w, grad_w;
      std::vector<Eigen::VectorXd*> params_b, vel_b, grad_b;
      auto collect = [](GcnModel& m, std::vector<Eigen::MatrixXd*>& ws, std::vector<Eigen::VectorXd*>& bs) {
        for (auto* ls : {&m.layers, &m.head})
          for (auto& l : *ls) {
            ws.push_back(&l.w);
            bs.push_back(&l.b);
          }
      };
      collect(model, params_w, params_b);
      collect(velocity, vel_w, vel_b);
      collect(g.grad, grad_w, grad_b);
      for (std::size_t k = 0; k < params_w.size(); ++k) {
        *vel_w[k] = cfg.momentum * *vel_w[k] - cfg.learning_rate * *grad_w[k];
        *params_w[k] += *vel_w[k];
        *vel_b[k] = cfg.momentum * *vel_b[k] - cfg.learning_rate * *grad_b[k];
        *params_b[k] += *vel_b[k];
      }
    }
    epoch_loss /= static_cast<double>(train_order.size());
    const double acc = accuracy(model);
    result.history.push_back({epoch, epoch_loss, acc});
    if (!std::isfinite(epoch_loss)) throw Error(ErrorCode::NonFiniteValue, "training diverged");
    if (acc > best_acc) {
      best_acc = acc;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

enum class Reference { Gold, Teacher };

struct EvalReport {
  int n_classes = 0;
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [reference][predicted]
};

inline EvalReport report_from_pairs(const std::vector<int>& reference, const std::vector<int>& predicted, int n_classes) {
  EvalReport r;
  r.n_classes = n_classes;
  const auto k = static_cast<std::size_t>(n_classes);
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < reference.size(); ++i)
    ++r.confusion.at(static_cast<std::size_t>(reference[i])).at(static_cast<std::size_t>(predicted[i]));
  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto tp = r.confusion[c][c];
    std::size_t pred_total = 0, ref_total = 0;
    for (std::size_t o = 0; o < k; ++o) {
      pred_total += r.confusion[o][c];
      ref_total += r.confusion[c][o];
    }
    const double p = pred_total ? static_cast<double>(tp) / static_cast<double>(pred_total) : 0.0;
    const double rc = ref_total ? static_cast<double>(tp) / static_cast<double>(ref_total) : 0.0;
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.f1.push_back(p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0);
    r.support.push_back(ref_total);
    correct += tp;
  }
  const double kd = static_cast<double>(k);
  r.macro_precision = std::accumulate(r.precision.begin(), r.precision.end(), 0.0) / kd;
  r.macro_recall = std::accumulate(r.recall.begin(), r.recall.end(), 0.0) / kd;
  r.macro_f1 = std::accumulate(r.f1.begin(), r.f1.end(), 0.0) / kd;
  r.accuracy = reference.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(reference.size());
  return r;
}

inline EvalReport evaluate(const GcnModel& m, const std::vector<FeaturedGraph>& dataset, Reference reference) {
  std::vector<int> ref, pred;
  for (const auto& fg : dataset) {
    if (reference == Reference::Gold && !fg.gold_label)
      throw Error(ErrorCode::MissingLabels, "graph '" + fg.graph.sentence_id + "' has no gold label");
    const int y = reference == Reference::Gold ? *fg.gold_label : fg.teacher_label;
    if (y < 0 || y >= m.n_classes) throw Error(ErrorCode::MissingLabels, "label out of range");
    ref.push_back(y);
    pred.push_back(predict(m, normalize_adjacency(fg.graph), fg.features));
  }
  return report_from_pairs(ref, pred, m.n_classes);
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"n_classes", r.n_classes},     {"accuracy", r.accuracy},         {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall}, {"macro_f1", r.macro_f1},       {"precision", r.precision},
          {"recall", r.recall},           {"f1", r.f1},                     {"support", r.support},
          {"confusion", r.confusion}};
}

// ---------------------------------------------------------------------------
// Checkpoint JSON

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json layer_json(const DenseLayer& l) {
  nlohmann::json w = nlohmann::json::array();
  for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(l.w.cols()));
    for (Eigen::Index c = 0; c < l.w.cols(); ++c) row[static_cast<std::size_t>(c)] = l.w(r, c);
    w.push_back(std::move(row));
  }
  return {{"w", std::move(w)}, {"b", std::vector<double>(l.b.data(), l.b.data() + l.b.size())}};
}

inline DenseLayer layer_from_json(const nlohmann::json& j) {
  DenseLayer l;
  const auto rows = j.at("w").get<std::vector<std::vector<double>>>();
  const auto b = j.at("b").get<std::vector<double>>();
  const auto cols = rows.empty() ? b.size() : rows.front().size();
  l.w.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw Error(ErrorCode::DimensionMismatch, "ragged weight matrix");
    for (std::size_t c = 0; c < cols; ++c) l.w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  l.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  return l;
}

}  // namespace detail

inline nlohmann::json to_json(const GcnModel& m) {
  std::vector<std::size_t> dims{m.input_dim()};
  for (const auto& l : m.layers) dims.push_back(static_cast<std::size_t>(l.w.cols()));
  nlohmann::json layers = nlohmann::json::array(), head = nlohmann::json::array();
  for (const auto& l : m.layers) layers.push_back(detail::layer_json(l));
  for (const auto& l : m.head) head.push_back(detail::layer_json(l));
  return {{"version", kCheckpointVersion}, {"dims", dims},     {"n_classes", m.n_classes},
          {"activation", to_string(m.activation)}, {"layers", layers}, {"head", head}};
}

inline GcnModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw Error(ErrorCode::MalformedRecord, "unsupported checkpoint version");
    GcnModel m;
    m.n_classes = j.at("n_classes").get<int>();
    m.activation = activation_from_string(j.at("activation").get<std::string>());
    for (const auto& l : j.at("layers")) m.layers.push_back(detail::layer_from_json(l));
    for (const auto& l : j.at("head")) m.head.push_back(detail::layer_from_json(l));
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != m.layers.size() + 1 || dims.front() != m.input_dim())
      throw Error(ErrorCode::DimensionMismatch, "checkpoint dims disagree with layers");
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("checkpoint: ") + e.what());
  }
}

inline void save_model(const std::string& path, const GcnModel& m) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << to_json(m).dump(1) << '\n';
}

inline GcnModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("checkpoint: ") + e.what());
  }
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,loss,val_acc\n";
  for (const auto& r : history) out << r.epoch << ',' << r.loss << ',' << r.val_acc << '\n';
  return out.str();
}

}  // namespace treexplain
