#pragma once

/*!
  \file features.hpp
  \brief Node features, delta labels and z-score normalization.

  Labels are deltas against the pre-synthesis graph:

    delay_delta(v) = [arrival_post(v) - max_{u in pre fanin(v)} arrival_post(u)] - stage_pre(v)
    area_delta(v)  = area_post(cell) + area of inserted buffers rooted at v - area_pre(cell)

  The first bracket absorbs any buffers inserted between v and its original
  drivers, so adding the labels back onto pre stage delays reproduces every
  post-synthesis arrival exactly. Area deltas live on cell output pins only.
*/

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "graphsym/cell_library.hpp"
#include "graphsym/circuit_graph.hpp"
#include "graphsym/detail/text.hpp"
#include "graphsym/sta.hpp"

namespace graphsym {

inline constexpr std::size_t kNumLabels = 2;

namespace detail {

inline void check_report(const CircuitGraph& g, const TimingReport& r, const char* what) {
  if (r.arrival.size() != g.num_nodes() || r.slew.size() != g.num_nodes() || r.load.size() != g.num_nodes())
    fail(ErrorKind::Consistency, std::string(what) + ": timing report does not match the graph (" +
                                     std::to_string(r.arrival.size()) + " vs " + std::to_string(g.num_nodes()) +
                                     " nodes)");
}

}  // namespace detail

/// Feature vector of one node from a timing report of the same graph.
inline FeatureVector node_features(const CircuitGraph& g, const TimingReport& r, const CellLibrary& lib, NodeId v) {
  FeatureVector f;
  const auto& p = g.node(v);
  switch (p.pin) {
    case PinKind::InputPort:
      f.direction = 1.0;
      f.slew = r.slew[v];
      break;
    case PinKind::OutputPort:
      f.slew = r.slew[v];
      break;
    case PinKind::CellInput: {
      CellKind k = g.cell(p.owner).kind;
      f.direction = 1.0;
      f.slew = r.slew[v];
      f.input_cap = lib.spec(k).input_cap;
      f.category = static_cast<std::uint32_t>(k.index());
      break;
    }
    case PinKind::CellOutput: {
      CellKind k = g.cell(p.owner).kind;
      f.stage_delay = stage_delay(r, g, v);
      f.slew = r.slew[v];
      f.cell_area = lib.spec(k).area;
      f.driven_cap = r.load[v];
      f.fanout = static_cast<double>(g.fanout(v).size());
      f.category = static_cast<std::uint32_t>(k.index());
      break;
    }
  }
  return f;
}

/// Copy of `g` with every node's feature vector filled in.
inline CircuitGraph annotate_features(const CircuitGraph& g, const TimingReport& r, const CellLibrary& lib) {
  detail::check_report(g, r, "annotate_features");
  CircuitGraph out = g;
  out.features.resize(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) out.features[v] = node_features(g, r, lib, v);
  return out;
}

/// Original output pin whose net an inserted buffer ultimately hangs off.
inline NodeId buffer_root(const CircuitGraph& post, CellId buffer) {
  NodeId v = post.cell(buffer).inputs.at(0);
  for (;;) {
    const auto& in = post.fanin(v);
    if (in.size() != 1) fail(ErrorKind::Structural, "buffer input must have one driver");
    NodeId d = in[0];
    const auto& p = post.node(d);
    if (p.origin == Origin::Original) return d;
    if (p.pin != PinKind::CellOutput) fail(ErrorKind::Structural, "inserted node drives a buffer but is not a buffer output");
    v = post.cell(p.owner).inputs.at(0);
  }
}

/// Per pre-node labels, indexed by pre node id.
inline std::vector<LabelPair> build_labels(const CircuitGraph& pre, const CircuitGraph& post, const TimingReport& rpt_pre,
                                           const TimingReport& rpt_post, const CellLibrary& lib) {
  detail::check_report(pre, rpt_pre, "build_labels (pre)");
  detail::check_report(post, rpt_post, "build_labels (post)");
  map_counterparts(pre, post);  // validates the id correspondence

  std::vector<LabelPair> labels(pre.num_nodes());
  for (NodeId v = 0; v < pre.num_nodes(); ++v) {
    const auto& in = pre.fanin(v);
    double latest = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i)
      latest = i == 0 ? rpt_post.arrival[in[i]] : std::max(latest, rpt_post.arrival[in[i]]);
    double absorbed = rpt_post.arrival[v] - latest;
    labels[v].delay_delta = absorbed - stage_delay(rpt_pre, pre, v);
  }

  for (const auto& c : pre.cells())
    labels[c.output].area_delta = lib.spec(post.cell(c.id).kind).area - lib.spec(c.kind).area;
  for (const auto& c : post.cells()) {
    if (c.origin != Origin::Inserted) continue;
    NodeId root = buffer_root(post, c.id);
    if (pre.node(root).pin != PinKind::CellOutput)
      fail(ErrorKind::Consistency, "inserted buffer on an input-port net has no output pin to absorb its area");
    labels[root].area_delta += lib.spec(c.kind).area;
  }
  return labels;
}

/// Pre graph with features and labels attached, role Labeled.
inline CircuitGraph label_graph(const CircuitGraph& pre, const CircuitGraph& post, const CellLibrary& lib) {
  auto rpt_pre = analyze(pre, lib);
  auto rpt_post = analyze(post, lib);
  CircuitGraph out = annotate_features(pre, rpt_pre, lib);
  out.labels = build_labels(pre, post, rpt_pre, rpt_post, lib);
  out.role = GraphRole::Labeled;
  return out;
}

/*! \brief Z-score statistics for node features and labels.

  Pooled over every node of every training graph. A dimension whose
  standard deviation is zero gets std = 1 and is flagged, so it normalizes
  to a column of zeros.
*/
struct NormStats {
  static constexpr int kSchemaVersion = 1;

  std::vector<double> feature_mean, feature_std;
  std::vector<bool> feature_flagged;
  std::vector<double> label_mean, label_std;
  std::vector<bool> label_flagged;
  std::size_t num_graphs = 0;
  std::size_t num_nodes = 0;

  friend bool operator==(const NormStats&, const NormStats&) = default;

  std::vector<double> apply_features(const std::vector<double>& x) const { return apply(x, feature_mean, feature_std); }
  std::vector<double> invert_features(const std::vector<double>& z) const { return invert(z, feature_mean, feature_std); }
  std::vector<double> apply_labels(const std::vector<double>& y) const { return apply(y, label_mean, label_std); }
  std::vector<double> invert_labels(const std::vector<double>& z) const { return invert(z, label_mean, label_std); }

  nlohmann::json to_json() const {
    return {{"schema_version", kSchemaVersion},           {"num_graphs", num_graphs},     {"num_nodes", num_nodes},
            {"feature_mean", feature_mean},  {"feature_std", feature_std},   {"feature_flagged", feature_flagged},
            {"label_mean", label_mean},      {"label_std", label_std},       {"label_flagged", label_flagged}};
  }

  static NormStats from_json(const nlohmann::json& j) {
    if (j.value("schema_version", 0) != kSchemaVersion) fail(ErrorKind::Format, "unsupported normalization schema version");
    NormStats s;
    try {
      j.at("num_graphs").get_to(s.num_graphs);
      j.at("num_nodes").get_to(s.num_nodes);
      j.at("feature_mean").get_to(s.feature_mean);
      j.at("feature_std").get_to(s.feature_std);
      j.at("feature_flagged").get_to(s.feature_flagged);
      j.at("label_mean").get_to(s.label_mean);
      j.at("label_std").get_to(s.label_std);
      j.at("label_flagged").get_to(s.label_flagged);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, std::string("malformed normalization stats: ") + e.what());
    }
    if (s.feature_mean.size() != kFeatureWidth || s.feature_std.size() != kFeatureWidth ||
        s.label_mean.size() != kNumLabels || s.label_std.size() != kNumLabels)
      fail(ErrorKind::Format, "normalization stats have the wrong dimensions");
    for (double d : s.feature_std)
      if (!(d > 0.0)) fail(ErrorKind::Format, "normalization std must be positive");
    for (double d : s.label_std)
      if (!(d > 0.0)) fail(ErrorKind::Format, "normalization std must be positive");
    return s;
  }

  /// Hash of the canonical JSON text; stable across save/load.
  std::string fingerprint() const { return detail::hex64(detail::fnv1a(to_json().dump())); }

private:
  static std::vector<double> apply(const std::vector<double>& x, const std::vector<double>& m, const std::vector<double>& s) {
    if (x.size() != m.size()) fail(ErrorKind::Domain, "vector width does not match normalization stats");
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - m[i]) / s[i];
    return z;
  }
  static std::vector<double> invert(const std::vector<double>& z, const std::vector<double>& m, const std::vector<double>& s) {
    if (z.size() != m.size()) fail(ErrorKind::Domain, "vector width does not match normalization stats");
    std::vector<double> x(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) x[i] = z[i] * s[i] + m[i];
    return x;
  }
};

namespace detail {

inline void fit_columns(const std::vector<std::vector<double>>& rows, std::size_t width, std::vector<double>& mean,
                        std::vector<double>& stddev, std::vector<bool>& flagged) {
  mean.assign(width, 0.0);
  stddev.assign(width, 0.0);
  flagged.assign(width, false);
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t i = 0; i < width; ++i) mean[i] += r[i];
  for (auto& m : mean) m /= n;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < width; ++i) stddev[i] += (r[i] - mean[i]) * (r[i] - mean[i]);
  for (std::size_t i = 0; i < width; ++i) {
    stddev[i] = std::sqrt(stddev[i] / n);
    if (!(stddev[i] > 1e-12 * std::max(1.0, std::abs(mean[i])))) {
      stddev[i] = 1.0;
      flagged[i] = true;
    }
  }
}

inline std::vector<double> label_row(const LabelPair& l) { return {l.delay_delta, l.area_delta}; }

}  // namespace detail

/// Fits statistics over every node of the given labeled graphs.
inline NormStats fit_normalization(const std::vector<const CircuitGraph*>& training) {
  if (training.empty()) fail(ErrorKind::Domain, "cannot fit normalization on an empty split");
  std::vector<std::vector<double>> feats, labels;
  for (const CircuitGraph* g : training) {
    if (!g->has_features() || !g->has_labels())
      fail(ErrorKind::Domain, "normalization requires graphs with features and labels");
    for (NodeId v = 0; v < g->num_nodes(); ++v) {
      auto d = g->features[v].dense();
      feats.emplace_back(d.begin(), d.end());
      labels.push_back(detail::label_row(g->labels[v]));
    }
  }
  if (feats.empty()) fail(ErrorKind::Domain, "cannot fit normalization on graphs without nodes");
  NormStats s;
  detail::fit_columns(feats, kFeatureWidth, s.feature_mean, s.feature_std, s.feature_flagged);
  detail::fit_columns(labels, kNumLabels, s.label_mean, s.label_std, s.label_flagged);
  s.num_graphs = training.size();
  s.num_nodes = feats.size();
  return s;
}

inline NormStats fit_normalization(const std::vector<CircuitGraph>& training) {
  std::vector<const CircuitGraph*> ptrs;
  for (const auto& g : training) ptrs.push_back(&g);
  return fit_normalization(ptrs);
}

/// N x kFeatureWidth matrix of normalized node features.
inline Eigen::MatrixXd feature_matrix(const CircuitGraph& g, const NormStats& s) {
  if (!g.has_features()) fail(ErrorKind::Domain, "graph has no features");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(g.num_nodes()), static_cast<Eigen::Index>(kFeatureWidth));
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    auto d = g.features[v].dense();
    for (std::size_t i = 0; i < kFeatureWidth; ++i) x(v, static_cast<Eigen::Index>(i)) = (d[i] - s.feature_mean[i]) / s.feature_std[i];
  }
  return x;
}

/// N x 2 matrix of normalized labels (delay, area).
inline Eigen::MatrixXd label_matrix(const CircuitGraph& g, const NormStats& s) {
  if (!g.has_labels()) fail(ErrorKind::Domain, "graph has no labels");
  Eigen::MatrixXd y(static_cast<Eigen::Index>(g.num_nodes()), 2);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    y(v, 0) = (g.labels[v].delay_delta - s.label_mean[0]) / s.label_std[0];
    y(v, 1) = (g.labels[v].area_delta - s.label_mean[1]) / s.label_std[1];
  }
  return y;
}

/// Inverse of label_matrix.
inline std::vector<LabelPair> denormalize_labels(const Eigen::MatrixXd& z, const NormStats& s) {
  std::vector<LabelPair> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index v = 0; v < z.rows(); ++v) {
    out[static_cast<std::size_t>(v)].delay_delta = z(v, 0) * s.label_std[0] + s.label_mean[0];
    out[static_cast<std::size_t>(v)].area_delta = z(v, 1) * s.label_std[1] + s.label_mean[1];
  }
  return out;
}

}  // namespace graphsym
