#pragma once

/*!
  \file reconstruct.hpp
  \brief Design metrics from per-node predictions, and compositional sweeping.

  Reconstruction adds predicted deltas onto the pre-synthesis features:

    stage(v)   = max(0, stage_pre(v) + delay_delta(v))
    arrival(v) = max over pre fanin u of arrival(u) + stage(v)   (input ports at 0)
    delay      = max arrival over output ports
    area       = sum over cell output pins of cell_area + area_delta

  The sweep walks the k worst pre-synthesis paths, swapping nodes from the
  pre graph to their predicted counterparts until each path meets the target.
  Reported metrics always come from a full reconstruction over the final
  swap set, never from the running path bookkeeping.
*/

#include <algorithm>
#include <limits>
#include <vector>

#include "graphsym/circuit_graph.hpp"
#include "graphsym/sta.hpp"

namespace graphsym {

struct InferredGraph {
  CircuitGraph base;                 // pre-synthesis graph with features
  std::vector<LabelPair> predicted;  // denormalized, indexed by node id
};

struct Reconstruction {
  double delay = 0.0;
  double area = 0.0;
  std::vector<double> arrival;
};

namespace detail {

inline void check_inferred(const CircuitGraph& base, const std::vector<LabelPair>& predicted) {
  if (!base.has_features()) fail(ErrorKind::Domain, "reconstruction requires a graph with features");
  if (predicted.size() != base.num_nodes())
    fail(ErrorKind::Consistency, "predictions cover " + std::to_string(predicted.size()) + " of " +
                                     std::to_string(base.num_nodes()) + " nodes");
}

/// Effective stage of v; unswapped nodes keep their pre stage.
inline double effective_stage(const CircuitGraph& base, const std::vector<LabelPair>& predicted,
                              const std::vector<char>& swapped, NodeId v) {
  double pre = base.features[v].stage_delay;
  return swapped[v] ? std::max(0.0, pre + predicted[v].delay_delta) : pre;
}

inline Reconstruction reconstruct_masked(const CircuitGraph& base, const std::vector<LabelPair>& predicted,
                                         const std::vector<char>& swapped) {
  check_inferred(base, predicted);
  Reconstruction r;
  r.arrival.assign(base.num_nodes(), 0.0);
  for (NodeId v : topo_order(base)) {
    const auto& in = base.fanin(v);
    if (in.empty()) continue;
    double latest = r.arrival[in[0]];
    for (NodeId u : in) latest = std::max(latest, r.arrival[u]);
    r.arrival[v] = latest + effective_stage(base, predicted, swapped, v);
  }
  bool first = true;
  for (NodeId po : base.output_ports()) {
    r.delay = first ? r.arrival[po] : std::max(r.delay, r.arrival[po]);
    first = false;
  }
  for (const auto& c : base.cells()) {
    NodeId v = c.output;
    r.area += base.features[v].cell_area + (swapped[v] ? predicted[v].area_delta : 0.0);
  }
  return r;
}

}  // namespace detail

inline Reconstruction reconstruct_metrics(const CircuitGraph& base, const std::vector<LabelPair>& predicted) {
  return detail::reconstruct_masked(base, predicted, std::vector<char>(base.num_nodes(), 1));
}

inline Reconstruction reconstruct_metrics(const InferredGraph& ig) { return reconstruct_metrics(ig.base, ig.predicted); }

/*! \brief Timing report rebuilt from a graph's stage-delay features.

  Equivalent to analyze() on the graph the features came from, for the
  fields path enumeration reads (arrival and cell delay).
*/
inline TimingReport report_from_features(const CircuitGraph& g) {
  auto rec = detail::reconstruct_masked(g, std::vector<LabelPair>(g.num_nodes()), std::vector<char>(g.num_nodes(), 0));
  TimingReport r;
  r.arrival = std::move(rec.arrival);
  r.slew.assign(g.num_nodes(), 0.0);
  r.load.assign(g.num_nodes(), 0.0);
  r.cell_delay.assign(g.num_nodes(), 0.0);
  for (const auto& c : g.cells()) r.cell_delay[c.output] = g.features[c.output].stage_delay;
  r.worst_delay = rec.delay;
  r.total_area = rec.area;
  return r;
}

struct SweepResult {
  double target = 0.0;
  double delay = 0.0;
  double area = 0.0;
  std::vector<NodeId> swapped;  // ascending
  std::size_t paths_visited = 0;
};

inline constexpr std::size_t kDefaultSweepPaths = 1024;

/// Merged metrics for one delay target.
inline SweepResult sweep(const InferredGraph& ig, double target, std::size_t k_paths = kDefaultSweepPaths) {
  if (!(target > 0.0)) fail(ErrorKind::Domain, "sweep target must be positive");
  const CircuitGraph& g = ig.base;
  detail::check_inferred(g, ig.predicted);
  auto paths = enumerate_paths(g, report_from_features(g), k_paths);

  // Path sums re-add stage deltas, so a path sitting exactly on the target can
  // overshoot it by a few ulps.
  const double met = 1e-12 * std::max(1.0, target);
  std::vector<char> swapped(g.num_nodes(), 0);
  SweepResult res;
  res.target = target;
  for (const auto& path : paths) {
    double diff = -target;
    for (NodeId v : path.nodes) diff += detail::effective_stage(g, ig.predicted, swapped, v);
    // Swaps on earlier paths can slow a later one down, so a met path is
    // skipped rather than ending the walk.
    if (diff <= met) continue;
    ++res.paths_visited;

    for (std::size_t i = 0; i < path.nodes.size() && diff > met; ++i) {
      NodeId out = path.nodes[i];
      const auto& p = g.node(out);
      if (p.pin != PinKind::CellOutput && p.pin != PinKind::OutputPort) continue;
      // The cell's input pins swap with it; only the one on this path counts towards Diff.
      std::vector<NodeId> group{out};
      if (p.pin == PinKind::CellOutput) {
        const auto& ins = g.cell(p.owner).inputs;
        group.insert(group.end(), ins.begin(), ins.end());
      }
      for (NodeId v : group) {
        if (swapped[v]) continue;
        bool on_path = v == out || (i > 0 && path.nodes[i - 1] == v);
        double before = detail::effective_stage(g, ig.predicted, swapped, v);
        swapped[v] = 1;
        if (on_path) diff -= before - detail::effective_stage(g, ig.predicted, swapped, v);
      }
    }
  }

  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (swapped[v]) res.swapped.push_back(v);
  auto rec = detail::reconstruct_masked(g, ig.predicted, swapped);
  res.delay = rec.delay;
  res.area = rec.area;
  return res;
}

/// One independent sweep per target, in the given (ascending) order.
inline std::vector<SweepResult> sweep_curve(const InferredGraph& ig, const std::vector<double>& targets,
                                            std::size_t k_paths = kDefaultSweepPaths) {
  if (!std::is_sorted(targets.begin(), targets.end())) fail(ErrorKind::Domain, "sweep targets must be ascending");
  std::vector<SweepResult> out;
  out.reserve(targets.size());
  for (double t : targets) out.push_back(sweep(ig, t, k_paths));
  return out;
}

}  // namespace graphsym
