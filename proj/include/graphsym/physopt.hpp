#pragma once

/*!
  \file physopt.hpp
  \brief Reference timing-driven physical synthesis: gate sizing and buffer insertion.

  Greedy and fully deterministic. Each pass re-runs STA, collects the moves
  available on the current worst path, evaluates each with a full STA, and
  commits the single best one:

    - upsize: a cell on the worst path moves to the next drive strength
    - buffer: a net on the worst path with fanout > max_fanout keeps its
      critical sink and moves every other sink behind a new buffer

  Moves are ranked by worst-delay reduction, then by total negative slack
  reduction (which lets the loop make progress when several endpoints tie
  for worst), then upsize before buffer, then smallest node id. A move is
  admissible only if it never increases the worst delay and strictly
  improves one of the two measures. The loop stops when the target is met,
  no admissible move exists, or max_passes is reached.
*/

#include <cstdint>
#include <string>
#include <vector>

#include "graphsym/cell_library.hpp"
#include "graphsym/circuit_graph.hpp"
#include "graphsym/sta.hpp"

namespace graphsym {

struct SynthConfig {
  double target_delay = 0.0;
  std::size_t max_fanout = 2;
  std::size_t max_passes = 2000;
  CellKind buffer_kind{CellFunction::BUF, Drive::X1};
};

enum class StopReason : std::uint8_t { TargetMet, NoImprovingMove, MaxPasses };

inline const char* to_string(StopReason s) {
  switch (s) {
    case StopReason::TargetMet: return "target_met";
    case StopReason::NoImprovingMove: return "no_improving_move";
    case StopReason::MaxPasses: return "max_passes";
  }
  return "?";
}

struct SynthResult {
  CircuitGraph graph;
  double initial_delay = 0.0;
  double final_delay = 0.0;
  double initial_area = 0.0;
  double final_area = 0.0;
  std::size_t passes = 0;
  std::size_t upsizes = 0;
  std::size_t buffers = 0;
  StopReason reason = StopReason::TargetMet;
  bool met() const { return reason == StopReason::TargetMet; }
};

inline constexpr double kDefaultAggressiveAlpha = 0.6;

/// alpha times the pre-synthesis worst delay.
inline double aggressive_target(const CircuitGraph& g, const CellLibrary& lib, double alpha = kDefaultAggressiveAlpha) {
  if (!(alpha > 0.0)) fail(ErrorKind::Domain, "aggressive_target requires alpha > 0");
  return alpha * analyze(g, lib).worst_delay;
}

namespace detail {

inline double total_negative_slack(const CircuitGraph& g, const TimingReport& r, double target) {
  double tns = 0.0;
  for (NodeId po : g.output_ports()) tns += std::max(0.0, r.arrival[po] - target);
  return tns;
}

struct Move {
  enum class Kind : std::uint8_t { Upsize, Buffer } kind;
  NodeId node;     // upsized cell's output pin, or the buffered net's driver
  NodeId sink;     // critical sink kept on the driver (buffer moves)
  double gain_worst;
  double gain_tns;

  bool better_than(const Move& o) const {
    if (gain_worst != o.gain_worst) return gain_worst > o.gain_worst;
    if (gain_tns != o.gain_tns) return gain_tns > o.gain_tns;
    if (kind != o.kind) return kind == Kind::Upsize;
    return node < o.node;
  }
};

inline Drive next_drive(Drive d) { return static_cast<Drive>(static_cast<int>(d) + 1); }

inline void apply_buffer(CircuitGraph& g, NodeId driver, NodeId keep, CellKind buffer_kind) {
  std::vector<NodeId> moved;
  for (NodeId s : g.fanout(driver))
    if (s != keep) moved.push_back(s);
  g.insert_buffer(driver, moved, buffer_kind);
}

}  // namespace detail

inline SynthResult synthesize(const CircuitGraph& pre, const CellLibrary& lib, const SynthConfig& cfg) {
  if (!(cfg.target_delay > 0.0)) fail(ErrorKind::Domain, "synthesis target must be positive");
  if (cfg.max_fanout < 2) fail(ErrorKind::Domain, "max_fanout must be >= 2");
  if (num_inputs(cfg.buffer_kind.function) != 1 || cfg.buffer_kind.function != CellFunction::BUF)
    fail(ErrorKind::Domain, "buffer_kind must be a BUF cell");

  SynthResult res;
  res.graph = pre;
  CircuitGraph& g = res.graph;
  TimingReport r = analyze(g, lib);
  res.initial_delay = r.worst_delay;
  res.initial_area = r.total_area;
  const double target = cfg.target_delay;

  res.reason = StopReason::MaxPasses;
  for (;;) {
    if (r.worst_delay <= target) {
      res.reason = StopReason::TargetMet;
      break;
    }
    if (res.passes >= cfg.max_passes) break;

    const double worst = r.worst_delay;
    const double tns = detail::total_negative_slack(g, r, target);
    bool have = false;
    detail::Move best{};
    auto consider = [&](detail::Move m, const TimingReport& after) {
      if (after.worst_delay > worst) return;
      m.gain_worst = worst - after.worst_delay;
      m.gain_tns = tns - detail::total_negative_slack(g, after, target);
      if (!(m.gain_worst > 0.0 || m.gain_tns > 0.0)) return;
      if (!have || m.better_than(best)) {
        best = m;
        have = true;
      }
    };

    const auto& path = r.worst_path;
    for (NodeId v : path) {
      const auto& p = g.node(v);
      if (p.pin != PinKind::CellOutput) continue;
      CellKind kind = g.cell(p.owner).kind;
      if (kind.drive == Drive::X4) continue;
      g.set_cell_kind(p.owner, {kind.function, detail::next_drive(kind.drive)});
      auto after = analyze(g, lib);
      g.set_cell_kind(p.owner, kind);
      consider({detail::Move::Kind::Upsize, v, kNoNode, 0, 0}, after);
    }
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      NodeId u = path[i];
      // Input ports are ideal drivers; isolating a sink from them cannot help.
      if (g.node(u).pin != PinKind::CellOutput || g.fanout(u).size() <= cfg.max_fanout) continue;
      CircuitGraph trial = g;
      detail::apply_buffer(trial, u, path[i + 1], cfg.buffer_kind);
      auto after = analyze(trial, lib);
      // Scoring reads only port arrivals, which the trial graph shares with g.
      consider({detail::Move::Kind::Buffer, u, path[i + 1], 0, 0}, after);
    }

    if (!have) {
      res.reason = StopReason::NoImprovingMove;
      break;
    }
    if (best.kind == detail::Move::Kind::Upsize) {
      CellId c = g.node(best.node).owner;
      g.set_cell_kind(c, {g.cell(c).kind.function, detail::next_drive(g.cell(c).kind.drive)});
      ++res.upsizes;
    } else {
      detail::apply_buffer(g, best.node, best.sink, cfg.buffer_kind);
      ++res.buffers;
    }
    ++res.passes;
    r = analyze(g, lib);
  }

  res.final_delay = r.worst_delay;
  res.final_area = r.total_area;
  g.role = GraphRole::Post;
  g.meta["synthesis"] = {
      {"target", target},           {"met", res.met()},
      {"stop_reason", to_string(res.reason)},
      {"initial_delay", res.initial_delay}, {"final_delay", res.final_delay},
      {"initial_area", res.initial_area},   {"final_area", res.final_area},
      {"passes", res.passes},       {"upsizes", res.upsizes},
      {"buffers", res.buffers},     {"max_fanout", cfg.max_fanout},
      {"buffer_kind", to_string(cfg.buffer_kind)},
  };
  return res;
}

}  // namespace graphsym
