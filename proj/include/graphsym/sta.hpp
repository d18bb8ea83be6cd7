#pragma once

/*!
  \file sta.hpp
  \brief Graph-based static timing analysis over a CircuitGraph.

  Timing model:
    - input ports: arrival 0, slew = default_input_slew (ideal drivers)
    - load(driver) = sum of sink input caps + wire_cap_per_fanout * fanout,
      plus default_output_load per output-port sink
    - net edges carry zero delay; sinks inherit the driver's arrival and slew
    - a cell output's arrival is the latest input arrival plus the cell's arc
      delay, evaluated at the worst (largest) input slew and the output load
    - output slew = arc_slew(load)

  Evaluating every arc of a cell at the worst input slew makes all arcs of a
  cell share one delay, so the latest-arriving input is also the critical
  arc and per-node stage delays telescope exactly along the worst path.
*/

#include <algorithm>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "graphsym/cell_library.hpp"
#include "graphsym/circuit_graph.hpp"
#include "graphsym/detail/text.hpp"

namespace graphsym {

struct TimingReport {
  std::vector<double> arrival;     // per node
  std::vector<double> slew;        // per node
  std::vector<double> load;        // per driver node (cell outputs, input ports); 0 elsewhere
  std::vector<double> cell_delay;  // per cell output node: the shared arc delay; 0 elsewhere
  double worst_delay = 0.0;
  std::vector<NodeId> worst_path;  // input port ... output port
  double total_area = 0.0;
  NodeId critical_output = kNoNode;
};

inline double driver_load(const CircuitGraph& g, const CellLibrary& lib, NodeId driver) {
  double load = lib.wire_cap_per_fanout * static_cast<double>(g.fanout(driver).size());
  for (NodeId s : g.fanout(driver)) {
    const auto& p = g.node(s);
    if (p.pin == PinKind::OutputPort)
      load += lib.default_output_load;
    else
      load += lib.spec(g.cell(p.owner).kind).input_cap;
  }
  return load;
}

inline double total_area(const CircuitGraph& g, const CellLibrary& lib) {
  double a = 0.0;
  for (const auto& c : g.cells()) a += lib.spec(c.kind).area;
  return a;
}

/// Full arrival/slew propagation. Pure; deterministic for a given graph.
inline TimingReport analyze(const CircuitGraph& g, const CellLibrary& lib) {
  const std::size_t n = g.num_nodes();
  TimingReport r;
  r.arrival.assign(n, 0.0);
  r.slew.assign(n, 0.0);
  r.load.assign(n, 0.0);
  r.cell_delay.assign(n, 0.0);

  for (NodeId v : topo_order(g)) {
    const auto& p = g.node(v);
    switch (p.pin) {
      case PinKind::InputPort:
        r.slew[v] = lib.default_input_slew;
        r.load[v] = driver_load(g, lib, v);
        break;
      case PinKind::CellInput:
      case PinKind::OutputPort:
        if (g.fanin(v).size() != 1)
          fail(ErrorKind::Structural, "sink pin " + std::to_string(v) + " must have exactly one driver");
        r.arrival[v] = r.arrival[g.fanin(v)[0]];
        r.slew[v] = r.slew[g.fanin(v)[0]];
        break;
      case PinKind::CellOutput: {
        const auto& spec = lib.spec(g.cell(p.owner).kind);
        double latest = 0.0, worst_slew = 0.0;
        bool first = true;
        for (NodeId u : g.fanin(v)) {
          latest = first ? r.arrival[u] : std::max(latest, r.arrival[u]);
          worst_slew = first ? r.slew[u] : std::max(worst_slew, r.slew[u]);
          first = false;
        }
        r.load[v] = driver_load(g, lib, v);
        r.cell_delay[v] = arc_delay(spec, worst_slew, r.load[v]);
        r.arrival[v] = latest + r.cell_delay[v];
        r.slew[v] = arc_slew(spec, r.load[v]);
        break;
      }
    }
  }

  for (NodeId po : g.output_ports()) {
    if (r.critical_output == kNoNode || r.arrival[po] > r.worst_delay) {
      r.worst_delay = r.arrival[po];
      r.critical_output = po;
    }
  }
  if (r.critical_output != kNoNode) {
    NodeId v = r.critical_output;
    r.worst_path.push_back(v);
    while (!g.fanin(v).empty()) {
      NodeId best = kNoNode;
      for (NodeId u : g.fanin(v))
        if (best == kNoNode || r.arrival[u] > r.arrival[best] || (r.arrival[u] == r.arrival[best] && u < best))
          best = u;
      v = best;
      r.worst_path.push_back(v);
    }
    std::reverse(r.worst_path.begin(), r.worst_path.end());
  }
  r.total_area = total_area(g, lib);
  return r;
}

/// Delay of edge u -> v: the cell's arc delay on internal arcs, zero on net edges.
inline double edge_delay(const CircuitGraph& g, const TimingReport& r, NodeId /*u*/, NodeId v) {
  return g.node(v).pin == PinKind::CellOutput ? r.cell_delay[v] : 0.0;
}

/// arrival(v) minus the latest predecessor arrival; 0 for nodes without fanin.
inline double stage_delay(const TimingReport& r, const CircuitGraph& g, NodeId v) {
  const auto& in = g.fanin(v);
  if (in.empty()) return 0.0;
  double latest = r.arrival[in[0]];
  for (NodeId u : in) latest = std::max(latest, r.arrival[u]);
  return r.arrival[v] - latest;
}

struct TimingPath {
  std::vector<NodeId> nodes;  // input port ... output port
  double delay = 0.0;
};

/*! \brief The k worst port-to-port paths, worst first.

  Best-first search backwards from the output ports, bounded by the forward
  arrival times, so paths pop in exact delay order. Equal-delay paths are
  ordered by their node sequence read from the endpoint backwards, which is
  the order the analyze() back-trace uses; the first result is therefore
  analyze()'s worst_path.
*/
inline std::vector<TimingPath> enumerate_paths(const CircuitGraph& g, const TimingReport& r, std::size_t k) {
  if (k == 0) fail(ErrorKind::Domain, "enumerate_paths requires k >= 1");
  struct Partial {
    double bound;
    double suffix;
    std::vector<NodeId> rev;  // endpoint first
  };
  auto lower = [](const Partial& a, const Partial& b) {
    if (a.bound != b.bound) return a.bound < b.bound;
    return a.rev > b.rev;
  };
  std::priority_queue<Partial, std::vector<Partial>, decltype(lower)> open(lower);
  for (NodeId po : g.output_ports()) open.push({r.arrival[po], 0.0, {po}});

  std::vector<TimingPath> out;
  while (!open.empty() && out.size() < k) {
    Partial cur = open.top();
    open.pop();
    NodeId v = cur.rev.back();
    if (g.fanin(v).empty()) {
      TimingPath p;
      p.nodes.assign(cur.rev.rbegin(), cur.rev.rend());
      p.delay = cur.suffix;
      out.push_back(std::move(p));
      continue;
    }
    for (NodeId u : g.fanin(v)) {
      Partial next;
      next.suffix = cur.suffix + edge_delay(g, r, u, v);
      next.bound = r.arrival[u] + next.suffix;
      next.rev = cur.rev;
      next.rev.push_back(u);
      open.push(std::move(next));
    }
  }
  return out;
}

/// Number of distinct port-to-port paths (saturating), for sizing exhaustive enumerations.
inline std::uint64_t count_paths(const CircuitGraph& g) {
  std::vector<std::uint64_t> from_source(g.num_nodes(), 0);
  std::uint64_t total = 0;
  constexpr std::uint64_t kCap = std::uint64_t{1} << 62;
  for (NodeId v : topo_order(g)) {
    if (g.fanin(v).empty()) from_source[v] = 1;
    for (NodeId u : g.fanin(v)) from_source[v] = std::min(kCap, from_source[v] + from_source[u]);
    if (g.node(v).pin == PinKind::OutputPort) total = std::min(kCap, total + from_source[v]);
  }
  return total;
}

/// Structured text export used by the `report` command.
inline std::string format_report(const CircuitGraph& g, const TimingReport& r) {
  using detail::format_double;
  std::ostringstream os;
  os << "worst_delay " << format_double(r.worst_delay) << "\n";
  os << "total_area " << format_double(r.total_area) << "\n";
  os << "critical_output " << r.critical_output << "\n";
  os << "worst_path";
  for (NodeId v : r.worst_path) os << ' ' << v;
  os << "\n";
  os << "# node arrival slew load\n";
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    os << "node " << v << ' ' << format_double(r.arrival[v]) << ' ' << format_double(r.slew[v]) << ' '
       << format_double(r.load[v]) << "\n";
  return os.str();
}

}  // namespace graphsym
