#pragma once

/*!
  \file circuit_graph.hpp
  \brief Pin-level DAG of a netlist.

  Every cell pin and every port is a node. Edges are either net edges
  (driver pin -> sink pin) or internal arcs (cell input pin -> the same
  cell's output pin). Node ids are dense (node id == position) and stable:
  physical synthesis only appends Inserted nodes, so a pre-synthesis id
  names the same pin in the post-synthesis graph.
*/

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graphsym/cell_library.hpp"
#include "graphsym/error.hpp"
#include "graphsym/netlist.hpp"

namespace graphsym {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();
inline constexpr NetId kNoNet = std::numeric_limits<NetId>::max();

enum class PinKind : std::uint8_t { CellInput, CellOutput, InputPort, OutputPort };
enum class Direction : std::uint8_t { Input, Output };
enum class Origin : std::uint8_t { Original, Inserted };
enum class GraphRole : std::uint8_t { Pre, Post, Labeled, Inferred };
enum class EdgeKind : std::uint8_t { Net, InternalArc };

inline const char* to_string(GraphRole r) {
  switch (r) {
    case GraphRole::Pre: return "pre";
    case GraphRole::Post: return "post";
    case GraphRole::Labeled: return "labeled";
    case GraphRole::Inferred: return "inferred";
  }
  return "?";
}

inline GraphRole parse_role(std::string_view s) {
  if (s == "pre") return GraphRole::Pre;
  if (s == "post") return GraphRole::Post;
  if (s == "labeled") return GraphRole::Labeled;
  if (s == "inferred") return GraphRole::Inferred;
  fail(ErrorKind::Format, "unknown graph role '" + std::string(s) + "'");
}

struct PinNode {
  NodeId id = 0;
  PinKind pin = PinKind::CellInput;
  std::uint32_t owner = 0;  // cell id, or port position for ports
  std::uint8_t pin_index = 0;
  Origin origin = Origin::Original;

  /// Ports take the direction of the design port: a primary input is an Input.
  Direction direction() const {
    return (pin == PinKind::CellInput || pin == PinKind::InputPort) ? Direction::Input : Direction::Output;
  }
  bool is_driver() const { return pin == PinKind::CellOutput || pin == PinKind::InputPort; }
  bool is_port() const { return pin == PinKind::InputPort || pin == PinKind::OutputPort; }

  friend bool operator==(const PinNode&, const PinNode&) = default;
};

struct GraphCell {
  CellId id = 0;
  CellKind kind;
  Origin origin = Origin::Original;
  std::vector<NodeId> inputs;
  NodeId output = kNoNode;

  friend bool operator==(const GraphCell&, const GraphCell&) = default;
};

struct Edge {
  NodeId from = 0;
  NodeId to = 0;
  EdgeKind kind = EdgeKind::Net;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Index of the port category in the cell one-hot encoding.
inline constexpr std::size_t kPortCategory = kNumCellKinds;
inline constexpr std::size_t kNumCategories = kNumCellKinds + 1;
inline constexpr std::size_t kNumNumericFeatures = 7;
inline constexpr std::size_t kFeatureWidth = kNumNumericFeatures + kNumCategories;

struct FeatureVector {
  double direction = 0.0;  // 1 = Input
  double stage_delay = 0.0;
  double slew = 0.0;
  double input_cap = 0.0;
  double cell_area = 0.0;
  double driven_cap = 0.0;
  double fanout = 0.0;
  std::uint32_t category = kPortCategory;  // hot index of the cell one-hot

  std::array<double, kFeatureWidth> dense() const {
    std::array<double, kFeatureWidth> v{};
    v[0] = direction;
    v[1] = stage_delay;
    v[2] = slew;
    v[3] = input_cap;
    v[4] = cell_area;
    v[5] = driven_cap;
    v[6] = fanout;
    v[kNumNumericFeatures + category] = 1.0;
    return v;
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

struct LabelPair {
  double delay_delta = 0.0;
  double area_delta = 0.0;
  friend bool operator==(const LabelPair&, const LabelPair&) = default;
};

class CircuitGraph {
public:
  GraphRole role = GraphRole::Pre;
  std::string library_version;
  std::string library_fingerprint;
  /// Free-form header fields (sample seed, split, synthesis outcome, ...).
  nlohmann::json meta = nlohmann::json::object();

  std::size_t num_nodes() const { return nodes_.size(); }
  const std::vector<PinNode>& nodes() const { return nodes_; }
  const PinNode& node(NodeId v) const { return nodes_.at(v); }
  const std::vector<GraphCell>& cells() const { return cells_; }
  const GraphCell& cell(CellId c) const { return cells_.at(c); }
  const std::vector<NodeId>& input_ports() const { return input_ports_; }
  const std::vector<NodeId>& output_ports() const { return output_ports_; }
  const std::vector<NodeId>& fanin(NodeId v) const { return fanin_[v]; }
  const std::vector<NodeId>& fanout(NodeId v) const { return fanout_[v]; }
  NetId net_of(NodeId driver) const { return net_of_driver_[driver]; }

  /// Cell kind of a cell pin; nullopt for ports.
  std::optional<CellKind> kind_of(NodeId v) const {
    const auto& n = nodes_[v];
    if (n.is_port()) return std::nullopt;
    return cells_[n.owner].kind;
  }

  std::size_t num_edges() const {
    std::size_t e = 0;
    for (const auto& f : fanout_) e += f.size();
    return e;
  }

  /// All edges, grouped by source node in id order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (NodeId u = 0; u < nodes_.size(); ++u)
      for (NodeId v : fanout_[u])
        out.push_back({u, v, nodes_[u].pin == PinKind::CellInput ? EdgeKind::InternalArc : EdgeKind::Net});
    return out;
  }

  bool has_features() const { return !features.empty(); }
  bool has_labels() const { return !labels.empty(); }

  /// Indexed by node id when present (empty otherwise).
  std::vector<FeatureVector> features;
  std::vector<LabelPair> labels;

  // Construction and editing. Used by the converters and the synthesis oracle.

  NodeId add_node(PinKind pin, std::uint32_t owner, std::uint8_t pin_index, Origin origin) {
    NodeId id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back({id, pin, owner, pin_index, origin});
    fanin_.emplace_back();
    fanout_.emplace_back();
    net_of_driver_.push_back(kNoNet);
    if (pin == PinKind::InputPort) input_ports_.push_back(id);
    if (pin == PinKind::OutputPort) output_ports_.push_back(id);
    return id;
  }

  CellId add_cell(CellKind kind, Origin origin) {
    CellId id = static_cast<CellId>(cells_.size());
    GraphCell c;
    c.id = id;
    c.kind = kind;
    c.origin = origin;
    for (int i = 0; i < num_inputs(kind.function); ++i)
      c.inputs.push_back(add_node(PinKind::CellInput, id, static_cast<std::uint8_t>(i), origin));
    c.output = add_node(PinKind::CellOutput, id, PinRef::kOutputPin, origin);
    for (NodeId in : c.inputs) add_edge(in, c.output);
    cells_.push_back(std::move(c));
    return id;
  }

  /// Registers a cell over pins that already exist; no arcs are added. Used by graph readers.
  CellId attach_cell(CellKind kind, Origin origin, std::vector<NodeId> inputs, NodeId output) {
    CellId id = static_cast<CellId>(cells_.size());
    if (static_cast<int>(inputs.size()) != num_inputs(kind.function))
      fail(ErrorKind::Structural, "cell " + std::to_string(id) + " has the wrong number of input pins");
    auto owned = [&](NodeId v, PinKind pin) {
      return v < nodes_.size() && nodes_[v].pin == pin && nodes_[v].owner == id && nodes_[v].origin == origin;
    };
    for (NodeId v : inputs)
      if (!owned(v, PinKind::CellInput)) fail(ErrorKind::Structural, "bad input pin for cell " + std::to_string(id));
    if (!owned(output, PinKind::CellOutput)) fail(ErrorKind::Structural, "bad output pin for cell " + std::to_string(id));
    cells_.push_back({id, kind, origin, std::move(inputs), output});
    return id;
  }

  void add_edge(NodeId from, NodeId to) {
    fanout_[from].push_back(to);
    fanin_[to].push_back(from);
  }

  void set_net(NodeId driver, NetId net) { net_of_driver_[driver] = net; }

  NetId max_net_id() const {
    NetId m = 0;
    bool any = false;
    for (auto n : net_of_driver_)
      if (n != kNoNet) {
        m = std::max(m, n);
        any = true;
      }
    return any ? m : kNoNet;
  }

  /// In-place resize; the function must not change.
  void set_cell_kind(CellId c, CellKind kind) {
    if (cells_.at(c).kind.function != kind.function)
      fail(ErrorKind::Structural, "resizing may not change a cell's function");
    cells_[c].kind = kind;
  }

  /*! \brief Inserts a buffer between `driver` and the sinks in `moved`.

    The buffer's input joins the driver's net; `moved` sinks are re-wired to
    the buffer output, keeping their relative order. Returns the new cell id.
  */
  CellId insert_buffer(NodeId driver, const std::vector<NodeId>& moved, CellKind kind) {
    if (!nodes_.at(driver).is_driver()) fail(ErrorKind::Structural, "buffer driver must be a driver pin");
    if (num_inputs(kind.function) != 1) fail(ErrorKind::Structural, "buffer kind must have one input");
    for (NodeId s : moved)
      if (std::find(fanout_[driver].begin(), fanout_[driver].end(), s) == fanout_[driver].end())
        fail(ErrorKind::Structural, "buffer sink is not on the driver's net");
    NetId net = max_net_id() == kNoNet ? 0 : max_net_id() + 1;
    CellId c = add_cell(kind, Origin::Inserted);
    NodeId a = cells_[c].inputs[0];
    NodeId y = cells_[c].output;
    set_net(y, net);
    auto& fo = fanout_[driver];
    fo.erase(std::remove_if(fo.begin(), fo.end(),
                            [&](NodeId s) { return std::find(moved.begin(), moved.end(), s) != moved.end(); }),
             fo.end());
    fo.push_back(a);
    fanin_[a].push_back(driver);
    for (NodeId s : moved) {
      std::replace(fanin_[s].begin(), fanin_[s].end(), driver, y);
      fanout_[y].push_back(s);
    }
    return c;
  }

  friend bool operator==(const CircuitGraph& a, const CircuitGraph& b) {
    return a.role == b.role && a.library_version == b.library_version &&
           a.library_fingerprint == b.library_fingerprint && a.meta == b.meta && a.nodes_ == b.nodes_ &&
           a.cells_ == b.cells_ && a.fanin_ == b.fanin_ && a.fanout_ == b.fanout_ &&
           a.net_of_driver_ == b.net_of_driver_ && a.features == b.features && a.labels == b.labels;
  }

  /// Same pins, cells, kinds and connectivity; ignores header, features and labels.
  bool same_structure(const CircuitGraph& o) const {
    return nodes_ == o.nodes_ && cells_ == o.cells_ && fanout_ == o.fanout_ && fanin_ == o.fanin_;
  }

private:
  std::vector<PinNode> nodes_;
  std::vector<GraphCell> cells_;
  std::vector<NodeId> input_ports_;
  std::vector<NodeId> output_ports_;
  std::vector<std::vector<NodeId>> fanin_;
  std::vector<std::vector<NodeId>> fanout_;
  std::vector<NetId> net_of_driver_;
};

/*! \brief Deterministic topological order (Kahn, ties by ascending node id).

  Throws a structural error naming one edge of a cycle when the graph is
  not a DAG.
*/
inline std::vector<NodeId> topo_order(const CircuitGraph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<std::size_t> indeg(n);
  for (NodeId v = 0; v < n; ++v) indeg[v] = g.fanin(v).size();
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (NodeId v = 0; v < n; ++v)
    if (indeg[v] == 0) ready.push(v);
  std::vector<NodeId> order;
  order.reserve(n);
  while (!ready.empty()) {
    NodeId u = ready.top();
    ready.pop();
    order.push_back(u);
    for (NodeId w : g.fanout(u))
      if (--indeg[w] == 0) ready.push(w);
  }
  if (order.size() == n) return order;

  // DFS over the unresolved remainder; the first edge into a node on the stack closes a cycle.
  std::vector<std::uint8_t> color(n, 0);  // 0 new, 1 on stack, 2 done
  for (NodeId root = 0; root < n; ++root) {
    if (indeg[root] == 0 || color[root] != 0) continue;
    std::vector<std::pair<NodeId, std::size_t>> stack{{root, 0}};
    color[root] = 1;
    while (!stack.empty()) {
      auto& [u, next] = stack.back();
      if (next < g.fanout(u).size()) {
        NodeId w = g.fanout(u)[next++];
        if (indeg[w] == 0) continue;
        if (color[w] == 1)
          fail(ErrorKind::Structural,
               "cycle detected at back-edge " + std::to_string(u) + " -> " + std::to_string(w));
        if (color[w] == 0) {
          color[w] = 1;
          stack.push_back({w, 0});
        }
      } else {
        color[u] = 2;
        stack.pop_back();
      }
    }
  }
  fail(ErrorKind::Structural, "cycle detected");
}

/*! \brief Converts a validated netlist into its pin graph.

  Node numbering: input ports, then each cell's input pins followed by its
  output pin (cell order), then output ports.
*/
inline CircuitGraph netlist_to_graph(const Netlist& n) {
  validate(n);
  auto ix = detail::index_netlist(n);
  CircuitGraph g;
  for (std::size_t i = 0; i < n.primary_inputs.size(); ++i)
    g.add_node(PinKind::InputPort, static_cast<std::uint32_t>(i), PinRef::kOutputPin, Origin::Original);
  for (const auto& c : n.cells) g.add_cell(c.kind, Origin::Original);
  for (std::size_t i = 0; i < n.primary_outputs.size(); ++i)
    g.add_node(PinKind::OutputPort, static_cast<std::uint32_t>(i), 0, Origin::Original);

  auto node_of = [&](const PinRef& p) -> NodeId {
    switch (p.owner) {
      case PinRef::Owner::InputPort: return g.input_ports()[p.index];
      case PinRef::Owner::OutputPort: return g.output_ports()[p.index];
      case PinRef::Owner::Cell:
        return p.pin == PinRef::kOutputPin ? g.cell(p.index).output : g.cell(p.index).inputs[p.pin];
    }
    return kNoNode;
  };
  for (const auto& net : n.nets) {
    NodeId d = node_of(net.driver);
    g.set_net(d, net.id);
    for (const auto& s : net.sinks) g.add_edge(d, node_of(s));
  }
  (void)ix;
  (void)topo_order(g);
  return g;
}

/// Inverse of netlist_to_graph. Nets come out in ascending net-id order.
inline Netlist graph_to_netlist(const CircuitGraph& g) {
  Netlist n;
  for (const auto& c : g.cells()) n.cells.push_back({c.id, c.kind});
  auto ref_of = [&](NodeId v) -> PinRef {
    const auto& p = g.node(v);
    switch (p.pin) {
      case PinKind::CellInput: return PinRef::cell_input(p.owner, p.pin_index);
      case PinKind::CellOutput: return PinRef::cell_output(p.owner);
      case PinKind::InputPort: return PinRef::input_port(p.owner);
      case PinKind::OutputPort: return PinRef::output_port(p.owner);
    }
    return {};
  };
  std::vector<NodeId> drivers;
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (g.node(v).is_driver()) {
      if (g.net_of(v) == kNoNet) fail(ErrorKind::Structural, "driver " + std::to_string(v) + " has no net id");
      drivers.push_back(v);
    }
  std::sort(drivers.begin(), drivers.end(), [&](NodeId a, NodeId b) { return g.net_of(a) < g.net_of(b); });
  for (NodeId d : drivers) {
    Net net;
    net.id = g.net_of(d);
    net.driver = ref_of(d);
    for (NodeId s : g.fanout(d)) net.sinks.push_back(ref_of(s));
    n.nets.push_back(std::move(net));
  }
  for (NodeId p : g.input_ports()) n.primary_inputs.push_back(g.net_of(p));
  for (NodeId p : g.output_ports()) {
    if (g.fanin(p).size() != 1) fail(ErrorKind::Structural, "output port without a single driver");
    n.primary_outputs.push_back(g.net_of(g.fanin(p)[0]));
  }
  return n;
}

struct Counterparts {
  std::vector<NodeId> to_pre;     // post node id -> pre node id, kNoNode for Inserted
  std::vector<NodeId> inserted;   // ascending
};

/// Maps post-synthesis nodes onto their pre-synthesis counterparts (identity on ids).
inline Counterparts map_counterparts(const CircuitGraph& pre, const CircuitGraph& post) {
  Counterparts m;
  m.to_pre.assign(post.num_nodes(), kNoNode);
  if (post.num_nodes() < pre.num_nodes())
    fail(ErrorKind::Consistency, "post graph is missing pre-synthesis nodes");
  for (NodeId v = 0; v < post.num_nodes(); ++v) {
    const auto& p = post.node(v);
    if (p.origin == Origin::Inserted) {
      m.inserted.push_back(v);
      continue;
    }
    if (v >= pre.num_nodes())
      fail(ErrorKind::Consistency, "original post node " + std::to_string(v) + " has no pre counterpart");
    const auto& q = pre.node(v);
    if (q.pin != p.pin || q.owner != p.owner || q.pin_index != p.pin_index || q.origin != Origin::Original)
      fail(ErrorKind::Consistency, "post node " + std::to_string(v) + " does not match its pre counterpart");
    if (!q.is_port() && pre.cell(q.owner).kind.function != post.cell(p.owner).kind.function)
      fail(ErrorKind::Consistency, "post node " + std::to_string(v) + " changed cell function");
    m.to_pre[v] = v;
  }
  for (NodeId v = 0; v < pre.num_nodes(); ++v)
    if (post.node(v).origin != Origin::Original)
      fail(ErrorKind::Consistency, "pre node " + std::to_string(v) + " was not preserved");
  return m;
}

}  // namespace graphsym
