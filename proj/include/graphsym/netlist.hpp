#pragma once

/*!
  \file netlist.hpp
  \brief Flat combinational gate-level netlist and a bit-parallel simulator.
*/

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "graphsym/cell_library.hpp"
#include "graphsym/error.hpp"

namespace graphsym {

using CellId = std::uint32_t;
using NetId = std::uint32_t;

struct PinRef {
  enum class Owner : std::uint8_t { Cell, InputPort, OutputPort };
  static constexpr std::uint8_t kOutputPin = 0xff;

  Owner owner = Owner::Cell;
  std::uint32_t index = 0;  // cell id or port position
  std::uint8_t pin = kOutputPin;  // input pin index for cell inputs

  static PinRef cell_input(CellId c, std::uint8_t pin) { return {Owner::Cell, c, pin}; }
  static PinRef cell_output(CellId c) { return {Owner::Cell, c, kOutputPin}; }
  static PinRef input_port(std::uint32_t i) { return {Owner::InputPort, i, kOutputPin}; }
  static PinRef output_port(std::uint32_t i) { return {Owner::OutputPort, i, 0}; }

  friend bool operator==(const PinRef&, const PinRef&) = default;
};

struct NetlistCell {
  CellId id = 0;
  CellKind kind;
  friend bool operator==(const NetlistCell&, const NetlistCell&) = default;
};

struct Net {
  NetId id = 0;
  PinRef driver;
  std::vector<PinRef> sinks;
  friend bool operator==(const Net&, const Net&) = default;
};

/// Cells are indexed by id (cells[i].id == i). Input port i drives net
/// primary_inputs[i]; output port j is a sink of net primary_outputs[j].
struct Netlist {
  std::vector<NetlistCell> cells;
  std::vector<Net> nets;
  std::vector<NetId> primary_inputs;
  std::vector<NetId> primary_outputs;

  friend bool operator==(const Netlist&, const Netlist&) = default;
};

namespace detail {

struct NetlistIndex {
  std::vector<std::size_t> net_pos;       // net id -> position in nets
  std::vector<NetId> cell_output_net;     // cell id -> net driven
  std::vector<std::vector<NetId>> cell_input_net;
};

inline NetlistIndex index_netlist(const Netlist& n) {
  constexpr NetId kNone = std::numeric_limits<NetId>::max();
  auto bad = [](const std::string& m) { fail(ErrorKind::Structural, m); };
  NetlistIndex ix;
  for (std::size_t i = 0; i < n.cells.size(); ++i)
    if (n.cells[i].id != i) bad("cell ids must be dense and ordered");
  NetId max_id = 0;
  for (const auto& net : n.nets) max_id = std::max(max_id, net.id);
  ix.net_pos.assign(n.nets.empty() ? 0 : max_id + 1, std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < n.nets.size(); ++i) {
    if (ix.net_pos[n.nets[i].id] != std::numeric_limits<std::size_t>::max())
      bad("duplicate net id " + std::to_string(n.nets[i].id));
    ix.net_pos[n.nets[i].id] = i;
  }
  ix.cell_output_net.assign(n.cells.size(), kNone);
  ix.cell_input_net.resize(n.cells.size());
  for (const auto& c : n.cells) ix.cell_input_net[c.id].assign(num_inputs(c.kind.function), kNone);
  std::vector<NetId> pi_net(n.primary_inputs.size(), kNone);
  std::vector<NetId> po_net(n.primary_outputs.size(), kNone);

  for (const auto& net : n.nets) {
    const auto& d = net.driver;
    switch (d.owner) {
      case PinRef::Owner::Cell:
        if (d.index >= n.cells.size() || d.pin != PinRef::kOutputPin) bad("net " + std::to_string(net.id) + " has an invalid driver");
        if (ix.cell_output_net[d.index] != kNone)
          bad("cell " + std::to_string(d.index) + " output drives more than one net");
        ix.cell_output_net[d.index] = net.id;
        break;
      case PinRef::Owner::InputPort:
        if (d.index >= n.primary_inputs.size() || pi_net[d.index] != kNone)
          bad("net " + std::to_string(net.id) + " has an invalid input-port driver");
        pi_net[d.index] = net.id;
        break;
      case PinRef::Owner::OutputPort:
        bad("net " + std::to_string(net.id) + " is driven by an output port");
    }
    for (const auto& s : net.sinks) {
      switch (s.owner) {
        case PinRef::Owner::Cell: {
          if (s.index >= n.cells.size() || s.pin >= ix.cell_input_net[s.index].size())
            bad("net " + std::to_string(net.id) + " has an invalid sink");
          auto& slot = ix.cell_input_net[s.index][s.pin];
          if (slot != kNone) bad("input pin of cell " + std::to_string(s.index) + " is multiply driven");
          slot = net.id;
          break;
        }
        case PinRef::Owner::OutputPort:
          if (s.index >= n.primary_outputs.size() || po_net[s.index] != kNone)
            bad("output port " + std::to_string(s.index) + " is multiply driven");
          po_net[s.index] = net.id;
          break;
        case PinRef::Owner::InputPort:
          bad("input port used as a sink");
      }
    }
  }
  for (std::size_t i = 0; i < n.primary_inputs.size(); ++i)
    if (pi_net[i] != n.primary_inputs[i]) bad("input port " + std::to_string(i) + " does not drive its net");
  for (std::size_t i = 0; i < n.primary_outputs.size(); ++i)
    if (po_net[i] != n.primary_outputs[i]) bad("output port " + std::to_string(i) + " is not a sink of its net");
  for (const auto& c : n.cells) {
    if (ix.cell_output_net[c.id] == kNone) bad("cell " + std::to_string(c.id) + " output is unconnected");
    for (auto net : ix.cell_input_net[c.id])
      if (net == kNone) bad("cell " + std::to_string(c.id) + " has an undriven input");
  }
  return ix;
}

inline std::uint64_t eval_function(CellFunction f, std::uint64_t a, std::uint64_t b) {
  switch (f) {
    case CellFunction::INV: return ~a;
    case CellFunction::BUF: return a;
    case CellFunction::AND2: return a & b;
    case CellFunction::OR2: return a | b;
    case CellFunction::NAND2: return ~(a & b);
    case CellFunction::NOR2: return ~(a | b);
    case CellFunction::XOR2: return a ^ b;
    case CellFunction::XNOR2: return ~(a ^ b);
  }
  return 0;
}

}  // namespace detail

/// Validates the netlist invariants (single driver per net, every input pin
/// driven exactly once, acyclic). Throws a structural error on violation.
inline void validate(const Netlist& n);

/*! \brief 64-way bit-parallel simulation.

  inputs[i] holds 64 stimulus bits for input port i; the result holds the
  corresponding 64 response bits for each output port.
*/
inline std::vector<std::uint64_t> simulate(const Netlist& n, const std::vector<std::uint64_t>& inputs) {
  if (inputs.size() != n.primary_inputs.size()) fail(ErrorKind::Domain, "simulate: wrong number of input words");
  auto ix = detail::index_netlist(n);
  std::vector<std::uint64_t> value(ix.net_pos.size(), 0);
  std::vector<char> known(ix.net_pos.size(), 0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    value[n.primary_inputs[i]] = inputs[i];
    known[n.primary_inputs[i]] = 1;
  }
  // Repeated sweeps in cell order; each sweep resolves at least one cell on an acyclic netlist.
  std::vector<char> done(n.cells.size(), 0);
  std::size_t remaining = n.cells.size();
  while (remaining > 0) {
    std::size_t progressed = 0;
    for (const auto& c : n.cells) {
      if (done[c.id]) continue;
      const auto& in = ix.cell_input_net[c.id];
      if (!std::all_of(in.begin(), in.end(), [&](NetId x) { return known[x] != 0; })) continue;
      std::uint64_t a = value[in[0]];
      std::uint64_t b = in.size() > 1 ? value[in[1]] : 0;
      value[ix.cell_output_net[c.id]] = detail::eval_function(c.kind.function, a, b);
      known[ix.cell_output_net[c.id]] = 1;
      done[c.id] = 1;
      ++progressed;
      --remaining;
    }
    if (progressed == 0) fail(ErrorKind::Structural, "simulate: combinational cycle");
  }
  std::vector<std::uint64_t> out;
  out.reserve(n.primary_outputs.size());
  for (auto net : n.primary_outputs) out.push_back(value[net]);
  return out;
}

inline void validate(const Netlist& n) {
  (void)detail::index_netlist(n);
  // Cycle check through a zero-stimulus simulation.
  std::vector<std::uint64_t> zeros(n.primary_inputs.size(), 0);
  (void)simulate(n, zeros);
}

}  // namespace graphsym
