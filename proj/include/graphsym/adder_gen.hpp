#pragma once

/*!
  \file adder_gen.hpp
  \brief Randomized parallel-prefix adders.

  A prefix tree covers every carry column [i:0] (1 <= i < width) by
  composing two contiguous child ranges [m:k] and [k-1:l]. The generator
  splits ranges recursively, drawing each split from a per-tree mixture of
  three rules:

    - aligned: the low child is the largest power of two below the range
      length (Sklansky-style, shares subranges, high fanout)
    - serial:  the high child is a single bit (ripple-style, deep)
    - uniform: any split point

  The mixture weights are themselves drawn per tree, which spreads depth
  and node count between the ripple and minimum-depth extremes.
*/

#include <bit>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "graphsym/cell_library.hpp"
#include "graphsym/detail/random.hpp"
#include "graphsym/error.hpp"
#include "graphsym/netlist.hpp"

namespace graphsym {

struct PrefixNode {
  int msb = 0;
  int lsb = 0;
  int hi = -1;  // child covering [msb:k]
  int lo = -1;  // child covering [k-1:lsb]
  int level = 0;

  bool is_leaf() const { return hi < 0; }
};

struct PrefixTree {
  int width = 0;
  std::vector<PrefixNode> nodes;  // nodes[i] for i < width is the bit-i leaf
  std::vector<int> column;        // column[i] covers [i:0]; column[0] is leaf 0

  int depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.level);
    return d;
  }
  std::size_t prefix_node_count() const { return nodes.size() - static_cast<std::size_t>(width); }

  friend bool operator==(const PrefixTree& a, const PrefixTree& b) {
    if (a.width != b.width || a.column != b.column || a.nodes.size() != b.nodes.size()) return false;
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
      const auto &x = a.nodes[i], &y = b.nodes[i];
      if (x.msb != y.msb || x.lsb != y.lsb || x.hi != y.hi || x.lo != y.lo || x.level != y.level) return false;
    }
    return true;
  }
};

/// Throws a structural error unless every column decomposes into contiguous child ranges.
inline void validate(const PrefixTree& t) {
  auto bad = [](const std::string& m) { fail(ErrorKind::Structural, "prefix tree: " + m); };
  if (t.width < 2 || t.column.size() != static_cast<std::size_t>(t.width)) bad("bad width/columns");
  for (int i = 0; i < t.width; ++i) {
    const auto& leaf = t.nodes.at(i);
    if (!leaf.is_leaf() || leaf.msb != i || leaf.lsb != i || leaf.level != 0) bad("bad leaf");
  }
  for (std::size_t i = static_cast<std::size_t>(t.width); i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    if (n.is_leaf() || n.hi >= static_cast<int>(i) || n.lo >= static_cast<int>(i)) bad("children must precede parents");
    const auto &h = t.nodes[n.hi], &l = t.nodes[n.lo];
    if (h.msb != n.msb || l.lsb != n.lsb || h.lsb != l.msb + 1) bad("children are not contiguous");
    if (n.level != 1 + std::max(h.level, l.level)) bad("level mismatch");
  }
  for (int i = 0; i < t.width; ++i) {
    const auto& c = t.nodes.at(t.column[i]);
    if (c.msb != i || c.lsb != 0) bad("column does not cover [i:0]");
  }
}

inline PrefixTree random_prefix_tree(int width, std::uint64_t seed) {
  if (width < 2) fail(ErrorKind::Domain, "prefix tree width must be >= 2");
  std::mt19937_64 rng(seed);
  const double p_aligned = detail::unit_draw(rng);
  const double p_serial = detail::unit_draw(rng);

  PrefixTree t;
  t.width = width;
  for (int i = 0; i < width; ++i) t.nodes.push_back({i, i, -1, -1, 0});
  std::map<std::pair<int, int>, int> memo;

  auto build = [&](auto&& self, int msb, int lsb) -> int {
    if (msb == lsb) return msb;
    if (auto it = memo.find({msb, lsb}); it != memo.end()) return it->second;
    const int len = msb - lsb + 1;
    int k;  // hi = [msb:k], lo = [k-1:lsb]
    double u = detail::unit_draw(rng);
    if (u < p_aligned) {
      k = lsb + static_cast<int>(std::bit_floor(static_cast<unsigned>(len - 1)));
    } else if (detail::unit_draw(rng) < p_serial) {
      k = msb;
    } else {
      k = lsb + 1 + static_cast<int>(detail::draw_below(rng, static_cast<std::uint64_t>(len - 1)));
    }
    int hi = self(self, msb, k);
    int lo = self(self, k - 1, lsb);
    PrefixNode n{msb, lsb, hi, lo, 1 + std::max(t.nodes[hi].level, t.nodes[lo].level)};
    t.nodes.push_back(n);
    int id = static_cast<int>(t.nodes.size()) - 1;
    memo[{msb, lsb}] = id;
    return id;
  };

  t.column.push_back(0);
  for (int i = 1; i < width; ++i) t.column.push_back(build(build, i, 0));
  return t;
}

/// The ripple-carry tree: [i:0] = [i:i] o [i-1:0].
inline PrefixTree ripple_prefix_tree(int width) {
  if (width < 2) fail(ErrorKind::Domain, "prefix tree width must be >= 2");
  PrefixTree t;
  t.width = width;
  for (int i = 0; i < width; ++i) t.nodes.push_back({i, i, -1, -1, 0});
  t.column.push_back(0);
  for (int i = 1; i < width; ++i) {
    int lo = t.column.back();
    t.nodes.push_back({i, 0, i, lo, 1 + t.nodes[lo].level});
    t.column.push_back(static_cast<int>(t.nodes.size()) - 1);
  }
  return t;
}

/// Cells emitted by tree_to_netlist for `t`.
///
/// 2 per bit (generate AND2, propagate XOR2), 2 per prefix node for the
/// group generate (AND2 + OR2), 1 more per prefix node with lsb > 0 for the
/// group propagate (ranges anchored at bit 0 never need P), and width - 1
/// sum XOR2s (sum bit 0 is the bit-0 propagate itself).
inline std::size_t expected_cell_count(const PrefixTree& t) {
  std::size_t n = 2 * static_cast<std::size_t>(t.width) + static_cast<std::size_t>(t.width) - 1;
  for (std::size_t i = static_cast<std::size_t>(t.width); i < t.nodes.size(); ++i)
    n += t.nodes[i].lsb > 0 ? 3 : 2;
  return n;
}

/*! \brief Maps a prefix tree onto AND2/OR2/XOR2 cells at drive X1.

  Ports: inputs a[0..w) then b[0..w); outputs sum[0..w) then carry-out.
  Carry-in is tied to 0, so no carry-in port exists.
*/
inline Netlist tree_to_netlist(const PrefixTree& t, const CellLibrary& lib) {
  validate(t);
  const int w = t.width;
  for (auto f : {CellFunction::AND2, CellFunction::OR2, CellFunction::XOR2})
    if (!lib.contains({f, Drive::X1})) fail(ErrorKind::Library, "library lacks " + to_string(CellKind{f, Drive::X1}));

  Netlist n;
  auto new_net = [&](PinRef driver) {
    NetId id = static_cast<NetId>(n.nets.size());
    n.nets.push_back({id, driver, {}});
    return id;
  };
  auto gate = [&](CellFunction f, NetId a, NetId b) {
    CellId c = static_cast<CellId>(n.cells.size());
    n.cells.push_back({c, {f, Drive::X1}});
    n.nets[a].sinks.push_back(PinRef::cell_input(c, 0));
    n.nets[b].sinks.push_back(PinRef::cell_input(c, 1));
    return new_net(PinRef::cell_output(c));
  };

  for (int i = 0; i < 2 * w; ++i) n.primary_inputs.push_back(new_net(PinRef::input_port(static_cast<std::uint32_t>(i))));
  auto a = [&](int i) { return n.primary_inputs[i]; };
  auto b = [&](int i) { return n.primary_inputs[w + i]; };

  constexpr NetId kNone = std::numeric_limits<NetId>::max();
  std::vector<NetId> G(t.nodes.size(), kNone), P(t.nodes.size(), kNone);
  for (int i = 0; i < w; ++i) {
    G[i] = gate(CellFunction::AND2, a(i), b(i));
    P[i] = gate(CellFunction::XOR2, a(i), b(i));
  }
  for (std::size_t i = static_cast<std::size_t>(w); i < t.nodes.size(); ++i) {
    const auto& nd = t.nodes[i];
    NetId carry_through = gate(CellFunction::AND2, P[nd.hi], G[nd.lo]);
    G[i] = gate(CellFunction::OR2, G[nd.hi], carry_through);
    if (nd.lsb > 0) P[i] = gate(CellFunction::AND2, P[nd.hi], P[nd.lo]);
  }
  std::vector<NetId> sums{P[0]};
  for (int i = 1; i < w; ++i) sums.push_back(gate(CellFunction::XOR2, P[i], G[t.column[i - 1]]));
  sums.push_back(G[t.column[w - 1]]);
  for (std::size_t j = 0; j < sums.size(); ++j) {
    n.nets[sums[j]].sinks.push_back(PinRef::output_port(static_cast<std::uint32_t>(j)));
    n.primary_outputs.push_back(sums[j]);
  }
  return n;
}

/// Simulates the adder on 64 operand pairs and returns the (w+1)-bit sums.
inline std::vector<std::uint64_t> simulate_adder(const Netlist& n, int width, const std::vector<std::uint64_t>& lhs,
                                                 const std::vector<std::uint64_t>& rhs) {
  if (lhs.size() != rhs.size() || lhs.size() > 64) fail(ErrorKind::Domain, "simulate_adder takes up to 64 operand pairs");
  std::vector<std::uint64_t> words(2 * static_cast<std::size_t>(width), 0);
  for (std::size_t s = 0; s < lhs.size(); ++s)
    for (int i = 0; i < width; ++i) {
      words[i] |= ((lhs[s] >> i) & 1ULL) << s;
      words[width + i] |= ((rhs[s] >> i) & 1ULL) << s;
    }
  auto out = simulate(n, words);
  std::vector<std::uint64_t> sums(lhs.size(), 0);
  for (std::size_t s = 0; s < lhs.size(); ++s)
    for (std::size_t j = 0; j < out.size(); ++j) sums[s] |= ((out[j] >> s) & 1ULL) << j;
  return sums;
}

}  // namespace graphsym
