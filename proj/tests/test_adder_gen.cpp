#include <gtest/gtest.h>

#include <random>
#include <set>

#include "graphsym/adder_gen.hpp"
#include "graphsym/circuit_graph.hpp"
#include "test_support.hpp"

using namespace graphsym;

namespace {

// Returns the number of mismatches against integer addition.
std::size_t check_adder(const Netlist& n, int width, const std::vector<std::uint64_t>& lhs,
                        const std::vector<std::uint64_t>& rhs) {
  std::size_t bad = 0;
  for (std::size_t off = 0; off < lhs.size(); off += 64) {
    std::size_t end = std::min(lhs.size(), off + 64);
    std::vector<std::uint64_t> a(lhs.begin() + off, lhs.begin() + end), b(rhs.begin() + off, rhs.begin() + end);
    auto sums = simulate_adder(n, width, a, b);
    for (std::size_t i = 0; i < a.size(); ++i) bad += sums[i] != a[i] + b[i];
  }
  return bad;
}

std::size_t exhaustive_mismatches(const Netlist& n, int width) {
  std::vector<std::uint64_t> lhs, rhs;
  for (std::uint64_t a = 0; a < (1ULL << width); ++a)
    for (std::uint64_t b = 0; b < (1ULL << width); ++b) {
      lhs.push_back(a);
      rhs.push_back(b);
    }
  return check_adder(n, width, lhs, rhs);
}

std::size_t random_mismatches(const Netlist& n, int width, std::uint64_t seed, std::size_t count) {
  std::mt19937_64 rng(seed);
  std::uint64_t mask = width == 64 ? ~0ULL : ((1ULL << width) - 1);
  std::vector<std::uint64_t> lhs, rhs;
  for (std::size_t i = 0; i < count; ++i) {
    lhs.push_back(rng() & mask);
    rhs.push_back(rng() & mask);
  }
  return check_adder(n, width, lhs, rhs);
}

}  // namespace

TEST(RandomPrefixTree, WidthTwoIsForced) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto t = random_prefix_tree(2, seed);
    EXPECT_EQ(t.prefix_node_count(), 1u);
    EXPECT_EQ(t.depth(), 1);
  }
}

TEST(RandomPrefixTree, Deterministic) { EXPECT_EQ(random_prefix_tree(8, 0), random_prefix_tree(8, 0)); }

TEST(RandomPrefixTree, RejectsNarrowWidths) {
  EXPECT_THROW(random_prefix_tree(1, 0), Error);
  EXPECT_THROW(random_prefix_tree(0, 0), Error);
}

TEST(RandomPrefixTree, AlwaysValid) {
  for (int width : {2, 3, 5, 8, 16, 32})
    for (std::uint64_t seed = 0; seed < 50; ++seed) EXPECT_NO_THROW(validate(random_prefix_tree(width, seed)));
}

TEST(RandomPrefixTree, StructuralSpreadAtWidth16) {
  std::set<int> depths;
  std::set<std::size_t> counts;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto t = random_prefix_tree(16, seed);
    depths.insert(t.depth());
    counts.insert(t.prefix_node_count());
  }
  EXPECT_GE(depths.size(), 3u);
  EXPECT_GE(counts.size(), 10u);
  // Spans between the minimum-depth (4) and ripple (15) extremes.
  EXPECT_EQ(*depths.begin(), 4);
  EXPECT_EQ(*depths.rbegin(), 15);
}

TEST(RippleTree, Width4HasThreeNodes) {
  auto t = ripple_prefix_tree(4);
  EXPECT_EQ(t.prefix_node_count(), 3u);
  EXPECT_EQ(t.depth(), 3);
  EXPECT_NO_THROW(validate(t));
}

TEST(TreeToNetlist, WidthTwoExhaustive) {
  auto lib = default_library(0);
  auto n = tree_to_netlist(random_prefix_tree(2, 0), lib);
  EXPECT_EQ(exhaustive_mismatches(n, 2), 0u);
}

TEST(TreeToNetlist, CellCountFormula) {
  auto lib = default_library(0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto t = random_prefix_tree(16, seed);
    auto n = tree_to_netlist(t, lib);
    EXPECT_EQ(n.cells.size(), expected_cell_count(t));
    // 2w preprocessing + 3 per prefix node + w sum cells, minus one P cell per
    // node anchored at bit 0 and minus the sum-0 XOR.
    std::size_t anchored = 0;
    for (std::size_t i = 16; i < t.nodes.size(); ++i) anchored += t.nodes[i].lsb == 0;
    EXPECT_EQ(n.cells.size(), 2 * 16 + 3 * t.prefix_node_count() + 16 - anchored - 1);
    for (const auto& c : n.cells) EXPECT_EQ(c.kind.drive, Drive::X1);
  }
}

TEST(TreeToNetlist, ExhaustiveUpToWidth8) {
  auto lib = default_library(0);
  for (int width = 2; width <= 8; ++width)
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      auto n = tree_to_netlist(random_prefix_tree(width, seed), lib);
      EXPECT_EQ(exhaustive_mismatches(n, width), 0u) << "width " << width << " seed " << seed;
    }
  EXPECT_EQ(exhaustive_mismatches(tree_to_netlist(ripple_prefix_tree(8), lib), 8), 0u);
}

TEST(TreeToNetlist, RandomVectorsAtWidth16And32) {
  auto lib = default_library(0);
  for (int width : {16, 32})
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto n = tree_to_netlist(random_prefix_tree(width, seed), lib);
      EXPECT_EQ(random_mismatches(n, width, seed + 1, 1024), 0u);
    }
}

TEST(TreeToNetlist, GraphsAreWellFormedAndDeterministic) {
  auto lib = default_library(0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto n = tree_to_netlist(random_prefix_tree(16, seed), lib);
    ASSERT_NO_THROW(validate(n));
    auto g = netlist_to_graph(n);
    EXPECT_EQ(g, netlist_to_graph(tree_to_netlist(random_prefix_tree(16, seed), lib)));
    // Every node is reachable from an input and reaches an output.
    std::vector<char> fwd(g.num_nodes(), 0), bwd(g.num_nodes(), 0);
    auto order = topo_order(g);
    for (NodeId v : order) {
      if (g.node(v).pin == PinKind::InputPort) fwd[v] = 1;
      for (NodeId u : g.fanin(v)) fwd[v] |= fwd[u];
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeId v = *it;
      if (g.node(v).pin == PinKind::OutputPort) bwd[v] = 1;
      for (NodeId w : g.fanout(v)) bwd[v] |= bwd[w];
    }
    for (NodeId v = 0; v < g.num_nodes(); ++v) EXPECT_TRUE(fwd[v] && bwd[v]) << "node " << v;
  }
}

TEST(TreeToNetlist, SimulationCatchesAMiswiredGate) {
  auto lib = default_library(0);
  auto n = tree_to_netlist(random_prefix_tree(8, 3), lib);
  for (auto& c : n.cells)
    if (c.kind.function == CellFunction::OR2) {
      c.kind.function = CellFunction::AND2;
      break;
    }
  EXPECT_GT(exhaustive_mismatches(n, 8), 0u);
}
