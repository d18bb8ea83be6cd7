#include <gtest/gtest.h>

#include "graphsym/features.hpp"
#include "graphsym/physopt.hpp"
#include "graphsym/reconstruct.hpp"
#include "test_support.hpp"

using namespace graphsym;
using graphsym::testing::adder_graph;
using graphsym::testing::chain_netlist;
using graphsym::testing::uniform_library;

namespace {

constexpr CellKind kBuf{CellFunction::BUF, Drive::X1};

struct Synthesized {
  CircuitGraph labeled;
  TimingReport pre, post;
};

Synthesized synthesized_adder(int width, std::uint64_t seed, const CellLibrary& lib) {
  auto pre = adder_graph(width, seed, lib);
  SynthConfig cfg;
  cfg.target_delay = aggressive_target(pre, lib);
  auto post = synthesize(pre, lib, cfg).graph;
  return {label_graph(pre, post, lib), analyze(pre, lib), analyze(post, lib)};
}

InferredGraph ground_truth(const CircuitGraph& labeled) { return {labeled, labeled.labels}; }

/*! PI -> X -> Y -> AND2.a and PI -> Z -> AND2.b; AND2 -> PO. With unit
    stage delays the X/Y arm is the worst path (3 vs 2). */
Netlist diamond() {
  Netlist n;
  n.cells.push_back({0, kBuf});
  n.cells.push_back({1, kBuf});
  n.cells.push_back({2, kBuf});
  n.cells.push_back({3, {CellFunction::AND2, Drive::X1}});
  n.nets.push_back({0, PinRef::input_port(0), {PinRef::cell_input(0, 0), PinRef::cell_input(2, 0)}});
  n.nets.push_back({1, PinRef::cell_output(0), {PinRef::cell_input(1, 0)}});
  n.nets.push_back({2, PinRef::cell_output(1), {PinRef::cell_input(3, 0)}});
  n.nets.push_back({3, PinRef::cell_output(2), {PinRef::cell_input(3, 1)}});
  n.nets.push_back({4, PinRef::cell_output(3), {PinRef::output_port(0)}});
  n.primary_inputs = {0};
  n.primary_outputs = {4};
  return n;
}

}  // namespace

TEST(Reconstruct, ZeroPredictionsGivePreMetrics) {
  auto lib = default_library(0);
  auto g = adder_graph(16, 0, lib);
  auto r = analyze(g, lib);
  auto f = annotate_features(g, r, lib);
  auto rec = reconstruct_metrics(f, std::vector<LabelPair>(g.num_nodes()));
  EXPECT_NEAR(rec.delay, r.worst_delay, 1e-12);
  EXPECT_EQ(rec.area, r.total_area);
}

TEST(Reconstruct, GroundTruthLabelsGivePostMetrics) {
  auto lib = default_library(0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = synthesized_adder(16, seed, lib);
    auto rec = reconstruct_metrics(ground_truth(s.labeled));
    EXPECT_NEAR(rec.delay / s.post.worst_delay, 1.0, 1e-6);
    EXPECT_NEAR(rec.area / s.post.total_area, 1.0, 1e-6);
  }
}

TEST(Reconstruct, ThreeStageHandArithmetic) {
  auto lib = uniform_library(1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
  auto g = netlist_to_graph(chain_netlist(3, kBuf));
  auto f = annotate_features(g, analyze(g, lib), lib);
  std::vector<LabelPair> p(g.num_nodes());
  p[g.cell(0).output].delay_delta = -0.1;
  p[g.cell(2).output].delay_delta = 0.05;
  EXPECT_NEAR(reconstruct_metrics(f, p).delay, 3.0 - 0.05, 1e-12);
}

TEST(Reconstruct, NegativeStagesClampAtZero) {
  auto lib = uniform_library(1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
  auto g = netlist_to_graph(chain_netlist(2, kBuf));
  auto f = annotate_features(g, analyze(g, lib), lib);
  std::vector<LabelPair> p(g.num_nodes());
  p[g.cell(0).output].delay_delta = -5.0;
  EXPECT_NEAR(reconstruct_metrics(f, p).delay, 1.0, 1e-12);
}

TEST(Reconstruct, MissingPredictionIsConsistencyError) {
  auto lib = default_library(0);
  auto g = netlist_to_graph(chain_netlist(2, kBuf));
  auto f = annotate_features(g, analyze(g, lib), lib);
  try {
    reconstruct_metrics(f, std::vector<LabelPair>(g.num_nodes() - 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Consistency);
  }
}

TEST(ReportFromFeatures, MatchesAnalyze) {
  auto lib = default_library(0);
  auto g = adder_graph(8, 5, lib);
  auto r = analyze(g, lib);
  auto f = report_from_features(annotate_features(g, r, lib));
  for (NodeId v = 0; v < g.num_nodes(); ++v) EXPECT_NEAR(f.arrival[v], r.arrival[v], 1e-12);
  auto a = enumerate_paths(g, r, 20), b = enumerate_paths(g, f, 20);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].delay, b[i].delay, 1e-12);
}

TEST(Sweep, RelaxedTargetIsIdentity) {
  auto lib = default_library(0);
  auto s = synthesized_adder(16, 1, lib);
  auto res = sweep(ground_truth(s.labeled), s.pre.worst_delay);
  EXPECT_TRUE(res.swapped.empty());
  EXPECT_NEAR(res.delay, s.pre.worst_delay, 1e-12);
  EXPECT_EQ(res.area, s.pre.total_area);
  EXPECT_TRUE(sweep(ground_truth(s.labeled), 1e9).swapped.empty());
}

TEST(Sweep, ExhaustivePathsReachFullySwappedMetrics) {
  auto lib = default_library(0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = synthesized_adder(6, seed, lib);
    auto ig = ground_truth(s.labeled);
    auto full = reconstruct_metrics(ig);
    auto res = sweep(ig, 1e-9, static_cast<std::size_t>(count_paths(ig.base)));
    EXPECT_NEAR(res.delay, full.delay, 1e-6);
    EXPECT_NEAR(res.area, full.area, 1e-6);
  }
}

TEST(Sweep, DiamondSwapsOnlyTheWorseArm) {
  auto lib = uniform_library(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0);
  auto g = netlist_to_graph(diamond());
  auto f = annotate_features(g, analyze(g, lib), lib);
  std::vector<LabelPair> p(g.num_nodes());
  p[g.cell(0).output] = {-0.6, 0.5};
  p[g.cell(1).output] = {-0.1, 0.3};
  p[g.cell(2).output] = {-0.5, 0.7};
  p[g.cell(3).output] = {-0.2, 0.9};
  auto res = sweep({f, p}, 2.5);
  EXPECT_EQ(res.swapped, (std::vector<NodeId>{g.cell(0).inputs[0], g.cell(0).output}));
  EXPECT_EQ(res.paths_visited, 1u);
  EXPECT_NEAR(res.delay, 2.4, 1e-12);
  EXPECT_NEAR(res.area, 4.5, 1e-12);
}

TEST(Sweep, RejectsNonPositiveTarget) {
  auto lib = default_library(0);
  auto s = synthesized_adder(4, 0, lib);
  EXPECT_THROW(sweep(ground_truth(s.labeled), 0.0), Error);
}

TEST(SweepCurve, SinglePreDelayPoint) {
  auto lib = default_library(0);
  auto s = synthesized_adder(8, 2, lib);
  auto c = sweep_curve(ground_truth(s.labeled), {s.pre.worst_delay});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_NEAR(c[0].delay, s.pre.worst_delay, 1e-12);
  EXPECT_EQ(c[0].area, s.pre.total_area);
  EXPECT_THROW(sweep_curve(ground_truth(s.labeled), {2.0, 1.0}), Error);
}

TEST(SweepCurve, RelaxingNeverSwapsMore) {
  auto lib = default_library(0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = synthesized_adder(16, seed, lib);
    auto ig = ground_truth(s.labeled);
    double t0 = reconstruct_metrics(ig).delay, t3 = s.pre.worst_delay;
    std::vector<double> targets;
    for (int i = 0; i < 4; ++i) targets.push_back(t0 + (t3 - t0) * i / 3.0);
    auto c = sweep_curve(ig, targets);
    for (std::size_t i = 1; i < c.size(); ++i) {
      EXPECT_LE(c[i].swapped.size(), c[i - 1].swapped.size());
      EXPECT_LE(c[i].area, c[i - 1].area + 1e-9);
    }
  }
}
