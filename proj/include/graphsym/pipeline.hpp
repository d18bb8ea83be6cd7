#pragma once

/*!
  \file pipeline.hpp
  \brief Dataset-level stages shared by the command-line tool and the tests.

  Per-sample randomness: sample i of a dataset generated from root seed S
  uses prefix-tree seed sample_seed(S, i) (splitmix64 of S + i). Samples
  are numbered train first, then validation, then test, so the three
  splits occupy disjoint index ranges.
*/

#include <string>
#include <unordered_map>
#include <vector>

#include "graphsym/adder_gen.hpp"
#include "graphsym/features.hpp"
#include "graphsym/gatv2.hpp"
#include "graphsym/metrics.hpp"
#include "graphsym/physopt.hpp"
#include "graphsym/reconstruct.hpp"
#include "graphsym/sta.hpp"

namespace graphsym {

inline std::uint64_t sample_seed(std::uint64_t root, std::uint64_t index) {
  std::uint64_t z = root + index + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct SplitCounts {
  std::size_t train = 200;
  std::size_t val = 50;
  std::size_t test = 50;

  std::size_t total() const { return train + val + test; }

  /// 60/20/20 of `n`; rounding remainders go to the training split.
  static SplitCounts proportional(std::size_t n) {
    SplitCounts c;
    c.val = n / 5;
    c.test = n / 5;
    c.train = n - c.val - c.test;
    return c;
  }
};

inline const char* split_of(const SplitCounts& c, std::size_t index) {
  if (index < c.train) return "train";
  if (index < c.train + c.val) return "val";
  return "test";
}

/// Throws a pipeline error naming both fingerprints when `g` was built against another library.
inline void check_library(const CircuitGraph& g, const CellLibrary& lib) {
  auto want = lib.fingerprint();
  if (g.library_fingerprint != want)
    fail(ErrorKind::Pipeline, "graph " + g.meta.value("id", std::string("?")) + " carries library fingerprint " +
                                  (g.library_fingerprint.empty() ? "<none>" : g.library_fingerprint) +
                                  " but the library in use is " + want);
}

/// Pre-synthesis adder graphs with features, role Pre, ids "add<W>_<index>".
inline std::vector<CircuitGraph> generate_dataset(int width, const SplitCounts& counts, std::uint64_t root_seed,
                                                  const CellLibrary& lib) {
  std::vector<CircuitGraph> out;
  out.reserve(counts.total());
  for (std::size_t i = 0; i < counts.total(); ++i) {
    std::uint64_t seed = sample_seed(root_seed, i);
    auto g = netlist_to_graph(tree_to_netlist(random_prefix_tree(width, seed), lib));
    g.library_version = lib.version;
    g.library_fingerprint = lib.fingerprint();
    g = annotate_features(g, analyze(g, lib), lib);
    g.meta = {{"id", "add" + std::to_string(width) + "_" + std::to_string(i)},
              {"index", i},
              {"split", split_of(counts, i)},
              {"width", width},
              {"root_seed", root_seed},
              {"sample_seed", seed}};
    out.push_back(std::move(g));
  }
  return out;
}

/// Synthesizes every graph at alpha times its own pre-synthesis delay.
inline std::vector<CircuitGraph> synthesize_dataset(const std::vector<CircuitGraph>& pre, const CellLibrary& lib,
                                                    double alpha, SynthConfig base = {}) {
  std::vector<CircuitGraph> out;
  out.reserve(pre.size());
  for (const auto& g : pre) {
    check_library(g, lib);
    if (g.role != GraphRole::Pre) fail(ErrorKind::Pipeline, "synth expects pre-synthesis graphs");
    CircuitGraph bare = g;
    bare.features.clear();
    bare.labels.clear();
    base.target_delay = aggressive_target(bare, lib, alpha);
    auto res = synthesize(bare, lib, base);
    res.graph.meta["synthesis"]["alpha"] = alpha;
    out.push_back(std::move(res.graph));
  }
  return out;
}

/// Labeled graphs; pre and post are matched by header id.
inline std::vector<CircuitGraph> label_dataset(const std::vector<CircuitGraph>& pre, const std::vector<CircuitGraph>& post,
                                               const CellLibrary& lib) {
  std::unordered_map<std::string, const CircuitGraph*> by_id;
  for (const auto& g : post) {
    check_library(g, lib);
    if (g.role != GraphRole::Post) fail(ErrorKind::Pipeline, "label expects post-synthesis graphs");
    by_id[g.meta.value("id", std::string())] = &g;
  }
  std::vector<CircuitGraph> out;
  out.reserve(pre.size());
  for (const auto& g : pre) {
    check_library(g, lib);
    auto id = g.meta.value("id", std::string());
    auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorKind::Pipeline, "no post-synthesis graph with id '" + id + "'");
    CircuitGraph bare = g;
    bare.features.clear();
    auto l = label_graph(bare, *it->second, lib);
    if (it->second->meta.contains("synthesis")) l.meta["synthesis"] = it->second->meta["synthesis"];
    out.push_back(std::move(l));
  }
  return out;
}

/// Graphs whose header split matches; "all" selects everything.
inline std::vector<const CircuitGraph*> select_split(const std::vector<CircuitGraph>& graphs, const std::string& split) {
  std::vector<const CircuitGraph*> out;
  for (const auto& g : graphs)
    if (split == "all" || g.meta.value("split", std::string()) == split) out.push_back(&g);
  return out;
}

/// Inferred graph: features of `g`, labels replaced by denormalized predictions.
inline CircuitGraph infer_graph(const GATv2Model& model, const CircuitGraph& g) {
  CircuitGraph out = g;
  out.labels.clear();  // prediction never sees ground truth
  out.labels = model.predict(out);
  for (const auto& l : out.labels)
    if (!std::isfinite(l.delay_delta) || !std::isfinite(l.area_delta))
      fail(ErrorKind::Numeric, "non-finite prediction for graph " + g.meta.value("id", std::string("?")));
  out.role = GraphRole::Inferred;
  return out;
}

/*! \brief Design-level comparison of predictions against ground truth.

  `labeled` supplies the ground-truth labels and features; `predicted`
  supplies per-node deltas (its labels), matched by header id.
*/
inline EvalSummary evaluate_predictions(const std::vector<const CircuitGraph*>& labeled,
                                        const std::vector<CircuitGraph>& predicted) {
  std::unordered_map<std::string, const CircuitGraph*> by_id;
  for (const auto& g : predicted) by_id[g.meta.value("id", std::string())] = &g;
  std::vector<DesignResult> rows;
  for (const auto* g : labeled) {
    auto id = g->meta.value("id", std::string());
    auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorKind::Pipeline, "no prediction for design '" + id + "'");
    if (!g->has_labels()) fail(ErrorKind::Pipeline, "design '" + id + "' has no ground-truth labels");
    if (!it->second->same_structure(*g)) fail(ErrorKind::Consistency, "prediction for '" + id + "' is for another graph");
    auto pred = reconstruct_metrics(*g, it->second->labels);
    auto gt = reconstruct_metrics(*g, g->labels);
    auto base = reconstruct_metrics(*g, std::vector<LabelPair>(g->num_nodes()));
    rows.push_back({id, pred.delay, gt.delay, base.delay, pred.area, gt.area, base.area});
  }
  return EvalSummary::from(std::move(rows));
}

}  // namespace graphsym
