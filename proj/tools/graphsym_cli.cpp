// graphsym: command-line driver for dataset generation, synthesis, labeling,
// training, inference, reconstruction, sweeping and evaluation.
//
// Exit codes: 0 success, 2 usage, 3 data or fingerprint error, 4 numeric failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "graphsym/graphsym.hpp"

using namespace graphsym;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Inputs, parameters and timing of one stage, written next to its output.
class Manifest {
public:
  Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& role, const std::string& path) {
    inputs_[role] = {{"path", path}, {"fingerprint", file_fingerprint(path)}};
  }
  json& params() { return params_; }
  json& results() { return results_; }

  void write(const std::string& out_path) const {
    json versions = {{"tool", kToolVersion},
                     {"graph_schema", kGraphSchemaVersion},
                     {"library_schema", kLibrarySchemaVersion},
                     {"checkpoint_schema", GATv2Model::kSchemaVersion},
                     {"norm_schema", NormStats::kSchemaVersion}};
    json m = {{"command", command_},
              {"versions", versions},
              {"inputs", inputs_},
              {"params", params_},
              {"output", {{"path", out_path}, {"fingerprint", file_fingerprint(out_path)}}},
              {"results", results_},
              {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count()}};
    std::ofstream os(out_path + ".manifest.json");
    if (!os) fail(ErrorKind::Format, "cannot write manifest for '" + out_path + "'");
    os << m.dump(2) << "\n";
  }

private:
  std::string command_;
  std::chrono::steady_clock::time_point start_;
  json inputs_ = json::object();
  json params_ = json::object();
  json results_ = json::object();
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Format, "cannot write '" + path + "'");
  os << text;
  if (!os) fail(ErrorKind::Format, "write failed for '" + path + "'");
}

json read_json(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Format, "cannot open '" + path + "'");
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::Format, "'" + path + "' is not valid JSON");
  return j;
}

std::vector<CircuitGraph> selected_copies(const std::vector<CircuitGraph>& graphs, const std::string& split) {
  std::vector<CircuitGraph> out;
  for (const auto* g : select_split(graphs, split)) out.push_back(*g);
  if (out.empty()) fail(ErrorKind::Pipeline, "no graphs in split '" + split + "'");
  return out;
}

/// Checkpoints record the library their training data was built with.
void check_model_library(const json& extra, const CircuitGraph& g) {
  auto want = extra.value("library_fingerprint", std::string());
  if (!want.empty() && g.library_fingerprint != want)
    fail(ErrorKind::Pipeline, "graph " + g.meta.value("id", std::string("?")) + " carries library fingerprint " +
                                  g.library_fingerprint + " but the model was trained on library " + want);
}

std::vector<double> parse_targets(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto v = detail::parse_double(tok);
    if (!v || !(*v > 0.0)) throw UsageError("bad sweep target '" + tok + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw UsageError("--targets is empty");
  std::sort(out.begin(), out.end());
  return out;
}

std::string default_library_path() {
#ifdef GRAPHSYM_DEFAULT_LIBRARY
  return GRAPHSYM_DEFAULT_LIBRARY;
#else
  return "data/cell_library_v1.txt";
#endif
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graphsym: post-synthesis delay and area prediction for prefix adders"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string lib_path = default_library_path();
  std::string in, out, pre_path, post_path, norm_path, model_path, predictions_path, split, targets;
  std::uint64_t seed = 0;

  // gen-lib
  auto* gen_lib = app.add_subcommand("gen-lib", "Write the cell library for a seed (seed 0 is the shipped library)");
  gen_lib->add_option("--seed", seed, "Library seed")->capture_default_str();
  gen_lib->add_option("--out", out, "Library file")->required();

  // gen-dataset
  int width = 16;
  std::size_t count = 0;
  SplitCounts counts;
  auto* gen_ds = app.add_subcommand("gen-dataset", "Generate random prefix adders as pre-synthesis graphs");
  gen_ds->add_option("--width", width, "Adder width in bits")->capture_default_str()->check(CLI::Range(1, 64));
  auto* count_opt = gen_ds->add_option("--count", count, "Total designs, split 60/20/20 into train/val/test");
  gen_ds->add_option("--train", counts.train, "Training designs")->capture_default_str()->excludes(count_opt);
  gen_ds->add_option("--val", counts.val, "Validation designs")->capture_default_str()->excludes(count_opt);
  gen_ds->add_option("--test", counts.test, "Test designs")->capture_default_str()->excludes(count_opt);
  gen_ds->add_option("--seed", seed, "Root seed")->capture_default_str();
  gen_ds->add_option("--lib", lib_path, "Cell library file")->capture_default_str();
  gen_ds->add_option("--out", out, "Dataset file (one graph per line)")->required();

  // synth
  double alpha = kDefaultAggressiveAlpha;
  SynthConfig synth_cfg;
  auto* synth = app.add_subcommand("synth", "Run the sizing and buffering optimizer on every graph");
  synth->add_option("--in", in, "Pre-synthesis dataset")->required();
  synth->add_option("--out", out, "Post-synthesis dataset")->required();
  synth->add_option("--lib", lib_path, "Cell library file")->capture_default_str();
  synth->add_option("--target-alpha", alpha, "Delay target as a fraction of each design's pre delay")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth->add_option("--max-fanout", synth_cfg.max_fanout, "Nets above this fanout are buffering candidates")
      ->capture_default_str();
  synth->add_option("--max-passes", synth_cfg.max_passes, "Move limit per design")->capture_default_str();

  // label
  auto* label = app.add_subcommand("label", "Attach per-node delay and area deltas to pre-synthesis graphs");
  label->add_option("--pre", pre_path, "Pre-synthesis dataset")->required();
  label->add_option("--post", post_path, "Post-synthesis dataset")->required();
  label->add_option("--lib", lib_path, "Cell library file")->capture_default_str();
  label->add_option("--out", out, "Labeled dataset")->required();

  // fit-norm
  auto* fit_norm = app.add_subcommand("fit-norm", "Fit feature and label normalization on one split");
  fit_norm->add_option("--in", in, "Labeled dataset")->required();
  fit_norm->add_option("--split", split, "Split to fit on (train, val, test or all)")->default_val("train");
  fit_norm->add_option("--out", out, "Normalization file")->required();

  // train
  ModelConfig mcfg;
  TrainConfig tcfg;
  std::string val_split;
  auto* train_cmd = app.add_subcommand("train", "Train the GATv2 model");
  train_cmd->add_option("--in", in, "Labeled dataset")->required();
  train_cmd->add_option("--norm", norm_path, "Normalization file")->required();
  train_cmd->add_option("--out", out, "Checkpoint file")->required();
  train_cmd->add_option("--split", split, "Training split")->default_val("train");
  train_cmd->add_option("--val-split", val_split, "Validation split used for early stopping")->default_val("val");
  train_cmd->add_option("--epochs", tcfg.epochs, "Maximum epochs")->capture_default_str();
  train_cmd->add_option("--batch-size", tcfg.batch_size, "Graphs per batch")->capture_default_str();
  train_cmd->add_option("--patience", tcfg.patience, "Epochs without validation gain before stopping")
      ->capture_default_str();
  train_cmd->add_option("--seed", tcfg.seed, "Seed for initialization, batch order and dropout")
      ->capture_default_str();
  train_cmd->add_option("--layers", mcfg.layers, "GATv2 layers")->capture_default_str();
  train_cmd->add_option("--heads", mcfg.heads, "Attention heads per layer")->capture_default_str();
  train_cmd->add_option("--head-dim", mcfg.head_dim, "Width of each head")->capture_default_str();
  train_cmd->add_option("--hidden", mcfg.hidden, "Hidden width (heads * head-dim)")->capture_default_str();
  train_cmd->add_option("--lr", mcfg.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--dropout", mcfg.dropout_p, "Dropout probability")->capture_default_str();

  // predict
  auto* predict = app.add_subcommand("predict", "Predict per-node deltas; labels in the input are never read");
  predict->add_option("--model", model_path, "Checkpoint file")->required();
  predict->add_option("--in", in, "Dataset with features")->required();
  predict->add_option("--split", split, "Split to predict (train, val, test or all)")->default_val("test");
  predict->add_option("--out", out, "Inferred dataset")->required();

  // reconstruct
  auto* reconstruct = app.add_subcommand("reconstruct", "Design delay and area from inferred graphs");
  reconstruct->add_option("--in", in, "Inferred dataset")->required();
  reconstruct->add_option("--out", out, "Metrics file (JSON)")->required();

  // sweep
  std::size_t k_paths = kDefaultSweepPaths;
  bool relative = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Delay/area curve by partial substitution of predictions");
  sweep_cmd->add_option("--targets", targets, "Comma-separated delay targets")->required();
  sweep_cmd->add_option("--relative", relative, "Targets are fractions of each design's pre delay")
      ->capture_default_str();
  sweep_cmd->add_option("--model", model_path, "Checkpoint file; without it the input's labels are the predictions");
  sweep_cmd->add_option("--in", in, "Dataset with features")->required();
  sweep_cmd->add_option("--split", split, "Split to sweep (train, val, test or all)")->default_val("test");
  sweep_cmd->add_option("--paths", k_paths, "Worst paths visited per target")->capture_default_str();
  sweep_cmd->add_option("--out", out, "Curve file (CSV)")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Model and pre-synthesis baseline MAE against ground truth");
  eval->add_option("--in", in, "Labeled dataset")->required();
  eval->add_option("--split", split, "Split to evaluate (train, val, test or all)")->default_val("test");
  auto* model_opt = eval->add_option("--model", model_path, "Checkpoint file");
  auto* pred_opt = eval->add_option("--predictions", predictions_path, "Dataset whose labels are the predictions");
  model_opt->excludes(pred_opt);
  eval->add_option("--out", out, "Summary file (JSON)")->required();

  // report
  std::string design_id;
  auto* report = app.add_subcommand("report", "Static timing report of one graph");
  report->add_option("--in", in, "Dataset")->required();
  report->add_option("--id", design_id, "Design id (default: first graph)");
  report->add_option("--lib", lib_path, "Cell library file")->capture_default_str();
  report->add_option("--out", out, "Report file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_lib) {
      Manifest m("gen-lib");
      m.params()["seed"] = seed;
      auto lib = default_library(seed);
      save_library(lib, out);
      m.results() = {{"version", lib.version}, {"fingerprint", lib.fingerprint()}};
      m.write(out);
    } else if (*gen_ds) {
      Manifest m("gen-dataset");
      if (*count_opt) counts = SplitCounts::proportional(count);
      if (counts.total() == 0) throw UsageError("dataset would be empty");
      auto lib = load_library(lib_path);
      m.input("library", lib_path);
      m.params() = {{"width", width},
                    {"train", counts.train},
                    {"val", counts.val},
                    {"test", counts.test},
                    {"root_seed", seed},
                    {"sample_seed", "splitmix64(root_seed + index)"}};
      auto graphs = generate_dataset(width, counts, seed, lib);
      save_dataset(graphs, out);
      m.results() = {{"graphs", graphs.size()}, {"library_fingerprint", lib.fingerprint()}};
      m.write(out);
    } else if (*synth) {
      Manifest m("synth");
      auto lib = load_library(lib_path);
      m.input("library", lib_path);
      m.input("pre", in);
      m.params() = {{"target_alpha", alpha},
                    {"max_fanout", synth_cfg.max_fanout},
                    {"max_passes", synth_cfg.max_passes},
                    {"buffer_kind", to_string(synth_cfg.buffer_kind)}};
      auto post = synthesize_dataset(load_dataset(in), lib, alpha, synth_cfg);
      save_dataset(post, out);
      std::size_t met = 0, changed = 0;
      for (const auto& g : post) {
        met += g.meta["synthesis"].value("met", false);
        changed += g.meta["synthesis"].value("upsizes", 0) + g.meta["synthesis"].value("buffers", 0) > 0;
      }
      m.results() = {{"graphs", post.size()}, {"target_met", met}, {"changed", changed}};
      m.write(out);
      std::printf("synthesized %zu designs: %zu met target, %zu changed\n", post.size(), met, changed);
    } else if (*label) {
      Manifest m("label");
      auto lib = load_library(lib_path);
      m.input("library", lib_path);
      m.input("pre", pre_path);
      m.input("post", post_path);
      auto labeled = label_dataset(load_dataset(pre_path), load_dataset(post_path), lib);
      save_dataset(labeled, out);
      m.results()["graphs"] = labeled.size();
      m.write(out);
    } else if (*fit_norm) {
      Manifest m("fit-norm");
      m.input("labeled", in);
      m.params()["split"] = split;
      auto graphs = load_dataset(in);
      auto norm = fit_normalization(select_split(graphs, split));
      write_text(out, norm.to_json().dump(2) + "\n");
      m.results() = {{"fingerprint", norm.fingerprint()}, {"graphs", norm.num_graphs}, {"nodes", norm.num_nodes}};
      m.write(out);
    } else if (*train_cmd) {
      Manifest m("train");
      m.input("labeled", in);
      m.input("norm", norm_path);
      auto graphs = load_dataset(in);
      auto norm = NormStats::from_json(read_json(norm_path));
      auto train_set = select_split(graphs, split);
      auto val_set = select_split(graphs, val_split);
      if (train_set.empty()) fail(ErrorKind::Pipeline, "no graphs in split '" + split + "'");
      for (const auto* g : train_set)
        if (g->library_fingerprint != train_set[0]->library_fingerprint)
          fail(ErrorKind::Pipeline, "training graphs mix library fingerprints " + g->library_fingerprint + " and " +
                                        train_set[0]->library_fingerprint);
      mcfg.seed = tcfg.seed;
      try {
        mcfg.validate();
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      GATv2Model model(mcfg);
      model.set_norm(norm);
      json history = json::array();
      auto res = train(model, train_set, val_set, tcfg, [&](const EpochMetrics& e) {
        std::printf("epoch %3zu  loss %.5f  val delay MAE %.4f  val area MAE %.4f  (%.1fs)\n", e.epoch, e.train_loss,
                    e.val_delay_mae, e.val_area_mae, e.seconds);
        std::fflush(stdout);
        history.push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"val_delay_mae", e.val_delay_mae},
                           {"val_area_mae", e.val_area_mae},
                           {"seconds", e.seconds}});
      });
      json extra = {{"library_fingerprint", train_set[0]->library_fingerprint},
                    {"dataset_fingerprint", file_fingerprint(in)},
                    {"best_epoch", res.best_epoch},
                    {"epochs_run", res.history.size()},
                    {"train",
                     {{"epochs", tcfg.epochs},
                      {"batch_size", tcfg.batch_size},
                      {"patience", tcfg.patience},
                      {"seed", tcfg.seed},
                      {"split", split},
                      {"val_split", val_split}}}};
      res.model.save(out, extra);
      m.params() = {{"model", mcfg.to_json()}, {"train", extra["train"]}};
      m.results() = {{"best_epoch", res.best_epoch},
                     {"stopped_early", res.stopped_early},
                     {"norm_fingerprint", norm.fingerprint()},
                     {"history", history}};
      m.write(out);
    } else if (*predict) {
      Manifest m("predict");
      m.input("model", model_path);
      m.input("graphs", in);
      m.params()["split"] = split;
      json extra;
      auto model = GATv2Model::load(model_path, &extra);
      auto graphs = selected_copies(load_dataset(in), split);
      std::vector<CircuitGraph> inferred;
      auto t0 = std::chrono::steady_clock::now();
      for (const auto& g : graphs) {
        check_model_library(extra, g);
        inferred.push_back(infer_graph(model, g));
      }
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      save_dataset(inferred, out);
      m.results() = {{"graphs", inferred.size()},
                     {"norm_fingerprint", model.norm().fingerprint()},
                     {"mean_inference_seconds", secs / static_cast<double>(inferred.size())}};
      m.write(out);
    } else if (*reconstruct) {
      Manifest m("reconstruct");
      m.input("inferred", in);
      json rows = json::array();
      for (const auto& g : load_dataset(in)) {
        if (!g.has_labels()) fail(ErrorKind::Pipeline, "graph " + g.meta.value("id", std::string("?")) + " has no predictions");
        auto r = reconstruct_metrics(g, g.labels);
        rows.push_back({{"id", g.meta.value("id", std::string())}, {"delay", r.delay}, {"area", r.area}});
      }
      write_text(out, json{{"designs", rows}}.dump(2) + "\n");
      m.results()["graphs"] = rows.size();
      m.write(out);
    } else if (*sweep_cmd) {
      Manifest m("sweep");
      auto ts = parse_targets(targets);
      m.input("graphs", in);
      m.params() = {{"targets", ts}, {"relative", relative}, {"paths", k_paths}, {"split", split}};
      std::optional<GATv2Model> model;
      json extra;
      if (!model_path.empty()) {
        m.input("model", model_path);
        model = GATv2Model::load(model_path, &extra);
      }
      std::ostringstream csv;
      csv << "design,target,pred_delay,pred_area,swapped_nodes,paths_visited\n";
      std::size_t points = 0;
      for (const auto& g : selected_copies(load_dataset(in), split)) {
        InferredGraph ig;
        if (model) {
          check_model_library(extra, g);
          auto inf = infer_graph(*model, g);
          ig = {inf, inf.labels};
        } else {
          if (!g.has_labels())
            fail(ErrorKind::Pipeline, "graph " + g.meta.value("id", std::string("?")) + " has no labels and no --model was given");
          ig = {g, g.labels};
        }
        double scale = relative ? reconstruct_metrics(ig.base, std::vector<LabelPair>(g.num_nodes())).delay : 1.0;
        std::vector<double> abs_targets;
        for (double t : ts) abs_targets.push_back(t * scale);
        for (const auto& p : sweep_curve(ig, abs_targets, k_paths)) {
          csv << g.meta.value("id", std::string()) << ',' << detail::format_double(p.target) << ','
              << detail::format_double(p.delay) << ',' << detail::format_double(p.area) << ',' << p.swapped.size()
              << ',' << p.paths_visited << '\n';
          ++points;
        }
      }
      write_text(out, csv.str());
      m.results()["points"] = points;
      m.write(out);
    } else if (*eval) {
      Manifest m("eval");
      if (model_path.empty() == predictions_path.empty()) throw UsageError("eval needs exactly one of --model or --predictions");
      m.input("labeled", in);
      m.params()["split"] = split;
      auto graphs = load_dataset(in);
      auto selected = select_split(graphs, split);
      if (selected.empty()) fail(ErrorKind::Pipeline, "no graphs in split '" + split + "'");
      std::vector<CircuitGraph> preds;
      double secs = 0.0;
      if (!model_path.empty()) {
        m.input("model", model_path);
        json extra;
        auto model = GATv2Model::load(model_path, &extra);
        auto t0 = std::chrono::steady_clock::now();
        for (const auto* g : selected) {
          check_model_library(extra, *g);
          preds.push_back(infer_graph(model, *g));
        }
        secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      } else {
        m.input("predictions", predictions_path);
        preds = load_dataset(predictions_path);
      }
      auto summary = evaluate_predictions(selected, preds);
      write_text(out, summary.to_json().dump(2) + "\n");
      m.results() = {{"delay_mae", summary.delay_mae},
                     {"area_mae", summary.area_mae},
                     {"baseline_delay_mae", summary.baseline_delay_mae},
                     {"baseline_area_mae", summary.baseline_area_mae},
                     {"mean_inference_seconds", secs / static_cast<double>(selected.size())}};
      m.write(out);
      std::printf("delay MAE %.4f (baseline %.4f)  area MAE %.4f (baseline %.4f)  over %zu designs\n",
                  summary.delay_mae, summary.baseline_delay_mae, summary.area_mae, summary.baseline_area_mae,
                  selected.size());
    } else if (*report) {
      Manifest m("report");
      auto lib = load_library(lib_path);
      m.input("library", lib_path);
      m.input("graphs", in);
      auto graphs = load_dataset(in);
      if (graphs.empty()) fail(ErrorKind::Pipeline, "dataset '" + in + "' is empty");
      const CircuitGraph* pick = &graphs[0];
      if (!design_id.empty()) {
        pick = nullptr;
        for (const auto& g : graphs)
          if (g.meta.value("id", std::string()) == design_id) pick = &g;
        if (!pick) fail(ErrorKind::Pipeline, "no design with id '" + design_id + "'");
      }
      check_library(*pick, lib);
      m.params()["id"] = pick->meta.value("id", std::string());
      write_text(out, format_report(*pick, analyze(*pick, lib)));
      m.write(out);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return e.kind() == ErrorKind::Numeric ? kExitNumeric : kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return 0;
}
