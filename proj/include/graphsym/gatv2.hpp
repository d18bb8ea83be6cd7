#pragma once

/*!
  \file gatv2.hpp
  \brief GATv2 node-regression network with hand-written backward pass.

  Architecture (float64 throughout):

    encoder  h = dropout(relu(x We + be))
    L times  h = dropout(relu(batchnorm(gatv2(h))))
    head     y = h Wo + bo                              (2 outputs per node)

  GATv2, per head k over message edges j -> i:

    s_j = h_j Ws,  t_i = h_i Wt          (head slices of width head_dim)
    e_ij = a_k . leaky_relu(s_j + t_i)
    alpha_ij = softmax_j(e_ij)
    out_i = concat_k sum_j alpha_ij s_j  + bias

  Message edges are the circuit edges in both directions plus a self loop
  on every node. Batch normalization uses statistics over all nodes of the
  batch in training mode and running statistics in eval mode. The loss is
  the mean squared error over both outputs of every node.
*/

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "graphsym/circuit_graph.hpp"
#include "graphsym/detail/random.hpp"
#include "graphsym/error.hpp"
#include "graphsym/features.hpp"
#include "graphsym/metrics.hpp"
#include "graphsym/reconstruct.hpp"

namespace graphsym {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  std::size_t in_dim = kFeatureWidth;
  std::size_t hidden = 64;
  std::size_t layers = 6;
  std::size_t heads = 8;
  std::size_t head_dim = 8;
  std::size_t out_dim = 2;
  double dropout_p = 0.1;
  double leaky_slope = 0.2;
  double lr = 0.01;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  std::uint64_t seed = 0;

  void validate() const {
    if (heads * head_dim != hidden) fail(ErrorKind::Domain, "heads * head_dim must equal hidden");
    if (out_dim != 2) fail(ErrorKind::Domain, "out_dim must be 2");
    if (in_dim == 0 || layers == 0) fail(ErrorKind::Domain, "in_dim and layers must be positive");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail(ErrorKind::Domain, "dropout_p must be in [0, 1)");
    if (!(lr >= 0.0)) fail(ErrorKind::Domain, "lr must be non-negative");
  }

  nlohmann::json to_json() const {
    return {{"in_dim", in_dim},           {"hidden", hidden},   {"layers", layers},         {"heads", heads},
            {"head_dim", head_dim},       {"out_dim", out_dim}, {"dropout_p", dropout_p},   {"leaky_slope", leaky_slope},
            {"lr", lr},                   {"bn_momentum", bn_momentum}, {"bn_eps", bn_eps}, {"seed", seed}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
      j.at("in_dim").get_to(c.in_dim);
      j.at("hidden").get_to(c.hidden);
      j.at("layers").get_to(c.layers);
      j.at("heads").get_to(c.heads);
      j.at("head_dim").get_to(c.head_dim);
      j.at("out_dim").get_to(c.out_dim);
      j.at("dropout_p").get_to(c.dropout_p);
      j.at("leaky_slope").get_to(c.leaky_slope);
      j.at("lr").get_to(c.lr);
      j.at("bn_momentum").get_to(c.bn_momentum);
      j.at("bn_eps").get_to(c.bn_eps);
      j.at("seed").get_to(c.seed);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Checkpoint, std::string("malformed model config: ") + e.what());
    }
    c.validate();
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Several graphs merged into one disconnected graph, message edges in CSR form by destination.
struct GraphBatch {
  RowMat x;                           // N x in_dim, normalized
  RowMat y;                           // N x 2, normalized (empty when unlabeled)
  std::vector<std::size_t> in_ptr;    // N + 1
  std::vector<std::uint32_t> in_src;  // source node of each message edge
  std::vector<std::size_t> offsets;   // first node of each graph, plus N

  std::size_t num_nodes() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t num_edges() const { return in_src.size(); }
};

/// Incoming message sources of v: itself, then its fanin, then its fanout.
inline std::vector<NodeId> message_sources(const CircuitGraph& g, NodeId v) {
  std::vector<NodeId> out{v};
  out.insert(out.end(), g.fanin(v).begin(), g.fanin(v).end());
  out.insert(out.end(), g.fanout(v).begin(), g.fanout(v).end());
  return out;
}

inline GraphBatch make_batch(const std::vector<const CircuitGraph*>& graphs, const NormStats& norm, bool with_labels) {
  GraphBatch b;
  std::size_t n = 0;
  for (const auto* g : graphs) {
    b.offsets.push_back(n);
    n += g->num_nodes();
  }
  b.offsets.push_back(n);
  b.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kFeatureWidth));
  if (with_labels) b.y.resize(static_cast<Eigen::Index>(n), 2);
  b.in_ptr.push_back(0);
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const CircuitGraph& g = *graphs[gi];
    const auto base = static_cast<std::uint32_t>(b.offsets[gi]);
    const auto rows = static_cast<Eigen::Index>(g.num_nodes());
    b.x.middleRows(base, rows) = feature_matrix(g, norm);
    if (with_labels) b.y.middleRows(base, rows) = label_matrix(g, norm);
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      for (NodeId u : message_sources(g, v)) b.in_src.push_back(base + u);
      b.in_ptr.push_back(b.in_src.size());
    }
  }
  return b;
}

inline GraphBatch make_batch(const CircuitGraph& g, const NormStats& norm, bool with_labels) {
  return make_batch(std::vector<const CircuitGraph*>{&g}, norm, with_labels);
}

/// Named view into the flat parameter vector.
struct ParamBlock {
  std::string name;
  Eigen::Index rows = 0, cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

namespace detail {

using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct LayerCache {
  RowMat h_in, s, t;   // N x hidden
  RowMat z;            // E x hidden, pre-activation of the attention MLP
  RowMat alpha;        // E x heads
  RowMat xhat;         // N x hidden, normalized aggregate
  Eigen::RowVectorXd inv_std;
  Eigen::RowVectorXd batch_mean, batch_var;  // training mode only
  RowMat bn_out;       // N x hidden, before ReLU
  RowMat mask;         // dropout mask incl. 1/(1-p) scaling; empty when off
};

struct ForwardCache {
  bool training = false;
  RowMat enc_pre, enc_mask;
  std::vector<LayerCache> layers;
  RowMat h_last;
};

inline double leaky(double z, double slope) { return z > 0.0 ? z : slope * z; }

}  // namespace detail

class GATv2Model {
public:
  GATv2Model() = default;

  explicit GATv2Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    build_layout();
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_params_));
    running_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * cfg_.layers * cfg_.hidden));
    for (std::size_t l = 0; l < cfg_.layers; ++l) running_slot(l, 1).setOnes();
    adam_m_ = adam_v_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_params_));
    init_params();
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<ParamBlock>& layout() const { return layout_; }
  std::size_t num_params() const { return num_params_; }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  const Eigen::VectorXd& running_stats() const { return running_; }
  std::uint64_t step() const { return step_; }

  const NormStats& norm() const { return norm_; }
  void set_norm(const NormStats& n) { norm_ = n; }
  /// Throws a checkpoint error when `n` is not the statistics this model was trained with.
  void check_norm(const NormStats& n) const {
    if (n.fingerprint() != norm_.fingerprint())
      fail(ErrorKind::Checkpoint, "normalization stats fingerprint " + n.fingerprint() +
                                      " does not match the model's " + norm_.fingerprint());
  }

  const ParamBlock& block(const std::string& name) const {
    for (const auto& b : layout_)
      if (b.name == name) return b;
    fail(ErrorKind::Domain, "no parameter block " + name);
  }
  detail::MapMat mat(const std::string& name) { return mat(block(name)); }
  detail::ConstMapMat mat(const std::string& name) const { return mat(block(name)); }

  /*! Forward pass. `rng` draws dropout masks and may be null when training
      is false or dropout_p is 0. Fills `cache` when given. */
  RowMat forward(const GraphBatch& b, bool training, std::mt19937_64* rng = nullptr,
                 detail::ForwardCache* cache = nullptr) const {
    if (static_cast<std::size_t>(b.x.cols()) != cfg_.in_dim)
      fail(ErrorKind::Structural, "feature width " + std::to_string(b.x.cols()) + " does not match model input " +
                                      std::to_string(cfg_.in_dim));
    if (b.in_ptr.size() != b.num_nodes() + 1) fail(ErrorKind::Structural, "batch edge index does not match node count");
    const bool drop = training && cfg_.dropout_p > 0.0;
    if (drop && !rng) fail(ErrorKind::Domain, "training-mode dropout needs a random generator");
    detail::ForwardCache local;
    detail::ForwardCache& c = cache ? *cache : local;
    c.training = training;
    c.layers.assign(cfg_.layers, {});

    c.enc_pre = b.x * mat("enc.W");
    c.enc_pre.rowwise() += mat("enc.b").row(0);
    RowMat h = c.enc_pre.cwiseMax(0.0);
    c.enc_mask.resize(0, 0);
    if (drop) {
      c.enc_mask = dropout_mask(h.rows(), h.cols(), *rng);
      h = h.cwiseProduct(c.enc_mask);
    }
    for (std::size_t l = 0; l < cfg_.layers; ++l) h = layer_forward(b, l, h, training, rng, c.layers[l]);
    c.h_last = h;
    RowMat y = h * mat("head.W");
    y.rowwise() += mat("head.b").row(0);
    return y;
  }

  /// Mean squared error over all entries.
  static double loss(const RowMat& pred, const RowMat& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) fail(ErrorKind::Structural, "loss shape mismatch");
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
  }

  static RowMat loss_grad(const RowMat& pred, const RowMat& target) {
    return 2.0 * (pred - target) / static_cast<double>(pred.size());
  }

  /// Gradient of the loss w.r.t. every parameter, given dL/dy, using a cache from forward().
  Eigen::VectorXd backward(const GraphBatch& b, const detail::ForwardCache& c, const RowMat& dy) const {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_params_));
    auto g = [&](const std::string& name) { return gmat(grad, block(name)); };
    g("head.W") = c.h_last.transpose() * dy;
    g("head.b") = dy.colwise().sum();
    RowMat dh = dy * mat("head.W").transpose();
    for (std::size_t l = cfg_.layers; l-- > 0;) dh = layer_backward(b, l, c.layers[l], dh, grad, c.training);
    if (c.enc_mask.size()) dh = dh.cwiseProduct(c.enc_mask);
    dh = dh.cwiseProduct((c.enc_pre.array() > 0.0).cast<double>().matrix());
    g("enc.W") = b.x.transpose() * dh;
    g("enc.b") = dh.colwise().sum();
    return grad;
  }

  /// Folds a training-mode cache's batch statistics into the running statistics.
  void update_running_stats(const detail::ForwardCache& c, std::size_t num_nodes) {
    const double m = cfg_.bn_momentum;
    const double n = static_cast<double>(num_nodes);
    const double unbias = num_nodes > 1 ? n / (n - 1.0) : 1.0;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      running_slot(l, 0) = (1.0 - m) * running_slot(l, 0) + m * c.layers[l].batch_mean.transpose();
      running_slot(l, 1) = (1.0 - m) * running_slot(l, 1) + m * unbias * c.layers[l].batch_var.transpose();
    }
  }

  /// One Adam step with bias correction.
  void adam_step(const Eigen::VectorXd& grad) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++step_;
    adam_m_ = b1 * adam_m_ + (1.0 - b1) * grad;
    adam_v_ = b2 * adam_v_ + (1.0 - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    if (cfg_.lr == 0.0) return;
    params_.array() -= cfg_.lr * (adam_m_.array() / c1) / ((adam_v_.array() / c2).sqrt() + eps);
  }

  /// Eval-mode prediction, denormalized, indexed by node id.
  std::vector<LabelPair> predict(const CircuitGraph& g) const {
    auto b = make_batch(g, norm_, false);
    return denormalize_labels(forward(b, false), norm_);
  }

  // Checkpoint file: one magic line, one JSON header line, then little-endian
  // float64 arrays in this order: parameters (layout order), batch-norm
  // running statistics (per layer: mean, var), Adam first moments, Adam
  // second moments.
  static constexpr const char* kMagic = "GRAPHSYM-GATV2-CHECKPOINT";
  static constexpr int kSchemaVersion = 1;

  void save(const std::string& path, const nlohmann::json& extra = nlohmann::json::object()) const {
    static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
    nlohmann::json layout = nlohmann::json::array();
    for (const auto& bl : layout_) layout.push_back({bl.name, bl.rows, bl.cols});
    nlohmann::json header = {{"schema_version", kSchemaVersion}, {"config", cfg_.to_json()},
                             {"norm", norm_.to_json()},          {"norm_fingerprint", norm_.fingerprint()},
                             {"step", step_},                    {"num_params", num_params_},
                             {"layout", layout},                 {"extra", extra}};
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorKind::Checkpoint, "cannot write checkpoint " + path);
    os << kMagic << "\n" << header.dump() << "\n";
    auto put = [&](const Eigen::VectorXd& v) {
      os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    put(params_);
    put(running_);
    put(adam_m_);
    put(adam_v_);
    if (!os) fail(ErrorKind::Checkpoint, "failed writing checkpoint " + path);
  }

  static GATv2Model load(const std::string& path, nlohmann::json* extra = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::Checkpoint, "cannot open checkpoint " + path);
    std::string magic, head;
    std::getline(is, magic);
    if (magic != kMagic) fail(ErrorKind::Checkpoint, path + " is not a model checkpoint");
    std::getline(is, head);
    nlohmann::json h;
    try {
      h = nlohmann::json::parse(head);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Checkpoint, std::string("corrupt checkpoint header: ") + e.what());
    }
    if (h.value("schema_version", 0) != kSchemaVersion) fail(ErrorKind::Checkpoint, "unsupported checkpoint schema");
    GATv2Model m(ModelConfig::from_json(h.at("config")));
    try {
      m.norm_ = NormStats::from_json(h.at("norm"));
    } catch (const Error& e) {
      fail(ErrorKind::Checkpoint, std::string("checkpoint normalization stats: ") + e.what());
    }
    if (m.norm_.fingerprint() != h.value("norm_fingerprint", ""))
      fail(ErrorKind::Checkpoint, "checkpoint normalization fingerprint mismatch");
    if (h.value("num_params", std::size_t{0}) != m.num_params_)
      fail(ErrorKind::Checkpoint, "checkpoint parameter count does not match its config");
    m.step_ = h.value("step", std::uint64_t{0});
    auto get = [&](Eigen::VectorXd& v) {
      is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
      if (!is) fail(ErrorKind::Checkpoint, "truncated checkpoint " + path);
    };
    get(m.params_);
    get(m.running_);
    get(m.adam_m_);
    get(m.adam_v_);
    if (is.peek() != std::char_traits<char>::eof()) fail(ErrorKind::Checkpoint, "trailing bytes in checkpoint " + path);
    if (!m.params_.allFinite()) fail(ErrorKind::Checkpoint, "checkpoint contains non-finite parameters");
    if (extra) *extra = h.value("extra", nlohmann::json::object());
    return m;
  }

  friend bool operator==(const GATv2Model& a, const GATv2Model& b) {
    return a.cfg_ == b.cfg_ && a.norm_ == b.norm_ && a.step_ == b.step_ && a.params_ == b.params_ &&
           a.running_ == b.running_ && a.adam_m_ == b.adam_m_ && a.adam_v_ == b.adam_v_;
  }

private:
  ModelConfig cfg_;
  NormStats norm_;
  std::vector<ParamBlock> layout_;
  std::size_t num_params_ = 0;
  Eigen::VectorXd params_, running_, adam_m_, adam_v_;
  std::uint64_t step_ = 0;

  static std::string lname(std::size_t l, const char* what) { return "gat" + std::to_string(l) + "." + what; }

  void add_block(std::string name, std::size_t rows, std::size_t cols) {
    layout_.push_back({std::move(name), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols), num_params_});
    num_params_ += rows * cols;
  }

  void build_layout() {
    const std::size_t hd = cfg_.hidden;
    add_block("enc.W", cfg_.in_dim, hd);
    add_block("enc.b", 1, hd);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      add_block(lname(l, "Ws"), hd, hd);
      add_block(lname(l, "Wt"), hd, hd);
      add_block(lname(l, "att"), cfg_.heads, cfg_.head_dim);
      add_block(lname(l, "bias"), 1, hd);
      add_block(lname(l, "bn_gamma"), 1, hd);
      add_block(lname(l, "bn_beta"), 1, hd);
    }
    add_block("head.W", hd, cfg_.out_dim);
    add_block("head.b", 1, cfg_.out_dim);
  }

  void init_params() {
    std::mt19937_64 rng(cfg_.seed);
    auto glorot = [&](const std::string& name, double fan_in, double fan_out) {
      double limit = std::sqrt(6.0 / (fan_in + fan_out));
      auto m = mat(name);
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = (2.0 * detail::unit_draw(rng) - 1.0) * limit;
    };
    const double hd = static_cast<double>(cfg_.hidden);
    glorot("enc.W", static_cast<double>(cfg_.in_dim), hd);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      glorot(lname(l, "Ws"), hd, hd);
      glorot(lname(l, "Wt"), hd, hd);
      glorot(lname(l, "att"), static_cast<double>(cfg_.head_dim), 1.0);
      mat(lname(l, "bn_gamma")).setOnes();
    }
    glorot("head.W", hd, static_cast<double>(cfg_.out_dim));
  }

  detail::MapMat mat(const ParamBlock& b) { return {params_.data() + b.offset, b.rows, b.cols}; }
  detail::ConstMapMat mat(const ParamBlock& b) const { return {params_.data() + b.offset, b.rows, b.cols}; }
  static detail::MapMat gmat(Eigen::VectorXd& grad, const ParamBlock& b) { return {grad.data() + b.offset, b.rows, b.cols}; }

  Eigen::VectorBlock<Eigen::VectorXd> running_slot(std::size_t l, std::size_t which) {
    return running_.segment(static_cast<Eigen::Index>((2 * l + which) * cfg_.hidden), static_cast<Eigen::Index>(cfg_.hidden));
  }
  Eigen::RowVectorXd running_mean(std::size_t l) const {
    return running_.segment(static_cast<Eigen::Index>(2 * l * cfg_.hidden), static_cast<Eigen::Index>(cfg_.hidden)).transpose();
  }
  Eigen::RowVectorXd running_var(std::size_t l) const {
    return running_.segment(static_cast<Eigen::Index>((2 * l + 1) * cfg_.hidden), static_cast<Eigen::Index>(cfg_.hidden)).transpose();
  }

  RowMat dropout_mask(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) const {
    RowMat m(rows, cols);
    const double keep = 1.0 / (1.0 - cfg_.dropout_p);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = detail::unit_draw(rng) < cfg_.dropout_p ? 0.0 : keep;
    return m;
  }

  RowMat layer_forward(const GraphBatch& b, std::size_t l, const RowMat& h, bool training, std::mt19937_64* rng,
                       detail::LayerCache& c) const {
    const std::size_t n = b.num_nodes(), heads = cfg_.heads, hd = cfg_.head_dim;
    const double slope = cfg_.leaky_slope;
    auto att = mat(lname(l, "att"));
    c.h_in = h;
    c.s = h * mat(lname(l, "Ws"));
    c.t = h * mat(lname(l, "Wt"));
    c.z.resize(static_cast<Eigen::Index>(b.num_edges()), static_cast<Eigen::Index>(cfg_.hidden));
    c.alpha.resize(static_cast<Eigen::Index>(b.num_edges()), static_cast<Eigen::Index>(heads));
    RowMat agg = RowMat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg_.hidden));

    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t e0 = b.in_ptr[i], e1 = b.in_ptr[i + 1];
      for (std::size_t k = 0; k < heads; ++k) {
        const auto col0 = static_cast<Eigen::Index>(k * hd);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t e = e0; e < e1; ++e) {
          const std::size_t j = b.in_src[e];
          double score = 0.0;
          for (std::size_t q = 0; q < hd; ++q) {
            const auto col = col0 + static_cast<Eigen::Index>(q);
            const double z = c.s(static_cast<Eigen::Index>(j), col) + c.t(static_cast<Eigen::Index>(i), col);
            c.z(static_cast<Eigen::Index>(e), col) = z;
            score += att(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(q)) * detail::leaky(z, slope);
          }
          c.alpha(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(k)) = score;
          mx = std::max(mx, score);
        }
        double denom = 0.0;
        for (std::size_t e = e0; e < e1; ++e) {
          double& a = c.alpha(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(k));
          a = std::exp(a - mx);
          denom += a;
        }
        for (std::size_t e = e0; e < e1; ++e) {
          double& a = c.alpha(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(k));
          a /= denom;
          agg.row(static_cast<Eigen::Index>(i)).segment(col0, static_cast<Eigen::Index>(hd)) +=
              a * c.s.row(static_cast<Eigen::Index>(b.in_src[e])).segment(col0, static_cast<Eigen::Index>(hd));
        }
      }
    }
    agg.rowwise() += mat(lname(l, "bias")).row(0);

    Eigen::RowVectorXd mean, var;
    if (training) {
      mean = agg.colwise().mean();
      var = (agg.rowwise() - mean).array().square().colwise().mean().matrix();
      c.batch_mean = mean;
      c.batch_var = var;
    } else {
      mean = running_mean(l);
      var = running_var(l);
    }
    c.inv_std = (var.array() + cfg_.bn_eps).rsqrt().matrix();
    c.xhat = (agg.rowwise() - mean).array().rowwise() * c.inv_std.array();
    c.bn_out = (c.xhat.array().rowwise() * mat(lname(l, "bn_gamma")).row(0).array()).matrix();
    c.bn_out.rowwise() += mat(lname(l, "bn_beta")).row(0);
    RowMat out = c.bn_out.cwiseMax(0.0);
    c.mask.resize(0, 0);
    if (training && cfg_.dropout_p > 0.0) {
      c.mask = dropout_mask(out.rows(), out.cols(), *rng);
      out = out.cwiseProduct(c.mask);
    }
    return out;
  }

  RowMat layer_backward(const GraphBatch& b, std::size_t l, const detail::LayerCache& c, RowMat d,
                        Eigen::VectorXd& grad, bool training) const {
    const std::size_t n = b.num_nodes(), heads = cfg_.heads, hd = cfg_.head_dim;
    const double slope = cfg_.leaky_slope;
    if (c.mask.size()) d = d.cwiseProduct(c.mask);
    d = d.cwiseProduct((c.bn_out.array() > 0.0).cast<double>().matrix());

    gmat(grad, block(lname(l, "bn_beta"))) = d.colwise().sum();
    gmat(grad, block(lname(l, "bn_gamma"))) = d.cwiseProduct(c.xhat).colwise().sum();
    RowMat dxhat = (d.array().rowwise() * mat(lname(l, "bn_gamma")).row(0).array()).matrix();
    RowMat dagg;
    if (training) {
      const double nn = static_cast<double>(n);
      Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
      Eigen::RowVectorXd sum_dx = dxhat.cwiseProduct(c.xhat).colwise().sum();
      dagg = ((nn * dxhat.array()).rowwise() - sum_d.array() - (c.xhat.array().rowwise() * sum_dx.array())).matrix();
      dagg = (dagg.array().rowwise() * (c.inv_std.array() / nn)).matrix();
    } else {
      dagg = (dxhat.array().rowwise() * c.inv_std.array()).matrix();
    }
    gmat(grad, block(lname(l, "bias"))) = dagg.colwise().sum();

    auto att = mat(lname(l, "att"));
    auto datt = gmat(grad, block(lname(l, "att")));
    RowMat ds = RowMat::Zero(c.s.rows(), c.s.cols());
    RowMat dt = RowMat::Zero(c.t.rows(), c.t.cols());
    std::vector<double> dalpha;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t e0 = b.in_ptr[i], e1 = b.in_ptr[i + 1];
      const auto ii = static_cast<Eigen::Index>(i);
      dalpha.assign(e1 - e0, 0.0);
      for (std::size_t k = 0; k < heads; ++k) {
        const auto col0 = static_cast<Eigen::Index>(k * hd), kk = static_cast<Eigen::Index>(k);
        const auto seg = static_cast<Eigen::Index>(hd);
        double weighted = 0.0;
        for (std::size_t e = e0; e < e1; ++e) {
          const auto j = static_cast<Eigen::Index>(b.in_src[e]);
          const auto ee = static_cast<Eigen::Index>(e);
          dalpha[e - e0] = dagg.row(ii).segment(col0, seg).dot(c.s.row(j).segment(col0, seg));
          weighted += c.alpha(ee, kk) * dalpha[e - e0];
          ds.row(j).segment(col0, seg) += c.alpha(ee, kk) * dagg.row(ii).segment(col0, seg);
        }
        for (std::size_t e = e0; e < e1; ++e) {
          const auto j = static_cast<Eigen::Index>(b.in_src[e]);
          const auto ee = static_cast<Eigen::Index>(e);
          const double de = c.alpha(ee, kk) * (dalpha[e - e0] - weighted);
          for (std::size_t q = 0; q < hd; ++q) {
            const auto col = col0 + static_cast<Eigen::Index>(q);
            const double z = c.z(ee, col);
            datt(kk, static_cast<Eigen::Index>(q)) += de * detail::leaky(z, slope);
            const double dz = de * att(kk, static_cast<Eigen::Index>(q)) * (z > 0.0 ? 1.0 : slope);
            ds(j, col) += dz;
            dt(ii, col) += dz;
          }
        }
      }
    }
    gmat(grad, block(lname(l, "Ws"))) = c.h_in.transpose() * ds;
    gmat(grad, block(lname(l, "Wt"))) = c.h_in.transpose() * dt;
    return ds * mat(lname(l, "Ws")).transpose() + dt * mat(lname(l, "Wt")).transpose();
  }
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_delay_mae = 0.0;
  double val_area_mae = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  GATv2Model model;  // parameters of the best validation epoch
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// Design-level errors of a model on labeled graphs (delay, area MAE against post metrics).
inline EvalSummary evaluate_model(const GATv2Model& model, const std::vector<const CircuitGraph*>& graphs) {
  std::vector<DesignResult> rows;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const CircuitGraph& g = *graphs[i];
    auto pred = reconstruct_metrics(g, model.predict(g));
    auto gt = reconstruct_metrics(g, g.labels);
    auto base = reconstruct_metrics(g, std::vector<LabelPair>(g.num_nodes()));
    rows.push_back({g.meta.value("id", std::to_string(i)), pred.delay, gt.delay, base.delay, pred.area, gt.area, base.area});
  }
  return EvalSummary::from(std::move(rows));
}

/*! \brief Adam training with early stopping on validation MAE.

  Deterministic for a fixed seed: batch order and dropout masks come from
  one mt19937_64 seeded by `tcfg.seed`. The returned model holds the
  parameters of the epoch with the lowest delay + area validation MAE.
  `on_epoch` (optional) sees each epoch's metrics as they are produced.
*/
inline TrainResult train(GATv2Model model, const std::vector<const CircuitGraph*>& train_set,
                         const std::vector<const CircuitGraph*>& val_set, const TrainConfig& tcfg,
                         const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  if (train_set.empty()) fail(ErrorKind::Domain, "training set is empty");
  if (tcfg.batch_size == 0) fail(ErrorKind::Domain, "batch_size must be positive");
  std::mt19937_64 rng(tcfg.seed);
  const NormStats& norm = model.norm();
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult res;
  res.model = model;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t batch_id = 0;
  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    detail::shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size, ++batch_id) {
      std::vector<const CircuitGraph*> members;
      for (std::size_t i = start; i < std::min(order.size(), start + tcfg.batch_size); ++i)
        members.push_back(train_set[order[i]]);
      auto batch = make_batch(members, norm, true);
      detail::ForwardCache cache;
      RowMat y = model.forward(batch, true, &rng, &cache);
      double l = GATv2Model::loss(y, batch.y);
      if (!std::isfinite(l)) fail(ErrorKind::Numeric, "non-finite loss in batch " + std::to_string(batch_id));
      model.adam_step(model.backward(batch, cache, GATv2Model::loss_grad(y, batch.y)));
      model.update_running_stats(cache, batch.num_nodes());
      if (!model.params().allFinite()) fail(ErrorKind::Numeric, "non-finite parameters after batch " + std::to_string(batch_id));
      loss_sum += l;
      ++loss_count;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(loss_count);
    if (!val_set.empty()) {
      auto s = evaluate_model(model, val_set);
      m.val_delay_mae = s.delay_mae;
      m.val_area_mae = s.area_mae;
    }
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(m);
    if (on_epoch) on_epoch(m);

    double score = val_set.empty() ? m.train_loss : m.val_delay_mae + m.val_area_mae;
    if (score < best) {
      best = score;
      since_best = 0;
      res.best_epoch = epoch;
      res.model = model;
    } else if (++since_best >= tcfg.patience) {
      res.stopped_early = true;
      break;
    }
  }
  return res;
}

}  // namespace graphsym
