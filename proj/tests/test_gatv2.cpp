#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "graphsym/gatv2.hpp"
#include "graphsym/physopt.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

using namespace graphsym;
using graphsym::testing::adder_graph;

namespace {

CircuitGraph labeled_adder(int width, std::uint64_t seed) {
  auto lib = default_library(0);
  auto pre = adder_graph(width, seed, lib);
  SynthConfig cfg;
  cfg.target_delay = aggressive_target(pre, lib);
  return label_graph(pre, synthesize(pre, lib, cfg).graph, lib);
}

ModelConfig small_config(std::size_t layers = 2, double dropout = 0.0) {
  ModelConfig c;
  c.hidden = 8;
  c.heads = 2;
  c.head_dim = 4;
  c.layers = layers;
  c.dropout_p = dropout;
  c.seed = 5;
  return c;
}

GraphBatch random_batch(std::size_t n, std::size_t in_dim, const std::vector<std::vector<std::uint32_t>>& sources,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  GraphBatch b;
  b.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in_dim));
  for (Eigen::Index i = 0; i < b.x.size(); ++i) b.x.data()[i] = nd(rng);
  b.in_ptr.push_back(0);
  for (const auto& s : sources) {
    b.in_src.insert(b.in_src.end(), s.begin(), s.end());
    b.in_ptr.push_back(b.in_src.size());
  }
  b.offsets = {0, n};
  return b;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST(GATv2Layer, SelfLoopOnlyHasUnitAttention) {
  GATv2Model m(small_config(1));
  auto b = random_batch(1, kFeatureWidth, {{0}}, 1);
  detail::ForwardCache c;
  m.forward(b, false, nullptr, &c);
  for (Eigen::Index k = 0; k < 2; ++k) EXPECT_DOUBLE_EQ(c.layers[0].alpha(0, k), 1.0);
}

TEST(GATv2Layer, EqualScoresSplitEvenly) {
  GATv2Model m(small_config(1));
  auto b = random_batch(3, kFeatureWidth, {{1, 2}, {1}, {2}}, 2);
  b.x.row(2) = b.x.row(1);
  detail::ForwardCache c;
  m.forward(b, false, nullptr, &c);
  for (Eigen::Index k = 0; k < 2; ++k) {
    EXPECT_NEAR(c.layers[0].alpha(0, k), 0.5, 1e-15);
    EXPECT_NEAR(c.layers[0].alpha(1, k), 0.5, 1e-15);
  }
}

TEST(GATv2Layer, AttentionRowsSumToOne) {
  auto g = labeled_adder(8, 1);
  GATv2Model m(ModelConfig{});
  m.set_norm(fit_normalization(std::vector<CircuitGraph>{g}));
  auto b = make_batch(g, m.norm(), false);
  detail::ForwardCache c;
  m.forward(b, false, nullptr, &c);
  for (const auto& layer : c.layers)
    for (std::size_t i = 0; i < b.num_nodes(); ++i)
      for (Eigen::Index k = 0; k < 8; ++k) {
        double s = 0;
        for (std::size_t e = b.in_ptr[i]; e < b.in_ptr[i + 1]; ++e) s += layer.alpha(static_cast<Eigen::Index>(e), k);
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
}

TEST(GATv2Layer, MatchesStraightforwardFormula) {
  // One layer, eval mode, identity batch norm: bn_out * sqrt(1 + eps) is the raw layer output.
  ModelConfig cfg = small_config(1);
  GATv2Model m(cfg);
  m.mat("gat0.bias").setRandom();
  std::vector<std::vector<std::uint32_t>> src{{0, 1, 3}, {1, 0, 2}, {2, 1, 4}, {3, 0}, {4, 2, 3}};
  auto b = random_batch(5, kFeatureWidth, src, 3);
  detail::ForwardCache c;
  m.forward(b, false, nullptr, &c);
  RowMat got = c.layers[0].bn_out * std::sqrt(1.0 + cfg.bn_eps);

  // Reference: W acts on the concatenation [h_i || h_j].
  const auto& h = c.layers[0].h_in;
  const std::size_t H = cfg.heads, C = cfg.head_dim, D = cfg.hidden;
  RowMat W(2 * D, D);
  W.topRows(static_cast<Eigen::Index>(D)) = m.mat("gat0.Wt");
  W.bottomRows(static_cast<Eigen::Index>(D)) = m.mat("gat0.Ws");
  auto att = m.mat("gat0.att");
  auto bias = m.mat("gat0.bias");
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t k = 0; k < H; ++k) {
      std::vector<double> e;
      for (auto j : src[i]) {
        std::vector<double> cat(2 * D);
        for (std::size_t q = 0; q < D; ++q) {
          cat[q] = h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q));
          cat[D + q] = h(j, static_cast<Eigen::Index>(q));
        }
        double score = 0;
        for (std::size_t q = 0; q < C; ++q) {
          double z = 0;
          for (std::size_t r = 0; r < 2 * D; ++r) z += cat[r] * W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k * C + q));
          score += att(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(q)) * (z > 0 ? z : cfg.leaky_slope * z);
        }
        e.push_back(score);
      }
      double denom = 0;
      for (double v : e) denom += std::exp(v);
      for (std::size_t q = 0; q < C; ++q) {
        double out = bias(0, static_cast<Eigen::Index>(k * C + q));
        for (std::size_t t = 0; t < src[i].size(); ++t) {
          double msg = 0;
          for (std::size_t r = 0; r < D; ++r)
            msg += h(src[i][t], static_cast<Eigen::Index>(r)) * W(static_cast<Eigen::Index>(D + r), static_cast<Eigen::Index>(k * C + q));
          out += std::exp(e[t]) / denom * msg;
        }
        EXPECT_NEAR(got(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k * C + q)), out, 1e-10);
      }
    }
  }
}

TEST(GATv2Forward, EvalModeIsDeterministic) {
  auto g = labeled_adder(4, 0);
  GATv2Model m(ModelConfig{});
  m.set_norm(fit_normalization(std::vector<CircuitGraph>{g}));
  auto b = make_batch(g, m.norm(), false);
  EXPECT_EQ(m.forward(b, false), m.forward(b, false));
}

TEST(GATv2Forward, ZeroHeadWeightsGiveBias) {
  GATv2Model m(small_config());
  m.mat("head.W").setZero();
  m.mat("head.b") << 0.25, -1.5;
  auto b = random_batch(3, kFeatureWidth, {{0, 1}, {1, 2}, {2}}, 4);
  RowMat y = m.forward(b, false);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_EQ(y(i, 0), 0.25);
    EXPECT_EQ(y(i, 1), -1.5);
  }
}

TEST(GATv2Forward, SingleNodeGraph) {
  GATv2Model m(ModelConfig{});
  auto b = random_batch(1, kFeatureWidth, {{0}}, 5);
  RowMat y = m.forward(b, false);
  EXPECT_EQ(y.rows(), 1);
  EXPECT_EQ(y.cols(), 2);
  EXPECT_TRUE(y.allFinite());
}

TEST(GATv2Forward, PermutationEquivariantInEvalMode) {
  auto g = labeled_adder(4, 2);
  GATv2Model m(ModelConfig{});
  m.set_norm(fit_normalization(std::vector<CircuitGraph>{g}));
  auto b = make_batch(g, m.norm(), false);
  const std::size_t n = b.num_nodes();
  std::vector<std::uint32_t> perm(n);  // new index of old node
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  std::mt19937_64 rng(9);
  detail::shuffle(perm, rng);
  std::vector<std::uint32_t> inv(n);
  for (std::size_t i = 0; i < n; ++i) inv[perm[i]] = static_cast<std::uint32_t>(i);
  GraphBatch p;
  p.x.resize(b.x.rows(), b.x.cols());
  p.in_ptr.push_back(0);
  for (std::size_t ni = 0; ni < n; ++ni) {
    std::size_t old = inv[ni];
    p.x.row(static_cast<Eigen::Index>(ni)) = b.x.row(static_cast<Eigen::Index>(old));
    for (std::size_t e = b.in_ptr[old]; e < b.in_ptr[old + 1]; ++e) p.in_src.push_back(perm[b.in_src[e]]);
    p.in_ptr.push_back(p.in_src.size());
  }
  p.offsets = {0, n};
  RowMat y = m.forward(b, false), yp = m.forward(p, false);
  for (std::size_t i = 0; i < n; ++i)
    EXPECT_LT((y.row(static_cast<Eigen::Index>(i)) - yp.row(perm[i])).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GATv2Loss, ZeroAtExactMatchAndQuadratic) {
  RowMat p(3, 2), t(3, 2);
  p << 1, 2, 3, 4, 5, 6;
  t = p;
  EXPECT_EQ(GATv2Model::loss(p, t), 0.0);
  RowMat q = t;
  q(1, 0) += 0.3;
  q(2, 1) -= 0.7;
  RowMat q2 = t + 2.0 * (q - t);
  EXPECT_NEAR(GATv2Model::loss(q2, t), 4.0 * GATv2Model::loss(q, t), 1e-15);

  GATv2Model m(small_config());
  auto b = random_batch(3, kFeatureWidth, {{0, 1}, {1, 2}, {2}}, 6);
  detail::ForwardCache c;
  RowMat y = m.forward(b, false, nullptr, &c);
  auto grad = m.backward(b, c, GATv2Model::loss_grad(y, y));
  const auto& hb = m.block("head.b");
  for (std::size_t i = 0; i < hb.size(); ++i) EXPECT_EQ(grad[static_cast<Eigen::Index>(hb.offset + i)], 0.0);
}

namespace {

GraphBatch labeled_batch_of_about_30_nodes(GATv2Model& m) {
  auto g = labeled_adder(2, 0);
  m.set_norm(fit_normalization(std::vector<CircuitGraph>{labeled_adder(4, 0)}));
  auto b = make_batch(g, m.norm(), true);
  return b;
}

}  // namespace

TEST(GATv2Gradient, FiniteDifferencesEvalMode) {
  ModelConfig cfg;
  cfg.dropout_p = 0.0;
  cfg.seed = 11;
  GATv2Model m(cfg);
  auto b = labeled_batch_of_about_30_nodes(m);
  ASSERT_GE(b.num_nodes(), 20u);
  // Give the running statistics non-trivial values first.
  detail::ForwardCache c;
  m.forward(b, true, nullptr, &c);
  m.update_running_stats(c, b.num_nodes());
  auto r = graphsym::testing::gradient_check(m, b, false, 0.25, 1);
  EXPECT_GT(r.checked, 1000u);
  EXPECT_LT(r.excluded * 20, r.checked);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GATv2Gradient, FiniteDifferencesTrainingBatchNorm) {
  ModelConfig cfg;
  cfg.dropout_p = 0.0;
  cfg.seed = 12;
  GATv2Model m(cfg);
  auto b = labeled_batch_of_about_30_nodes(m);
  auto r = graphsym::testing::gradient_check(m, b, true, 0.25, 2);
  EXPECT_LT(r.excluded * 20, r.checked);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GATv2Train, ZeroLearningRateLeavesParameters) {
  ModelConfig cfg = small_config();
  cfg.lr = 0.0;
  GATv2Model m(cfg);
  auto g = labeled_adder(4, 1);
  m.set_norm(fit_normalization(std::vector<CircuitGraph>{g}));
  auto before = m.params();
  TrainConfig t;
  t.epochs = 5;
  auto res = train(m, {&g}, {}, t);
  EXPECT_EQ(res.history.size(), 5u);
  EXPECT_EQ(res.model.params(), before);
}

TEST(GATv2Train, OverfitsOneTinyGraph) {
  ModelConfig cfg;
  cfg.dropout_p = 0.0;
  GATv2Model m(cfg);
  auto g = labeled_adder(4, 3);
  m.set_norm(fit_normalization(std::vector<CircuitGraph>{g}));
  auto b = make_batch(g, m.norm(), true);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 500; ++step) {
    detail::ForwardCache c;
    RowMat y = m.forward(b, true, nullptr, &c);
    double l = GATv2Model::loss(y, b.y);
    if (step == 0) first = l;
    last = l;
    m.adam_step(m.backward(b, c, GATv2Model::loss_grad(y, b.y)));
    m.update_running_stats(c, b.num_nodes());
  }
  EXPECT_LT(last, 0.01 * first) << "first " << first << " last " << last;
}

TEST(GATv2Train, SameSeedGivesIdenticalCheckpoints) {
  std::vector<CircuitGraph> gs;
  for (std::uint64_t s = 0; s < 4; ++s) gs.push_back(labeled_adder(4, s));
  auto norm = fit_normalization(gs);
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 2;
  auto run = [&](const std::string& path) {
    GATv2Model m(small_config(2, 0.1));
    m.set_norm(norm);
    auto res = train(m, {&gs[0], &gs[1], &gs[2]}, {&gs[3]}, t);
    res.model.save(path);
    return res.model;
  };
  auto a = run(temp_path("graphsym_ckpt_a.bin"));
  auto b = run(temp_path("graphsym_ckpt_b.bin"));
  EXPECT_EQ(a, b);
  EXPECT_EQ(read_file(temp_path("graphsym_ckpt_a.bin")), read_file(temp_path("graphsym_ckpt_b.bin")));
  auto loaded = GATv2Model::load(temp_path("graphsym_ckpt_a.bin"));
  EXPECT_EQ(loaded, a);
  EXPECT_GT(loaded.step(), 0u);
}

TEST(GATv2Checkpoint, RejectsCorruptFilesAndForeignStats) {
  auto g = labeled_adder(4, 0);
  GATv2Model m(small_config());
  m.set_norm(fit_normalization(std::vector<CircuitGraph>{g}));
  auto path = temp_path("graphsym_ckpt_c.bin");
  m.save(path);
  auto text = read_file(path);
  auto expect_checkpoint_error = [](const std::function<void()>& f) {
    try {
      f();
      FAIL() << "expected a checkpoint error";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Checkpoint) << e.what();
    }
  };
  {
    std::ofstream(path, std::ios::binary) << text.substr(0, text.size() - 8);
    expect_checkpoint_error([&] { GATv2Model::load(path); });
  }
  {
    std::ofstream(path, std::ios::binary) << "not a checkpoint\n";
    expect_checkpoint_error([&] { GATv2Model::load(path); });
  }
  auto other = fit_normalization(std::vector<CircuitGraph>{labeled_adder(4, 1)});
  expect_checkpoint_error([&] { m.check_norm(other); });
  EXPECT_NO_THROW(m.check_norm(m.norm()));
}

TEST(GATv2Train, NonFiniteLossNamesTheBatch) {
  auto g = labeled_adder(4, 0);
  GATv2Model m(small_config());
  m.set_norm(fit_normalization(std::vector<CircuitGraph>{g}));
  m.mat("head.b")(0, 0) = std::numeric_limits<double>::infinity();
  try {
    train(m, {&g}, {}, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos);
  }
}
