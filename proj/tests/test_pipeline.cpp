#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "fossil/checkpoint.hpp"
#include "fossil/config.hpp"
#include "fossil/pipeline.hpp"
#include "fossil/probe.hpp"
#include "fossil/trainer.hpp"
#include "test_util.hpp"

using namespace fossil;
using fossil::testing::random_matrix;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("fossil_pipeline_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

Graph small_csbm(int n = 120, std::uint64_t seed = 1) {
  CsbmParams p;
  p.num_nodes = n;
  p.num_features = 8;
  p.p_intra = 0.1;
  p.p_inter = 0.01;
  p.seed = seed;
  return generate_csbm(p);
}

TrainConfig small_config() {
  TrainConfig c;
  c.hidden = 16;
  c.out = 8;
  c.k = 5;
  c.num_anchors = 20;
  c.epochs = 3;
  return c;
}

bool same_weights(const FossilModel& a, const FossilModel& b) {
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name || !(pa[i].tensor.value() == pb[i].tensor.value())) return false;
  }
  return true;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

}  // namespace

// ---- config ------------------------------------------------------------------------

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c;
  c.alpha = 0.3;
  c.node_loss = NodeLossVariant::kV2;
  c.degree_feature = DegreeFeature::kPageRank;
  c.seed = 123456789012345ULL;
  c.shuffled_bfs = true;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(c.to_json()["node_loss"], "v2");
  EXPECT_EQ(c.to_json()["degree_feature"], "pagerank");
}

TEST(TrainConfig, PartialObjectKeepsDefaults) {
  const TrainConfig c = TrainConfig::from_json(nlohmann::json{{"alpha", 0.7}, {"epochs", 10}});
  EXPECT_EQ(c.alpha, 0.7);
  EXPECT_EQ(c.epochs, 10);
  EXPECT_EQ(c.hidden, 1024);
  EXPECT_EQ(c.out, 512);
  EXPECT_EQ(c.beta2, 1.0);
  EXPECT_EQ(c.num_negatives, 2);
}

TEST(TrainConfig, UnknownKeyRejected) {
  try {
    TrainConfig::from_json(nlohmann::json{{"alpha", 0.5}, {"learning_rate", 0.1}});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json::array()), std::invalid_argument);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"node_loss", "half"}}), std::invalid_argument);
}

TEST(TrainConfig, InvalidValuesRejected) {
  for (const auto& bad : {nlohmann::json{{"alpha", 1.5}}, nlohmann::json{{"k", 1}},
                          nlohmann::json{{"tau", 0.0}}, nlohmann::json{{"num_negatives", 3}},
                          nlohmann::json{{"lr", -1.0}}, nlohmann::json{{"dropout", 1.0}},
                          nlohmann::json{{"epochs", -1}}, nlohmann::json{{"hidden", 0}}}) {
    EXPECT_THROW(TrainConfig::from_json(bad), std::invalid_argument) << bad.dump();
  }
}

TEST(TrainConfig, RangeCheckedMode) {
  TrainConfig c;
  c.range_checked = true;
  EXPECT_NO_THROW(c.validate());
  c.k = 40;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.range_checked = false;
  EXPECT_NO_THROW(c.validate());
  c = TrainConfig{};
  c.range_checked = true;
  c.lr = 2e-3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.lr = 5e-3;
  c.alpha = 0.3;
  c.tau = 0.8;
  c.beta = 1.5;
  EXPECT_NO_THROW(c.validate());
  c.beta2 = 2.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TrainConfig, HashTracksContent) {
  TrainConfig a, b;
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 16u);
  b.tau = 0.8;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(TrainConfig, LoadFromFile) {
  TempDir dir;
  std::ofstream(dir / "c.json") << R"({"alpha": 0.2, "k": 15})";
  EXPECT_EQ(TrainConfig::load(dir / "c.json").k, 15);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_ANY_THROW(TrainConfig::load(dir / "bad.json"));
  EXPECT_ANY_THROW(TrainConfig::load(dir / "missing.json"));
}

TEST(TrainConfig, FgwMapping) {
  TrainConfig c;
  c.alpha = 0.4;
  c.beta = 0.5;
  c.tau = 0.8;
  c.bapg_max_iter = 70;
  const ot::FgwConfig f = c.fgw();
  EXPECT_EQ(f.alpha, 0.4);
  EXPECT_EQ(f.beta, 0.5);
  EXPECT_EQ(f.tau, 0.8);
  EXPECT_EQ(f.max_iter, 70);
  EXPECT_EQ(f.tol, c.bapg_tol);
}

// ---- checkpoint --------------------------------------------------------------------

TEST(Checkpoint, RoundTrip) {
  TempDir dir;
  const TrainConfig cfg = small_config();
  FossilModel m({8, cfg.hidden, cfg.out}, model_options(cfg), 7);
  save_checkpoint(dir / "m.bin", m, cfg);
  const Checkpoint c = load_checkpoint(dir / "m.bin");
  EXPECT_EQ(c.config.to_json(), cfg.to_json());
  EXPECT_TRUE(same_weights(c.model, m));
  EXPECT_FALSE(fs::exists(dir / "m.bin.tmp"));
  const std::string bytes = read_bytes(dir / "m.bin");
  EXPECT_EQ(bytes.substr(0, 8), "FSLCKPT1");
}

TEST(Checkpoint, CorruptionDetected) {
  TempDir dir;
  const TrainConfig cfg = small_config();
  FossilModel m({8, cfg.hidden, cfg.out}, model_options(cfg), 7);
  save_checkpoint(dir / "m.bin", m, cfg);
  const std::string good = read_bytes(dir / "m.bin");

  write_bytes(dir / "magic.bin", "XSLCKPT1" + good.substr(8));
  EXPECT_THROW(load_checkpoint(dir / "magic.bin"), CheckpointError);

  write_bytes(dir / "short.bin", good.substr(0, good.size() - 8));
  EXPECT_THROW(load_checkpoint(dir / "short.bin"), CheckpointError);

  write_bytes(dir / "long.bin", good + "x");
  EXPECT_THROW(load_checkpoint(dir / "long.bin"), CheckpointError);

  // Same-length edit inside the JSON header's config breaks the hash.
  std::string tampered = good;
  const auto pos = tampered.find("\"epochs\":3");
  ASSERT_NE(pos, std::string::npos);
  tampered[pos + 9] = '4';
  write_bytes(dir / "hash.bin", tampered);
  EXPECT_THROW(load_checkpoint(dir / "hash.bin"), CheckpointError);

  write_bytes(dir / "tiny.bin", "FSL");
  EXPECT_THROW(load_checkpoint(dir / "tiny.bin"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "absent.bin"), CheckpointError);
}

// ---- trainer -----------------------------------------------------------------------

TEST(Trainer, ZeroEpochsKeepsInitialization) {
  const Graph g = small_csbm();
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  cfg.seed = 5;
  Trainer t(g, cfg);
  const TrainResult r = train(t);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_TRUE(same_weights(t.model(), FossilModel(model_dims(g, cfg), model_options(cfg), 5)));
}

TEST(Trainer, DeterministicMetricsAndWeights) {
  const Graph g = small_csbm();
  const TrainConfig cfg = small_config();
  Trainer a(g, cfg), b(g, cfg);
  const TrainResult ra = train(a), rb = train(b);
  ASSERT_EQ(ra.metrics.size(), 3u);
  ASSERT_EQ(rb.metrics.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(ra.metrics[i].total, rb.metrics[i].total);
    EXPECT_EQ(ra.metrics[i].l_ot, rb.metrics[i].l_ot);
    EXPECT_EQ(ra.metrics[i].anchors_used, rb.metrics[i].anchors_used);
  }
  EXPECT_TRUE(same_weights(a.model(), b.model()));
  TrainConfig other = cfg;
  other.seed = 1;
  Trainer c(g, other);
  EXPECT_NE(train(c).metrics[0].total, ra.metrics[0].total);
}

TEST(Trainer, MetricsRecordConsistent) {
  const Graph g = small_csbm();
  TrainConfig cfg = small_config();
  cfg.node_loss = NodeLossVariant::kV2;
  Trainer t(g, cfg);
  const MetricsRecord r = t.step(1);
  EXPECT_NEAR(r.total, r.l_ot + r.l_node + r.l_fusion, 1e-12);
  EXPECT_FALSE(r.ot_skipped);
  EXPECT_EQ(r.anchors_used + r.anchors_excluded, 20u);
  EXPECT_GT(r.buffer_rows, 0);
  EXPECT_LE(r.buffer_rows, 20 * 5);
  for (double ms : {r.ms.encode, r.ms.generate, r.ms.sample, r.ms.ot, r.ms.node_loss, r.ms.backward}) {
    EXPECT_GE(ms, 0.0);
  }
  EXPECT_LE(r.ms.sum(), r.step_ms * 1.0001);
  const nlohmann::json j = nlohmann::json::parse(r.to_json().dump());
  for (const char* key : {"epoch", "l_ot", "l_node", "l_fusion", "total", "ms", "anchors_used",
                          "anchors_excluded", "buffer_rows", "step_ms"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_TRUE(j["ms"].contains("backward"));
}

TEST(Trainer, EvaluateLossLeavesWeights) {
  const Graph g = small_csbm();
  Trainer t(g, small_config());
  const FossilModel before = t.model();
  std::vector<Matrix> saved;
  for (const auto& p : before.named_parameters()) saved.push_back(p.tensor.value());
  const MetricsRecord r = t.evaluate_loss(1);
  EXPECT_EQ(r.ms.backward, 0.0);
  const auto after = t.model().named_parameters();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_TRUE(after[i].tensor.value() == saved[i]);
}

TEST(Trainer, SkipsSubgraphLossWhenTooFewAnchors) {
  // No edges: every BFS ball is a single node, so every anchor is excluded.
  CsbmParams p;
  p.num_nodes = 40;
  p.num_features = 4;
  p.p_intra = p.p_inter = 0.0;
  const Graph g = generate_csbm(p);
  Trainer t(g, small_config());
  const MetricsRecord r = t.step(1);
  EXPECT_TRUE(r.ot_skipped);
  EXPECT_EQ(r.l_ot, 0.0);
  EXPECT_EQ(r.anchors_excluded, 20u);
  EXPECT_TRUE(std::isfinite(r.total));
}

TEST(Trainer, DivergenceKeepsLastGoodWeights) {
  const Graph g = small_csbm();
  TrainConfig cfg = small_config();
  cfg.lr = 1e300;
  cfg.lr_fusion = 1e300;
  cfg.epochs = 20;
  Trainer t(g, cfg);
  std::vector<Matrix> last_good;
  const TrainResult r = train(t, [&](const MetricsRecord&) {
    last_good.clear();
    for (const auto& p : t.model().named_parameters()) last_good.push_back(p.tensor.value());
  });
  ASSERT_TRUE(r.divergence.has_value());
  EXPECT_LT(r.metrics.size(), 20u);
  ASSERT_FALSE(last_good.empty());
  const auto now = t.model().named_parameters();
  for (std::size_t i = 0; i < now.size(); ++i) EXPECT_TRUE(now[i].tensor.value() == last_good[i]);
  EXPECT_NE(r.divergence->find("epoch " + std::to_string(r.metrics.size() + 1)), std::string::npos);
}

TEST(Trainer, RejectsMismatchedModel) {
  const Graph g = small_csbm();
  const TrainConfig cfg = small_config();
  EXPECT_THROW(Trainer(g, cfg, FossilModel({3, 4, 4}, {}, 0)), std::invalid_argument);
}

TEST(Trainer, LossDecreasesOverFiftyEpochs) {
  CsbmParams p;
  p.num_nodes = 500;
  p.num_features = 50;
  p.p_intra = 0.05;
  p.p_inter = 0.005;
  const Graph g = generate_csbm(p);
  TrainConfig cfg;
  cfg.hidden = 32;
  cfg.out = 16;
  cfg.epochs = 50;
  Trainer t(g, cfg);
  const TrainResult r = train(t);
  ASSERT_EQ(r.metrics.size(), 50u);
  EXPECT_LT(r.metrics.back().total, r.metrics.front().total);
}

TEST(MixSeed, Distinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 10; ++a)
    for (std::uint64_t b = 0; b < 30; ++b) seen.insert(mix_seed(a, b));
  EXPECT_EQ(seen.size(), 300u);
}

// ---- probe -----------------------------------------------------------------------

TEST(Probe, OneHotLabelsAreSeparable) {
  const Graph g = small_csbm(200, 3);
  Matrix onehot = Matrix::Zero(200, 2);
  for (int i = 0; i < 200; ++i) onehot(i, g.labels()[i]) = 1.0;
  const EvalReport r = evaluate_embeddings(onehot, g, SplitMode::kPlanetoid, 3);
  for (double a : r.accuracies) EXPECT_EQ(a, 1.0);
  EXPECT_EQ(r.ci.lower, 1.0);
  EXPECT_EQ(r.ci.upper, 1.0);
}

TEST(Probe, ZeroEmbeddingsPredictBiasClass) {
  std::vector<int> y(300);
  for (int i = 0; i < 300; ++i) y[i] = i % 3 == 0 ? 0 : (i % 3 == 1 ? 1 : (i % 2 ? 1 : 2));
  const Graph g(300, {}, Matrix::Zero(300, 1), y);
  const EvalReport r = evaluate_embeddings(Matrix::Zero(300, 4), g, SplitMode::kFractional, 4);
  for (int s = 0; s < 4; ++s) {
    Eigen::Index top = 0;
    r.probes[s].bias.maxCoeff(&top);
    const SplitSpec split = make_splits(g, SplitMode::kFractional, s);
    double share = 0;
    for (NodeId v : split.test) share += y[v] == top;
    share /= static_cast<double>(split.test.size());
    EXPECT_NEAR(r.accuracies[s], share, 1e-15);
    EXPECT_EQ(top, 1);  // the most frequent training class
  }
  EXPECT_LE(r.mean, r.majority_rate);
}

TEST(Probe, AbsentClassRejected) {
  const Matrix x = random_matrix(6, 2, 1);
  const std::vector<int> y{0, 0, 1, 1, 0, 1};
  EXPECT_THROW(fit_probe(x, y, 3), std::invalid_argument);
  EXPECT_NO_THROW(fit_probe(x, y, 2));
}

TEST(Probe, NeverReadsTestLabels) {
  const Graph g = small_csbm(200, 4);
  const Matrix emb = random_matrix(200, 5, 3) + g.features().leftCols(5);
  std::vector<int> scrambled = g.labels();
  const SplitSpec split = make_splits(g, SplitMode::kPlanetoid, 0);
  for (NodeId v : split.test) scrambled[v] = 1 - scrambled[v];
  const Graph h(g.num_nodes(), g.edges(), g.features(), scrambled);
  const EvalReport a = evaluate_embeddings(emb, g, SplitMode::kPlanetoid, 3);
  const EvalReport b = evaluate_embeddings(emb, h, SplitMode::kPlanetoid, 3);
  for (int s = 0; s < 3; ++s) {
    EXPECT_TRUE(a.probes[s].weight == b.probes[s].weight);
    EXPECT_TRUE(a.probes[s].bias == b.probes[s].bias);
    EXPECT_NEAR(a.accuracies[s] + b.accuracies[s], 1.0, 1e-12);
  }
}

TEST(Probe, StandardizesWithTrainingStatistics) {
  Matrix x = random_matrix(40, 3, 2);
  x.col(1).setConstant(7.0);
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) y[i] = x(i, 0) > 0;
  const LinearProbe p = fit_probe(x, y, 2);
  EXPECT_NEAR(p.center(0), x.col(0).mean(), 1e-15);
  EXPECT_EQ(p.scale(1), 1.0);
  EXPECT_GT(accuracy(p, x, y), 0.95);
}

TEST(Bootstrap, ConstantHasZeroWidth) {
  const std::vector<double> v(10, 0.8);
  const ConfidenceInterval ci = bootstrap_ci(v);
  EXPECT_DOUBLE_EQ(ci.lower, 0.8);
  EXPECT_DOUBLE_EQ(ci.upper, 0.8);
}

TEST(Bootstrap, BracketsMeanAndIsDeterministic) {
  const Matrix r = random_matrix(30, 1, 5, 0.5, 0.9);
  const std::vector<double> v(r.data(), r.data() + 30);
  const ConfidenceInterval a = bootstrap_ci(v), b = bootstrap_ci(v);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 30;
  EXPECT_LT(a.lower, mean);
  EXPECT_GT(a.upper, mean);
  EXPECT_EQ(a.lower, b.lower);
  EXPECT_EQ(a.upper, b.upper);
  EXPECT_THROW(bootstrap_ci(std::vector<double>{}), std::invalid_argument);
}

// ---- sweep, bench, distance ------------------------------------------------------

TEST(SweepAlpha, OneRowPerGridPoint) {
  const Graph g = small_csbm(120, 6);
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  SweepOptions opt;
  opt.train_seeds = 2;
  opt.eval_seeds = 2;
  const auto single = sweep_alpha(g, cfg, {0.5}, opt);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].accuracies.size(), 2u);
  const auto ends = sweep_alpha(g, cfg, {0.0, 1.0}, opt);
  ASSERT_EQ(ends.size(), 2u);
  EXPECT_EQ(ends[0].alpha, 0.0);
  EXPECT_EQ(ends[1].alpha, 1.0);
  for (const auto& row : ends) {
    EXPECT_GE(row.mean, 0.0);
    EXPECT_LE(row.mean, 1.0);
    EXPECT_TRUE(to_json(row).contains("stddev"));
  }
  EXPECT_THROW(sweep_alpha(g, cfg, {1.2}, opt), std::invalid_argument);
}

TEST(BenchTiming, DeterministicGraphsAndPhaseAccounting) {
  TrainConfig cfg = small_config();
  cfg.node_loss = NodeLossVariant::kV2;
  BenchOptions opt;
  opt.sizes = {200, 400};
  opt.num_features = 8;
  opt.warmup = 0;
  opt.iterations = 2;
  const auto a = bench_timing(cfg, opt);
  const auto b = bench_timing(cfg, opt);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].graph_fingerprint, b[i].graph_fingerprint);
    EXPECT_EQ(a[i].num_edges, b[i].num_edges);
    EXPECT_EQ(a[i].buffer_capacity, 20u * 5u);
    EXPECT_LE(a[i].mean_buffer_rows, static_cast<double>(a[i].buffer_capacity));
    EXPECT_GE(a[i].mean_ms.ot, 0.0);
    EXPECT_NEAR(a[i].mean_ms.sum(), a[i].mean_step_ms, 0.1 * a[i].mean_step_ms);
  }
  EXPECT_NE(a[0].graph_fingerprint, a[1].graph_fingerprint);
  // Expected degree stays fixed as N grows.
  EXPECT_NEAR(bench_graph_params(1000, opt).p_intra * 499, 8.0, 1e-12);
  EXPECT_NEAR(bench_graph_params(10000, opt).p_inter * 5000, 1.0, 1e-12);
}

TEST(Distance, SelfAtGromovEndpointIsZero) {
  const Graph g = small_csbm(12, 2);
  ot::FgwConfig cfg;
  cfg.alpha = 0.0;
  EXPECT_LE(distance(g, g, cfg)["value"].get<double>(), 1e-4);
}

TEST(Distance, SingleNodesAtWassersteinEndpoint) {
  Matrix xa(1, 2), xb(1, 2);
  xa << 0.5, -1.0;
  xb << 2.0, 0.25;
  const Graph a(1, {}, xa), b(1, {}, xb);
  ot::FgwConfig cfg;
  cfg.alpha = 1.0;
  cfg.tau = 0.5;
  const double m11 = std::exp(-xa.row(0).dot(xb.row(0)) / 0.5);
  EXPECT_EQ(distance(a, b, cfg)["value"].get<double>(), m11);
}

TEST(Distance, JsonRoundTripAndMismatch) {
  const Graph a = small_csbm(10, 3), b = small_csbm(14, 4);
  const nlohmann::json j = distance(a, b, ot::FgwConfig{});
  const nlohmann::json back = nlohmann::json::parse(j.dump());
  EXPECT_EQ(back, j);
  EXPECT_EQ(back["plan"].size(), 10u);
  EXPECT_EQ(back["plan"][0].size(), 14u);
  EXPECT_TRUE(back.contains("iterations"));
  EXPECT_LE(back["residual"].get<double>(), 1e-6);
  const Graph c(3, {}, Matrix::Zero(3, 5));
  EXPECT_THROW(distance(a, c, ot::FgwConfig{}), std::invalid_argument);
}
