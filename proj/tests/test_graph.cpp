#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "fossil/graph.hpp"
#include "test_util.hpp"

using namespace fossil;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("fossil_graph_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path file(const std::string& name, const std::string& content) const {
    std::ofstream(path_ / name) << content;
    return path_ / name;
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Graph path_graph(int n) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph(n, e, Matrix::Zero(n, 1));
}

Graph triangle(std::optional<std::vector<int>> labels = std::nullopt) {
  return Graph(3, {{0, 1}, {1, 2}, {0, 2}}, Matrix::Zero(3, 1), std::move(labels));
}

Graph random_graph(int n, double p, std::uint64_t seed, int classes = 0) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  std::vector<std::pair<NodeId, NodeId>> e;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (coin(rng)) e.emplace_back(u, v);
  std::optional<std::vector<int>> y;
  if (classes > 0) {
    y.emplace(n);
    for (int i = 0; i < n; ++i) (*y)[i] = static_cast<int>(rng() % classes);
  }
  return Graph(n, e, fossil::testing::random_matrix(n, 3, seed), y);
}

}  // namespace

// ---- construction and ingestion -------------------------------------------------------

TEST(GraphModel, EdgesCanonicalizedAndDeduplicated) {
  Graph g(3, {{2, 0}, {0, 2}, {1, 0}}, Matrix::Zero(3, 1));
  ASSERT_EQ(g.edges().size(), 2u);
  EXPECT_EQ(g.edges()[0], std::make_pair(0, 1));
  EXPECT_EQ(g.edges()[1], std::make_pair(0, 2));
  EXPECT_EQ(g.degree(0), 2);
  Matrix a = Matrix(g.adjacency());
  EXPECT_TRUE(a == a.transpose());
}

TEST(GraphModel, RejectsSelfLoopsAndBadShapes) {
  EXPECT_THROW(Graph(2, {{1, 1}}, Matrix::Zero(2, 1)), std::invalid_argument);
  EXPECT_THROW(Graph(2, {{0, 2}}, Matrix::Zero(2, 1)), std::out_of_range);
  EXPECT_THROW(Graph(3, {}, Matrix::Zero(2, 1)), std::invalid_argument);
  EXPECT_THROW(Graph(2, {}, Matrix::Zero(2, 1), std::vector<int>{0}), std::invalid_argument);
}

TEST(LoadGraph, SingleEdge) {
  TempDir dir;
  auto g = load_graph(dir.file("e", "0 1\n"), dir.file("x", "1.0,2.0\n3.0,4.0\n"));
  EXPECT_EQ(g.graph.num_nodes(), 2);
  EXPECT_EQ(g.graph.edges().size(), 1u);
  EXPECT_EQ(g.graph.num_features(), 2);
  EXPECT_DOUBLE_EQ(g.graph.features()(1, 0), 3.0);
}

TEST(LoadGraph, SelfLoopDroppedAndCounted) {
  TempDir dir;
  auto g = load_graph(dir.file("e", "0 1\n3 3\n"), dir.file("x", "0\n0\n0\n0\n"));
  EXPECT_EQ(g.report.self_loops_dropped, 1u);
  EXPECT_EQ(g.graph.edges().size(), 1u);
}

TEST(LoadGraph, DuplicatesAndCommentsHandled) {
  TempDir dir;
  auto g = load_graph(dir.file("e", "# header\n0 1\n1 0\n\n1 2\n1 2\n"), dir.file("x", "0\n0\n0\n"));
  EXPECT_EQ(g.report.duplicates_dropped, 2u);
  EXPECT_EQ(g.graph.edges().size(), 2u);
}

TEST(LoadGraph, OutOfRangeIdReportsLine) {
  TempDir dir;
  try {
    load_graph(dir.file("e", "0 1\n2 7\n"), dir.file("x", "0\n0\n0\n0\n0\n"));
    FAIL();
  } catch (const GraphFormatError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("out of range"), std::string::npos);
  }
}

TEST(LoadGraph, RaggedFeatureRowReportsLine) {
  TempDir dir;
  try {
    load_graph(dir.file("e", "0 1\n"), dir.file("x", "1,2\n1,2,3\n"));
    FAIL();
  } catch (const GraphFormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadGraph, UnparsableLinesRejected) {
  TempDir dir;
  EXPECT_THROW(load_graph(dir.file("e", "0 x\n"), dir.file("x", "0\n0\n")), GraphFormatError);
  EXPECT_THROW(load_graph(dir.file("e2", "0 1 2\n"), dir.file("x2", "0\n0\n0\n")), GraphFormatError);
  EXPECT_THROW(load_graph(dir.file("e3", "0 1\n"), dir.file("x3", "0,abc\n0,1\n")), GraphFormatError);
  EXPECT_THROW(load_graph(dir.file("e4", "0 1\n"), dir.file("x4", "0\n0\n"), dir.file("y4", "0\n-1\n")),
               GraphFormatError);
  EXPECT_THROW(load_graph(dir.file("e5", "0 1\n"), dir.file("x5", "0\n0\n"), dir.file("y5", "0\n")),
               GraphFormatError);
}

TEST(LoadGraph, SaveLoadRoundTrip) {
  TempDir dir;
  Graph g = random_graph(30, 0.2, 5, 3);
  save_graph(g, dir.path() / "e", dir.path() / "x", dir.path() / "y");
  auto back = load_graph(dir.path() / "e", dir.path() / "x", dir.path() / "y");
  EXPECT_EQ(back.graph.edges(), g.edges());
  EXPECT_TRUE(back.graph.features() == g.features());
  EXPECT_EQ(back.graph.labels(), g.labels());
}

// ---- normalized adjacency ------------------------------------------------------------

TEST(NormalizedAdjacency, SingleEdge) {
  Matrix a = Matrix(normalized_adjacency(path_graph(2)));
  EXPECT_DOUBLE_EQ(a(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(a(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(a(0, 0), 0.0);
}

TEST(NormalizedAdjacency, Triangle) {
  Matrix a = Matrix(normalized_adjacency(triangle()));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(a(i, j), i == j ? 0.0 : 0.5);
}

TEST(NormalizedAdjacency, IsolatedNodeHasZeroRow) {
  Graph g(3, {{0, 1}}, Matrix::Zero(3, 1));
  Matrix a = Matrix(normalized_adjacency(g));
  EXPECT_EQ(a.row(2).cwiseAbs().sum(), 0.0);
  EXPECT_EQ(a.col(2).cwiseAbs().sum(), 0.0);
}

TEST(NormalizedAdjacency, SpectrumWithinUnitInterval) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Matrix a = Matrix(normalized_adjacency(random_graph(15, 0.3, seed)));
    ASSERT_TRUE(a.isApprox(a.transpose()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    EXPECT_LE(es.eigenvalues().maxCoeff(), 1.0 + 1e-12);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1.0 - 1e-12);
  }
}

// ---- homophily -------------------------------------------------------------------

TEST(Homophily, Examples) {
  EXPECT_DOUBLE_EQ(homophily(Graph(2, {{0, 1}}, Matrix::Zero(2, 1), std::vector<int>{1, 1})), 1.0);
  EXPECT_NEAR(homophily(triangle(std::vector<int>{0, 0, 1})), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(homophily(triangle()), std::invalid_argument);
}

TEST(Homophily, IsolatedNodesExcluded) {
  Graph g(3, {{0, 1}}, Matrix::Zero(3, 1), std::vector<int>{0, 0, 1});
  EXPECT_DOUBLE_EQ(homophily(g), 1.0);
}

TEST(Homophily, InvariantToClassRelabeling) {
  Graph g = random_graph(40, 0.15, 9, 3);
  std::vector<int> y = g.labels();
  for (int& c : y) c = (c + 1) % 3;
  Graph relabeled(g.num_nodes(), g.edges(), g.features(), y);
  EXPECT_DOUBLE_EQ(homophily(g), homophily(relabeled));
}

// ---- cSBM ---------------------------------------------------------------------------

TEST(Csbm, NoCrossEdgesGivesHomophilyOne) {
  CsbmParams p;
  p.num_nodes = 200;
  p.p_intra = 0.05;
  p.p_inter = 0.0;
  EXPECT_DOUBLE_EQ(homophily(generate_csbm(p)), 1.0);
}

TEST(Csbm, EqualProbabilitiesGiveHalfHomophily) {
  double total = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    CsbmParams p;
    p.num_nodes = 200;
    p.p_intra = p.p_inter = 0.05;
    p.seed = s;
    total += homophily(generate_csbm(p));
  }
  EXPECT_NEAR(total / 20, 0.5, 0.02);
}

TEST(Csbm, EdgeCountWithinThreeSigma) {
  CsbmParams p;
  p.num_nodes = 1000;
  p.p_intra = 0.01;
  p.p_inter = 0.001;
  p.seed = 3;
  const Graph g = generate_csbm(p);
  const double intra_pairs = 2.0 * (500.0 * 499.0 / 2.0);
  const double inter_pairs = 500.0 * 500.0;
  const double mean = intra_pairs * 0.01 + inter_pairs * 0.001;
  const double var = intra_pairs * 0.01 * 0.99 + inter_pairs * 0.001 * 0.999;
  EXPECT_LT(std::abs(static_cast<double>(g.edges().size()) - mean), 3 * std::sqrt(var));
}

TEST(Csbm, DeterministicAndBalanced) {
  CsbmParams p;
  p.num_nodes = 101;
  p.seed = 11;
  const Graph a = generate_csbm(p), b = generate_csbm(p);
  EXPECT_EQ(a.edges(), b.edges());
  EXPECT_TRUE(a.features() == b.features());
  EXPECT_EQ(a.labels(), b.labels());
  const auto ones = std::count(a.labels().begin(), a.labels().end(), 1);
  EXPECT_EQ(ones, 50);
}

TEST(Csbm, FeatureSignalAlongClassAxis) {
  CsbmParams p;
  p.num_nodes = 2000;
  p.signal = 2.0;
  p.seed = 4;
  const Graph g = generate_csbm(p);
  double m00 = 0, m01 = 0;
  int n0 = 0;
  for (int i = 0; i < g.num_nodes(); ++i) {
    if (g.labels()[i] != 0) continue;
    m00 += g.features()(i, 0);
    m01 += g.features()(i, 1);
    ++n0;
  }
  EXPECT_NEAR(m00 / n0, 2.0, 0.15);
  EXPECT_NEAR(m01 / n0, 0.0, 0.15);
}

// ---- splits -----------------------------------------------------------------------

TEST(Splits, PlanetoidTakesTwentyPerClass) {
  // 375 nodes -> 300 dev nodes; three balanced classes.
  std::vector<int> y(375);
  for (int i = 0; i < 375; ++i) y[i] = i % 3;
  Graph g(375, {}, Matrix::Zero(375, 1), y);
  const SplitSpec s = make_splits(g, SplitMode::kPlanetoid, 1);
  EXPECT_EQ(s.train.size(), 60u);
  std::vector<int> per(3, 0);
  for (NodeId v : s.train) ++per[y[v]];
  EXPECT_EQ(per, (std::vector<int>{20, 20, 20}));
  EXPECT_EQ(s.train.size() + s.validation.size(), 300u);
  EXPECT_EQ(s.test.size(), 75u);
}

TEST(Splits, FractionalSixtyForty) {
  Graph g(125, {}, Matrix::Zero(125, 1), std::vector<int>(125, 0));
  const SplitSpec s = make_splits(g, SplitMode::kFractional, 2);
  EXPECT_EQ(s.train.size(), 60u);
  EXPECT_EQ(s.validation.size(), 40u);
  EXPECT_EQ(s.test.size(), 25u);
}

TEST(Splits, DeterministicDisjointAndFixedTest) {
  Graph g = random_graph(200, 0.0, 3, 2);
  const SplitSpec a = make_splits(g, SplitMode::kPlanetoid, 7);
  const SplitSpec b = make_splits(g, SplitMode::kPlanetoid, 7);
  const SplitSpec c = make_splits(g, SplitMode::kPlanetoid, 8);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, c.test);
  EXPECT_NE(a.train, c.train);
  std::set<NodeId> all;
  for (const auto* part : {&a.train, &a.validation, &a.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), 200u);
  EXPECT_EQ(a.train.size() + a.validation.size() + a.test.size(), 200u);
}

TEST(Splits, RejectsSmallClassInPlanetoidMode) {
  std::vector<int> y(100, 0);
  for (int i = 0; i < 10; ++i) y[i] = 1;
  Graph g(100, {}, Matrix::Zero(100, 1), y);
  EXPECT_THROW(make_splits(g, SplitMode::kPlanetoid, 0), std::invalid_argument);
  EXPECT_THROW(make_splits(triangle(), SplitMode::kFractional, 0), std::invalid_argument);
}

TEST(Splits, JsonExport) {
  TempDir dir;
  Graph g(125, {}, Matrix::Zero(125, 1), std::vector<int>(125, 0));
  const SplitSpec s = make_splits(g, SplitMode::kFractional, 2);
  write_splits_json(s, dir.path() / "s.json");
  std::ifstream in(dir.path() / "s.json");
  auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["train"].get<std::vector<int>>(), s.train);
  EXPECT_EQ(j["test"].size(), 25u);
}

// ---- induced subgraph ------------------------------------------------------------

TEST(InducedSubgraph, Examples) {
  Graph g = random_graph(8, 0.4, 6);
  std::vector<NodeId> all(8);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_TRUE(induced_subgraph(g, all) == Matrix(g.adjacency()));

  std::vector<NodeId> one{3};
  EXPECT_TRUE(induced_subgraph(g, one) == Matrix::Zero(1, 1));

  std::vector<NodeId> ends{0, 2};
  EXPECT_TRUE(induced_subgraph(path_graph(3), ends) == Matrix::Zero(2, 2));

  std::vector<NodeId> dup{1, 1};
  EXPECT_THROW(induced_subgraph(g, dup), std::invalid_argument);
}

TEST(InducedSubgraph, PreservesOrderAndSymmetry) {
  Graph g = path_graph(4);
  std::vector<NodeId> s{2, 0, 1};
  Matrix a = induced_subgraph(g, s);
  EXPECT_TRUE(a == a.transpose());
  EXPECT_EQ(a(0, 2), 1.0);  // 2-1
  EXPECT_EQ(a(1, 2), 1.0);  // 0-1
  EXPECT_EQ(a(0, 1), 0.0);  // 2-0
}
