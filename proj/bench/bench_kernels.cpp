#include <benchmark/benchmark.h>

#include <omp.h>

#include <random>
#include <vector>

#include "fossil/ot.hpp"

using namespace fossil;

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Matrix random_adjacency(int n, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.3);
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (coin(rng)) a(i, j) = a(j, i) = 1.0;
  return a;
}

// Subgraph-sized problems like those in one training step.
struct Batch {
  std::vector<ot::CostMatrices> costs;
  std::vector<ot::FgwProblem> problems;

  Batch(int count, int k) {
    std::mt19937_64 rng(42);
    costs.reserve(count);
    for (int i = 0; i < count; ++i) {
      costs.push_back(ot::build_cost_matrices(random_adjacency(k, rng), random_adjacency(k, rng),
                                              uniform_matrix(k, 16, rng), uniform_matrix(k, 16, rng),
                                              0.5));
    }
    for (const auto& c : costs) {
      problems.push_back({&c, ot::uniform_distribution(k), ot::uniform_distribution(k)});
    }
  }
};

Matrix naive_tensor_product(const Matrix& c1, const Matrix& c2, const Matrix& p) {
  Matrix out = Matrix::Zero(c1.rows(), c2.rows());
  for (Eigen::Index i = 0; i < c1.rows(); ++i)
    for (Eigen::Index j = 0; j < c2.rows(); ++j)
      for (Eigen::Index k = 0; k < c1.rows(); ++k)
        for (Eigen::Index l = 0; l < c2.rows(); ++l) {
          const double d = c1(i, k) - c2(j, l);
          out(i, j) += d * d * p(k, l);
        }
  return out;
}

void BM_SolveBatchSerial(benchmark::State& state) {
  const Batch batch(static_cast<int>(state.range(0)), 12);
  for (auto _ : state) benchmark::DoNotOptimize(ot::solve_batch_serial(batch.problems, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SolveBatchParallel(benchmark::State& state) {
  const Batch batch(static_cast<int>(state.range(0)), 12);
  const int threads = omp_get_max_threads();
  for (auto _ : state) benchmark::DoNotOptimize(ot::solve_batch(batch.problems, {}, threads));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["threads"] = threads;
}

void BM_TensorProductFactorized(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 rng(1);
  const Matrix c1 = uniform_matrix(n, n, rng), c2 = uniform_matrix(n, n, rng),
               p = uniform_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ot::tensor_product(c1, c2, p));
}

void BM_TensorProductNaive(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 rng(1);
  const Matrix c1 = uniform_matrix(n, n, rng), c2 = uniform_matrix(n, n, rng),
               p = uniform_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(naive_tensor_product(c1, c2, p));
}

}  // namespace

BENCHMARK(BM_SolveBatchSerial)->Arg(64)->Arg(300)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SolveBatchParallel)->Arg(64)->Arg(300)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TensorProductFactorized)->Arg(6)->Arg(12)->Arg(32);
BENCHMARK(BM_TensorProductNaive)->Arg(6)->Arg(12)->Arg(32);

BENCHMARK_MAIN();
