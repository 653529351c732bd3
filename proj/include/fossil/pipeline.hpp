#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "fossil/config.hpp"
#include "fossil/graph.hpp"
#include "fossil/probe.hpp"
#include "fossil/trainer.hpp"

namespace fossil {

struct SweepRow {
  double alpha = 0;
  double mean = 0;
  double stddev = 0;
  std::vector<double> accuracies;  // one per training seed
};

struct SweepOptions {
  int train_seeds = 5;
  int eval_seeds = 10;
  SplitMode split_mode = SplitMode::kPlanetoid;
  int threads = 1;
};

// Trains one model per (alpha, training seed) and reports mean probe accuracy.
std::vector<SweepRow> sweep_alpha(const Graph& g, const TrainConfig& cfg,
                                  const std::vector<double>& grid, const SweepOptions& options);

struct BenchOptions {
  std::vector<int> sizes{1000, 10000};
  int num_features = 50;
  double expected_intra_degree = 8.0;  // kept fixed as N grows
  double expected_inter_degree = 1.0;
  double signal = 1.0;
  int warmup = 1;
  int iterations = 3;
  int threads = 1;
  std::uint64_t seed = 0;
};

struct BenchRow {
  int num_nodes = 0;
  std::size_t num_edges = 0;
  std::uint64_t graph_fingerprint = 0;
  PhaseTimes mean_ms;
  double mean_step_ms = 0;
  double mean_buffer_rows = 0;      // |union of subgraph nodes|
  std::size_t buffer_capacity = 0;  // |S| * k, the bound that does not depend on N
};

// Times training steps on cSBM graphs of each size.
std::vector<BenchRow> bench_timing(const TrainConfig& cfg, const BenchOptions& options);

CsbmParams bench_graph_params(int num_nodes, const BenchOptions& options);
std::uint64_t graph_fingerprint(const Graph& g);

// FGW distance between two attributed graphs with raw features as embeddings.
nlohmann::json distance(const Graph& a, const Graph& b, const ot::FgwConfig& cfg);

nlohmann::json to_json(const EvalReport& r);
nlohmann::json to_json(const SweepRow& r);
nlohmann::json to_json(const BenchRow& r);

}  // namespace fossil
