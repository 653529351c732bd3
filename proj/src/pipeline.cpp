#include "fossil/pipeline.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace fossil {

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<SweepRow> sweep_alpha(const Graph& g, const TrainConfig& cfg,
                                  const std::vector<double>& grid, const SweepOptions& options) {
  for (double a : grid) {
    if (!(a >= 0 && a <= 1)) throw std::invalid_argument("sweep_alpha: alpha outside [0,1]");
  }
  std::vector<SweepRow> rows;
  for (double alpha : grid) {
    SweepRow row;
    row.alpha = alpha;
    for (int s = 0; s < options.train_seeds; ++s) {
      TrainConfig c = cfg;
      c.alpha = alpha;
      c.seed = cfg.seed + static_cast<std::uint64_t>(s);
      Trainer trainer(g, c, options.threads);
      TrainResult result = train(trainer);
      if (result.divergence) throw std::runtime_error("sweep_alpha: " + *result.divergence);
      const Matrix h = trainer.model().embed(trainer.context());
      row.accuracies.push_back(
          evaluate_embeddings(h, g, options.split_mode, options.eval_seeds).mean);
    }
    row.mean = mean_of(row.accuracies);
    double var = 0;
    for (double a : row.accuracies) var += (a - row.mean) * (a - row.mean);
    row.stddev = row.accuracies.size() > 1
                     ? std::sqrt(var / static_cast<double>(row.accuracies.size() - 1))
                     : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

CsbmParams bench_graph_params(int num_nodes, const BenchOptions& options) {
  CsbmParams p;
  p.num_nodes = num_nodes;
  p.num_features = options.num_features;
  p.num_classes = 2;
  const double half = num_nodes / 2.0;
  p.p_intra = std::min(1.0, options.expected_intra_degree / std::max(1.0, half - 1));
  p.p_inter = std::min(1.0, options.expected_inter_degree / std::max(1.0, half));
  p.signal = options.signal;
  p.seed = options.seed + static_cast<std::uint64_t>(num_nodes);
  return p;
}

std::uint64_t graph_fingerprint(const Graph& g) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [u, v] : g.edges()) {
    feed(&u, sizeof u);
    feed(&v, sizeof v);
  }
  feed(g.features().data(), static_cast<std::size_t>(g.features().size()) * sizeof(double));
  if (g.has_labels()) feed(g.labels().data(), g.labels().size() * sizeof(int));
  return h;
}

std::vector<BenchRow> bench_timing(const TrainConfig& cfg, const BenchOptions& options) {
  if (options.iterations < 1 || options.warmup < 0) {
    throw std::invalid_argument("bench_timing: need at least one timed iteration");
  }
  std::vector<BenchRow> rows;
  for (int n : options.sizes) {
    const Graph g = generate_csbm(bench_graph_params(n, options));
    BenchRow row;
    row.num_nodes = n;
    row.num_edges = g.edges().size();
    row.graph_fingerprint = graph_fingerprint(g);
    Trainer trainer(g, cfg, options.threads);
    for (int it = 0; it < options.warmup; ++it) trainer.step(it + 1);
    const double count = options.iterations;
    for (int it = 0; it < options.iterations; ++it) {
      const MetricsRecord r = trainer.step(options.warmup + it + 1);
      row.mean_ms.encode += r.ms.encode / count;
      row.mean_ms.generate += r.ms.generate / count;
      row.mean_ms.sample += r.ms.sample / count;
      row.mean_ms.ot += r.ms.ot / count;
      row.mean_ms.node_loss += r.ms.node_loss / count;
      row.mean_ms.backward += r.ms.backward / count;
      row.mean_step_ms += r.step_ms / count;
      row.mean_buffer_rows += static_cast<double>(r.buffer_rows) / count;
    }
    const int anchors = cfg.num_anchors > 0 ? std::min(cfg.num_anchors, n) : default_anchor_count(n);
    row.buffer_capacity = static_cast<std::size_t>(anchors) * static_cast<std::size_t>(cfg.k);
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json distance(const Graph& a, const Graph& b, const ot::FgwConfig& cfg) {
  if (a.num_features() != b.num_features()) {
    throw std::invalid_argument("distance: feature dimensions differ (" +
                                std::to_string(a.num_features()) + " vs " +
                                std::to_string(b.num_features()) + ")");
  }
  std::vector<NodeId> ia(a.num_nodes()), ib(b.num_nodes());
  for (int i = 0; i < a.num_nodes(); ++i) ia[i] = i;
  for (int i = 0; i < b.num_nodes(); ++i) ib[i] = i;
  const ot::CostMatrices costs = ot::build_cost_matrices(
      induced_subgraph(a, ia), induced_subgraph(b, ib), a.features(), b.features(), cfg.tau);
  const ot::TransportPlan tp = ot::bapg_fgwd(costs, ot::uniform_distribution(a.num_nodes()),
                                             ot::uniform_distribution(b.num_nodes()), cfg);
  return {{"value", tp.objective},
          {"plan", matrix_json(tp.plan)},
          {"iterations", tp.iterations},
          {"residual", tp.marginal_residual},
          {"converged", tp.converged}};
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"accuracies", r.accuracies},
          {"mean", r.mean},
          {"stddev", r.stddev},
          {"ci95", {r.ci.lower, r.ci.upper}},
          {"majority_rate", r.majority_rate}};
}

nlohmann::json to_json(const SweepRow& r) {
  return {{"alpha", r.alpha}, {"mean", r.mean}, {"stddev", r.stddev}, {"accuracies", r.accuracies}};
}

nlohmann::json to_json(const BenchRow& r) {
  return {{"num_nodes", r.num_nodes},
          {"num_edges", r.num_edges},
          {"graph_fingerprint", r.graph_fingerprint},
          {"mean_ms",
           {{"encode", r.mean_ms.encode},
            {"generate", r.mean_ms.generate},
            {"sample", r.mean_ms.sample},
            {"ot", r.mean_ms.ot},
            {"node_loss", r.mean_ms.node_loss},
            {"backward", r.mean_ms.backward}}},
          {"mean_step_ms", r.mean_step_ms},
          {"mean_buffer_rows", r.mean_buffer_rows},
          {"buffer_capacity", r.buffer_capacity}};
}

}  // namespace fossil
