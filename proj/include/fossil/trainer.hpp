#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fossil/adam.hpp"
#include "fossil/config.hpp"
#include "fossil/graph.hpp"
#include "fossil/losses.hpp"
#include "fossil/model.hpp"

namespace fossil {

struct PhaseTimes {
  double encode = 0;
  double generate = 0;
  double sample = 0;
  double ot = 0;
  double node_loss = 0;
  double backward = 0;

  double sum() const { return encode + generate + sample + ot + node_loss + backward; }
};

struct MetricsRecord {
  int epoch = 0;
  double l_ot = 0;
  double l_node = 0;
  double l_fusion = 0;
  double total = 0;
  bool ot_skipped = false;
  PhaseTimes ms;
  double step_ms = 0;  // wall time of the whole step
  std::size_t anchors_used = 0;
  std::size_t anchors_excluded = 0;
  Eigen::Index buffer_rows = 0;  // rows of the node-loss similarity buffer

  nlohmann::json to_json() const;
};

// Splitmix64 finalizer over (a, b); used to derive per-step seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Applies the config's feature preprocessing to a freshly loaded graph.
void prepare_graph(Graph& g, const TrainConfig& cfg);

ModelDims model_dims(const Graph& g, const TrainConfig& cfg);
ModelOptions model_options(const TrainConfig& cfg);

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, const std::string& what);
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// One optimization step per call. The graph must outlive the trainer.
class Trainer {
 public:
  Trainer(const Graph& g, const TrainConfig& cfg, int threads = 1);
  Trainer(const Graph& g, const TrainConfig& cfg, FossilModel model, int threads = 1);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // Throws DivergenceError before touching the weights when the loss or any
  // gradient is non-finite.
  MetricsRecord step(int epoch);
  // Forward and loss only, no parameter update.
  MetricsRecord evaluate_loss(int epoch);

  const FossilModel& model() const { return model_; }
  const GraphContext& context() const { return ctx_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  MetricsRecord run(int epoch, bool update);
  MetricsRecord checked_run(int epoch, bool update);

  const Graph& graph_;
  TrainConfig cfg_;
  int threads_;
  GraphContext ctx_;
  FossilModel model_;
  Adam backbone_opt_;
  Adam fusion_opt_;
};

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  std::optional<std::string> divergence;
};

// Runs cfg.epochs steps; `on_epoch` sees each record as soon as it exists.
// On divergence the model keeps the weights of the last good step.
TrainResult train(Trainer& trainer, const std::function<void(const MetricsRecord&)>& on_epoch = {});

}  // namespace fossil
