#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "fossil/model.hpp"
#include "fossil/ot.hpp"

namespace fossil {

enum class NodeLossVariant { kFull, kV2 };

// Every training hyperparameter. Serialized as a flat JSON object with
// exactly these field names; unknown keys are rejected.
struct TrainConfig {
  double lr = 1e-3;
  double lr_fusion = 1e-3;
  double alpha = 0.5;
  double beta = 0.1;  // BAPG step
  int k = 12;         // nodes per sampled subgraph
  double tau = 0.5;
  double dropout = 0.2;
  double fusion_dropout = 0.2;
  double beta1 = 0.1;
  double beta2 = 1.0;
  int num_anchors = 0;  // 0: min(300, N / 2)
  int num_negatives = 2;
  int epochs = 300;
  int hidden = 1024;
  int out = 512;
  std::uint64_t seed = 0;
  NodeLossVariant node_loss = NodeLossVariant::kFull;
  DegreeFeature degree_feature = DegreeFeature::kRaw;

  int bapg_max_iter = 50;
  double bapg_tol = 1e-6;
  double bapg_init_jitter = 1e-3;
  bool normalize_cost_embeddings = true;
  bool shuffled_bfs = false;
  bool row_normalize_features = false;
  // Average the fusion loss's similarity term over nodes instead of summing.
  bool fusion_mean_similarity = false;
  // Restrict values to the fixed hyperparameter tuning grids.
  bool range_checked = false;

  void validate() const;
  ot::FgwConfig fgw() const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& path);
  // FNV-1a over the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
};

}  // namespace fossil
