#pragma once

#include <optional>
#include <vector>

#include "fossil/ot.hpp"
#include "fossil/sampler.hpp"
#include "fossil/tensor.hpp"

namespace fossil {

// Plans solved for one batch, keyed by pair index. Reusing a filled cache
// evaluates the loss at fixed couplings, which is exactly the function the
// tape differentiates.
struct PlanCache {
  std::vector<Matrix> plans;
  bool filled() const { return !plans.empty(); }
};

struct OtLossOptions {
  int threads = 1;
  // Cost matrices use unit-normalized embedding rows.
  bool normalize_embeddings = true;
};

struct OtLoss {
  ad::Tensor value;  // undefined when skipped
  bool skipped = true;
  std::size_t anchors_used = 0;
  std::vector<double> positive_distances;
  std::vector<double> negative_distances;  // anchor-major, M per anchor
};

// Differentiable FGW objective at a fixed coupling.
ad::Tensor fgw_objective_at(const ad::Tensor& feature_cost, const ad::Tensor& cost1,
                            const ad::Tensor& cost2, const Matrix& plan, double alpha);

struct CostTensors {
  ad::Tensor feature_cost;
  ad::Tensor cost1;
  ad::Tensor cost2;
};

CostTensors cost_tensors(const MeasuredSubgraph& a, const MeasuredSubgraph& b, double tau,
                         bool normalize_embeddings);

// -1/(|S|(M+1)) sum_i [log sig(exp(-D_pos/tau)) + sum_j log(1 - sig(exp(-D_neg_j/tau)))]
OtLoss loss_ot(const ContrastBatch& batch, const ot::FgwConfig& cfg, const OtLossOptions& options,
               PlanCache* cache = nullptr);

struct NodeLoss {
  ad::Tensor value;
  Eigen::Index buffer_rows = 0;  // rows of each similarity matrix held
};

// Symmetrized InfoNCE with intra- and cross-view negatives.
NodeLoss loss_node(const ad::Tensor& h, const ad::Tensor& h_perturbed, double tau);
// Same loss restricted to `nodes`.
NodeLoss loss_node_v2(const ad::Tensor& h, const ad::Tensor& h_perturbed,
                      std::span<const NodeId> nodes, double tau);

// Sorted union of all subgraph node sets in the batch.
std::vector<NodeId> batch_node_union(const ContrastBatch& batch);

// sum_i lambda_i s(h^s_i, h^f_i) + beta1 ||lambda||_2 + beta2 |mean(lambda) - (1 - alpha)|
// With `mean_similarity` the first term is divided by N.
ad::Tensor loss_fusion(const ad::Tensor& lambda, const ad::Tensor& h_structure,
                       const ad::Tensor& h_feature, double alpha, double beta1, double beta2,
                       bool mean_similarity = false);

struct LossBreakdown {
  std::optional<ad::Tensor> l_ot;
  std::optional<ad::Tensor> l_node;
  std::optional<ad::Tensor> l_fusion;
  ad::Tensor total;
  bool ot_skipped = false;
  bool node_skipped = false;
  bool fusion_skipped = false;
  std::size_t anchors_used = 0;
  std::size_t anchors_excluded = 0;

  static double value_of(const std::optional<ad::Tensor>& t) { return t ? t->item() : 0.0; }
};

LossBreakdown total_loss(std::optional<ad::Tensor> l_ot, std::optional<ad::Tensor> l_node,
                         std::optional<ad::Tensor> l_fusion);

}  // namespace fossil
