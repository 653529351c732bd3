#include "fossil/losses.hpp"

#include <algorithm>
#include <stdexcept>

namespace fossil {

namespace {

ad::Tensor column_constant(const Vector& v) { return ad::Tensor::constant(Matrix(v)); }

void accumulate_sum(std::optional<ad::Tensor>& acc, const ad::Tensor& term) {
  acc = acc ? ad::add(*acc, term) : term;
}

}  // namespace

ad::Tensor fgw_objective_at(const ad::Tensor& feature_cost, const ad::Tensor& cost1,
                            const ad::Tensor& cost2, const Matrix& plan, double alpha) {
  if (plan.rows() != cost1.rows() || plan.cols() != cost2.rows() ||
      feature_cost.rows() != plan.rows() || feature_cost.cols() != plan.cols()) {
    throw std::invalid_argument("fgw_objective_at: plan shape does not match the costs");
  }
  const ad::Tensor p_mat = ad::Tensor::constant(plan);
  std::optional<ad::Tensor> value;
  if (alpha > 0.0) accumulate_sum(value, ad::scale(ad::sum(ad::mul(feature_cost, p_mat)), alpha));
  if (alpha < 1.0) {
    const ad::Tensor p = column_constant(plan.rowwise().sum());
    const ad::Tensor q = column_constant(plan.colwise().sum().transpose());
    ad::Tensor left = ad::sum(ad::mul(ad::matmul(ad::mul(cost1, cost1), p), p));
    ad::Tensor right = ad::sum(ad::mul(ad::matmul(ad::mul(cost2, cost2), q), q));
    ad::Tensor cross =
        ad::sum(ad::mul(ad::matmul_nt(ad::matmul(cost1, p_mat), cost2), p_mat));
    ad::Tensor gw = ad::sub(ad::add(left, right), ad::scale(cross, 2.0));
    accumulate_sum(value, ad::scale(gw, 1.0 - alpha));
  }
  return *value;
}

CostTensors cost_tensors(const MeasuredSubgraph& a, const MeasuredSubgraph& b, double tau,
                         bool normalize_embeddings) {
  if (!(tau > 0)) throw std::invalid_argument("cost_tensors: tau must be positive");
  ad::Tensor ea = normalize_embeddings ? ad::row_l2_normalize(a.embeddings) : a.embeddings;
  ad::Tensor eb = normalize_embeddings ? ad::row_l2_normalize(b.embeddings) : b.embeddings;
  return {ad::exp(ad::scale(ad::matmul_nt(ea, eb), -1.0 / tau)),
          ad::exp(ad::scale(a.adjacency, -1.0 / tau)), ad::exp(ad::scale(b.adjacency, -1.0 / tau))};
}

OtLoss loss_ot(const ContrastBatch& batch, const ot::FgwConfig& cfg, const OtLossOptions& options,
               PlanCache* cache) {
  cfg.validate();
  OtLoss out;
  if (!batch.usable()) return out;
  const int negatives = batch.negatives_per_anchor;
  if (negatives < 1 || negatives > 2) {
    throw std::invalid_argument("loss_ot: negatives per anchor must be 1 or 2");
  }
  const std::size_t anchors = batch.views.size();
  const std::size_t per_anchor = 1 + static_cast<std::size_t>(negatives);

  struct PairRef {
    const MeasuredSubgraph* a;
    const MeasuredSubgraph* b;
  };
  std::vector<PairRef> pairs;
  pairs.reserve(anchors * per_anchor);
  for (std::size_t i = 0; i < anchors; ++i) {
    const auto& own = batch.views[i];
    const auto& other = batch.views[batch.partner.at(i)];
    pairs.push_back({&own.original, &own.perturbed});
    pairs.push_back({&own.original, &other.original});
    if (negatives == 2) pairs.push_back({&own.original, &other.perturbed});
  }

  std::vector<CostTensors> costs;
  costs.reserve(pairs.size());
  for (const auto& pr : pairs) {
    costs.push_back(cost_tensors(*pr.a, *pr.b, cfg.tau, options.normalize_embeddings));
  }

  std::vector<Matrix> plans;
  if (cache != nullptr && cache->filled()) {
    if (cache->plans.size() != pairs.size()) {
      throw std::invalid_argument("loss_ot: plan cache does not match the batch");
    }
    plans = cache->plans;
  } else {
    std::vector<ot::CostMatrices> values(pairs.size());
    std::vector<ot::FgwProblem> problems(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      values[p] = {costs[p].feature_cost.value(), costs[p].cost1.value(), costs[p].cost2.value(),
                   cfg.tau};
      problems[p] = {&values[p], pairs[p].a->mu, pairs[p].b->mu};
    }
    auto solved = ot::solve_batch(problems, cfg, options.threads);
    plans.reserve(solved.size());
    for (auto& s : solved) plans.push_back(std::move(s.plan));
    if (cache != nullptr) cache->plans = plans;
  }

  std::optional<ad::Tensor> total;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    ad::Tensor d =
        fgw_objective_at(costs[p].feature_cost, costs[p].cost1, costs[p].cost2, plans[p], cfg.alpha);
    ad::Tensor similarity = ad::exp(ad::scale(d, -1.0 / cfg.tau));
    const bool positive = p % per_anchor == 0;
    if (positive) {
      out.positive_distances.push_back(d.item());
      accumulate_sum(total, ad::log_sigmoid(similarity));
    } else {
      out.negative_distances.push_back(d.item());
      // log(1 - sigmoid(x)) = log sigmoid(-x)
      accumulate_sum(total, ad::log_sigmoid(ad::scale(similarity, -1.0)));
    }
  }
  out.anchors_used = anchors;
  out.value = ad::scale(*total, -1.0 / static_cast<double>(anchors * per_anchor));
  out.skipped = false;
  return out;
}

NodeLoss loss_node(const ad::Tensor& h, const ad::Tensor& h_perturbed, double tau) {
  if (h.rows() != h_perturbed.rows() || h.cols() != h_perturbed.cols()) {
    throw std::invalid_argument("loss_node: views differ in shape");
  }
  if (!(tau > 0)) throw std::invalid_argument("loss_node: tau must be positive");
  const Eigen::Index n = h.rows();
  if (n == 0) throw std::invalid_argument("loss_node: no nodes");
  const double inv_tau = 1.0 / tau;
  ad::Tensor hn = ad::row_l2_normalize(h);
  ad::Tensor pn = ad::row_l2_normalize(h_perturbed);
  ad::Tensor s_hh = ad::scale(ad::matmul_nt(hn, hn), inv_tau);
  ad::Tensor s_hp = ad::scale(ad::matmul_nt(hn, pn), inv_tau);
  ad::Tensor s_pp = ad::scale(ad::matmul_nt(pn, pn), inv_tau);
  ad::Tensor s_ph = ad::transpose(s_hp);
  const ad::Tensor off_diagonal =
      ad::Tensor::constant(Matrix::Ones(n, n) - Matrix::Identity(n, n));

  ad::Tensor positive = ad::scale(ad::row_sum(ad::mul(hn, pn)), inv_tau);
  auto direction = [&](const ad::Tensor& intra, const ad::Tensor& cross) {
    ad::Tensor denom = ad::add(ad::row_sum(ad::mul(ad::exp(intra), off_diagonal)),
                               ad::row_sum(ad::exp(cross)));
    return ad::sum(ad::sub(ad::log(denom), positive));
  };
  ad::Tensor value = ad::scale(ad::add(direction(s_hh, s_hp), direction(s_pp, s_ph)),
                               1.0 / (2.0 * static_cast<double>(n)));
  return {value, n};
}

NodeLoss loss_node_v2(const ad::Tensor& h, const ad::Tensor& h_perturbed,
                      std::span<const NodeId> nodes, double tau) {
  if (nodes.empty()) throw std::invalid_argument("loss_node_v2: empty node set");
  return loss_node(ad::gather_rows(h, nodes), ad::gather_rows(h_perturbed, nodes), tau);
}

std::vector<NodeId> batch_node_union(const ContrastBatch& batch) {
  std::vector<NodeId> out;
  for (const auto& v : batch.views) {
    out.insert(out.end(), v.original.indices.begin(), v.original.indices.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ad::Tensor loss_fusion(const ad::Tensor& lambda, const ad::Tensor& h_structure,
                       const ad::Tensor& h_feature, double alpha, double beta1, double beta2,
                       bool mean_similarity) {
  if (lambda.cols() != 1 || lambda.rows() != h_structure.rows()) {
    throw std::invalid_argument("loss_fusion: lambda must be N x 1");
  }
  ad::Tensor similarity = ad::row_cosine(h_structure, h_feature);
  ad::Tensor weighted = ad::sum(ad::mul(lambda, similarity));
  if (mean_similarity) weighted = ad::scale(weighted, 1.0 / static_cast<double>(lambda.rows()));
  ad::Tensor spread = ad::scale(ad::l2_norm(lambda), beta1);
  ad::Tensor alignment = ad::scale(ad::abs(ad::add_scalar(ad::mean(lambda), -(1.0 - alpha))), beta2);
  return ad::add(ad::add(weighted, spread), alignment);
}

LossBreakdown total_loss(std::optional<ad::Tensor> l_ot, std::optional<ad::Tensor> l_node,
                         std::optional<ad::Tensor> l_fusion) {
  LossBreakdown out;
  out.ot_skipped = !l_ot;
  out.node_skipped = !l_node;
  out.fusion_skipped = !l_fusion;
  std::optional<ad::Tensor> total;
  for (const auto* part : {&l_ot, &l_node, &l_fusion}) {
    if (*part) accumulate_sum(total, **part);
  }
  out.total = total ? *total : ad::Tensor::scalar(0.0);
  out.l_ot = std::move(l_ot);
  out.l_node = std::move(l_node);
  out.l_fusion = std::move(l_fusion);
  return out;
}

}  // namespace fossil
