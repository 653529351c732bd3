#include "fossil/ot.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace fossil::ot {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void check_distribution(const Vector& d, Eigen::Index n, const char* name) {
  require(d.size() == n, std::string("bapg_fgwd: ") + name + " has wrong length");
  require((d.array() > 0).all() && d.allFinite(),
          std::string("bapg_fgwd: ") + name + " must be strictly positive");
  require(std::abs(d.sum() - 1.0) < 1e-9, std::string("bapg_fgwd: ") + name + " must sum to 1");
}

// Adds log(target_i) - logsumexp(row_i) to every row.
void normalize_rows(Matrix& log_p, const Vector& target) {
  for (Eigen::Index i = 0; i < log_p.rows(); ++i) {
    const double mx = log_p.row(i).maxCoeff();
    const double lse = mx + std::log((log_p.row(i).array() - mx).exp().sum());
    log_p.row(i).array() += std::log(target(i)) - lse;
  }
}

void normalize_cols(Matrix& log_p, const Vector& target) {
  for (Eigen::Index j = 0; j < log_p.cols(); ++j) {
    const double mx = log_p.col(j).maxCoeff();
    const double lse = mx + std::log((log_p.col(j).array() - mx).exp().sum());
    log_p.col(j).array() += std::log(target(j)) - lse;
  }
}

// Plan entries this small carry no mass worth keeping, and letting them decay
// into subnormals slows every following product by an order of magnitude.
constexpr double kNegligible = 1e-200;

Matrix exp_flushed(const Matrix& log_p) {
  Matrix p = log_p.array().exp();
  return (p.array() < kNegligible).select(0.0, p);
}

// KL projection of exp(log_p) onto Pi(mu, nu) by Sinkhorn scaling, kept as
// diag(u) K diag(v) with each row of K shifted to a unit maximum. Scalings
// that drift far from 1 are folded back into the log iterate so they cannot
// overflow when the kernel's support barely admits a feasible plan.
Matrix sinkhorn_projection(Matrix log_p, const Vector& mu, const Vector& nu, double tol,
                           int max_rounds, int& rounds) {
  constexpr double kFoldAbove = 1e50;
  const Eigen::Index n = log_p.rows();
  Matrix kernel(n, log_p.cols());
  auto rebuild = [&] {
    for (Eigen::Index i = 0; i < n; ++i) log_p.row(i).array() -= log_p.row(i).maxCoeff();
    kernel = exp_flushed(log_p);
  };
  rebuild();
  Vector u = Vector::Ones(n);
  Vector v = Vector::Ones(log_p.cols());
  Vector kv = kernel * v;
  Vector ktu(log_p.cols());
  for (int round = 0; round < max_rounds; ++round) {
    u.array() = mu.array() / kv.array();
    ktu.noalias() = kernel.transpose() * u;
    if (!(ktu.array() > 0).all() || !u.allFinite()) break;
    v.array() = nu.array() / ktu.array();
    ++rounds;
    if (u.maxCoeff() > kFoldAbove || v.maxCoeff() > kFoldAbove || u.minCoeff() < 1 / kFoldAbove ||
        v.minCoeff() < 1 / kFoldAbove) {
      log_p.colwise() += u.array().log().matrix();
      log_p.rowwise() += v.array().log().matrix().transpose();
      rebuild();
      u.setOnes();
      v.setOnes();
    }
    kv.noalias() = kernel * v;
    if ((u.array() * kv.array() - mu.array()).abs().maxCoeff() <= tol) break;
  }
  return u.asDiagonal() * kernel * v.asDiagonal();
}

}  // namespace

void round_to_polytope(Matrix& plan, const Vector& mu, const Vector& nu) {
  const Vector rows = plan.rowwise().sum();
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    if (rows(i) > mu(i)) plan.row(i) *= mu(i) / rows(i);
  }
  const Vector cols = plan.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < plan.cols(); ++j) {
    if (cols(j) > nu(j)) plan.col(j) *= nu(j) / cols(j);
  }
  const Vector row_gap = (mu - plan.rowwise().sum()).cwiseMax(0.0);
  const Vector col_gap = (nu - plan.colwise().sum().transpose()).cwiseMax(0.0);
  const double mass = row_gap.sum();
  if (mass > 0) plan += row_gap * col_gap.transpose() / mass;
}

void FgwConfig::validate() const {
  require(alpha >= 0.0 && alpha <= 1.0, "FgwConfig: alpha must lie in [0,1]");
  require(beta > 0.0 && std::isfinite(beta), "FgwConfig: beta must be positive");
  require(max_iter >= 1, "FgwConfig: max_iter must be at least 1");
  require(tol >= 0.0, "FgwConfig: tol must be non-negative");
  require(tau > 0.0 && std::isfinite(tau), "FgwConfig: tau must be positive");
  require(init_jitter >= 0.0, "FgwConfig: init_jitter must be non-negative");
}

CostMatrices build_cost_matrices(const Matrix& a1, const Matrix& a2, const Matrix& h1,
                                 const Matrix& h2, double tau) {
  require(tau > 0.0, "build_cost_matrices: tau must be positive");
  require(a1.rows() == a1.cols() && a2.rows() == a2.cols(),
          "build_cost_matrices: adjacency slices must be square");
  require(h1.rows() == a1.rows() && h2.rows() == a2.rows() && h1.cols() == h2.cols(),
          "build_cost_matrices: embedding shapes do not match the adjacency slices");
  CostMatrices c;
  c.tau = tau;
  c.feature_cost = (-(h1 * h2.transpose()) / tau).array().exp();
  c.cost1 = (-a1 / tau).array().exp();
  c.cost2 = (-a2 / tau).array().exp();
  return c;
}

Matrix tensor_product(const Matrix& c1, const Matrix& c2, const Matrix& plan) {
  require(c1.rows() == c1.cols() && c2.rows() == c2.cols() && plan.rows() == c1.rows() &&
              plan.cols() == c2.rows(),
          "tensor_product: shape mismatch");
  const Vector p = plan.rowwise().sum();
  const Vector q = plan.colwise().sum().transpose();
  const Vector left = c1.cwiseProduct(c1) * p;
  const Vector right = c2.cwiseProduct(c2) * q;
  Matrix out = -2.0 * (c1 * plan * c2.transpose());
  out.colwise() += left;
  out.rowwise() += right.transpose();
  return out.cwiseMax(0.0);
}

double fgw_objective(const CostMatrices& costs, const Matrix& plan, double alpha) {
  double value = 0;
  if (alpha > 0.0) value += alpha * costs.feature_cost.cwiseProduct(plan).sum();
  if (alpha < 1.0) {
    value += (1.0 - alpha) * tensor_product(costs.cost1, costs.cost2, plan).cwiseProduct(plan).sum();
  }
  return value;
}

Vector uniform_distribution(Eigen::Index n) {
  require(n > 0, "uniform_distribution: empty support");
  return Vector::Constant(n, 1.0 / static_cast<double>(n));
}

TransportPlan bapg_fgwd(const CostMatrices& costs, const Vector& mu, const Vector& nu,
                        const FgwConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = costs.cost1.rows();
  const Eigen::Index m = costs.cost2.rows();
  require(costs.cost1.cols() == n && costs.cost2.cols() == m, "bapg_fgwd: C1, C2 must be square");
  require(costs.feature_cost.rows() == n && costs.feature_cost.cols() == m,
          "bapg_fgwd: M must be n x m");
  check_distribution(mu, n, "mu");
  check_distribution(nu, m, "nu");
  if (!costs.feature_cost.allFinite() || !costs.cost1.allFinite() || !costs.cost2.allFinite()) {
    throw SolverError("bapg_fgwd: non-finite cost matrix");
  }

  const double alpha = cfg.alpha;
  auto gradient = [&](const Matrix& plan) {
    Matrix g;
    if (alpha < 1.0) {
      g = (2.0 * (1.0 - alpha)) * tensor_product(costs.cost1, costs.cost2, plan);
      if (alpha > 0.0) g += alpha * costs.feature_cost;
    } else {
      g = alpha * costs.feature_cost;
    }
    return g;
  };

  Matrix plan = mu * nu.transpose();
  if (cfg.init_jitter > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index i = 0; i < plan.size(); ++i) {
      plan.data()[i] *= 1.0 + cfg.init_jitter * unif(rng);
    }
    plan /= plan.sum();
  }
  Matrix log_p = plan.array().log();

  TransportPlan out;
  const double inv_beta = 1.0 / cfg.beta;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    Matrix log_row = log_p - inv_beta * gradient(plan);
    normalize_rows(log_row, mu);
    const Matrix row_plan = exp_flushed(log_row);

    Matrix log_col = log_row - inv_beta * gradient(row_plan);
    normalize_cols(log_col, nu);
    Matrix next = exp_flushed(log_col);
    if (!log_col.allFinite() || !next.allFinite()) {
      throw SolverError("bapg_fgwd: non-finite values at iteration " + std::to_string(it));
    }
    const double delta = (next - plan).norm();
    plan = std::move(next);
    log_p = std::move(log_col);
    out.iterations = it;
    if (delta <= cfg.tol) {
      out.converged = true;
      break;
    }
  }

  if (cfg.project_feasible) {
    if ((plan.rowwise().sum() - mu).cwiseAbs().maxCoeff() > cfg.tol) {
      Matrix projected = sinkhorn_projection(log_p, mu, nu, cfg.tol, cfg.projection_max_iter,
                                             out.projection_rounds);
      if (out.projection_rounds > 0 && projected.allFinite()) plan = std::move(projected);
    }
    round_to_polytope(plan, mu, nu);
  }

  out.objective = fgw_objective(costs, plan, alpha);
  out.marginal_residual = (plan.rowwise().sum() - mu).cwiseAbs().maxCoeff();
  out.plan = std::move(plan);
  out.mu = mu;
  out.nu = nu;
  return out;
}

}  // namespace fossil::ot
