#pragma once

// Fused Gromov-Wasserstein distance solved with Bregman alternated projected
// gradient (BAPG) steps.
//
// FGW(mu, nu) = min_{P in Pi(mu, nu)} < alpha M + (1 - alpha) L(C1, C2) (x) P, P >
// with the squared loss L_{ijkl} = (C1[i,k] - C2[j,l])^2.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fossil/tensor.hpp"

namespace fossil::ot {

struct FgwConfig {
  double alpha = 0.5;
  double beta = 0.1;  // BAPG step: P <- P * exp(-G / beta)
  int max_iter = 50;
  double tol = 1e-6;  // on ||P_i - P_{i-1}||_F
  double tau = 0.5;
  // P0 = mu nu^T * (1 + jitter U), renormalized. 0 gives the plain product.
  double init_jitter = 1e-3;
  std::uint64_t seed = 0;
  // Rescale the final iterate onto the coupling polytope (row residual <= tol).
  bool project_feasible = true;
  int projection_max_iter = 1000;

  void validate() const;
};

struct CostMatrices {
  Matrix feature_cost;  // n x m
  Matrix cost1;         // n x n
  Matrix cost2;         // m x m
  double tau = 1.0;
};

struct TransportPlan {
  Matrix plan;
  Vector mu;
  Vector nu;
  double objective = 0;
  int iterations = 0;
  double marginal_residual = 0;  // ||P 1 - mu||_inf
  bool converged = false;
  int projection_rounds = 0;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// M = exp(-H1 H2^T / tau), C1 = exp(-A1 / tau), C2 = exp(-A2 / tau).
CostMatrices build_cost_matrices(const Matrix& a1, const Matrix& a2, const Matrix& h1,
                                 const Matrix& h2, double tau);

// (C1.^2) p 1^T + 1 q^T (C2.^2)^T - 2 C1 P C2^T, p = P 1, q = P^T 1.
// O(n^2 m + n m^2) instead of the O(n^2 m^2) direct sum.
Matrix tensor_product(const Matrix& c1, const Matrix& c2, const Matrix& plan);

double fgw_objective(const CostMatrices& costs, const Matrix& plan, double alpha);

Vector uniform_distribution(Eigen::Index n);

TransportPlan bapg_fgwd(const CostMatrices& costs, const Vector& mu, const Vector& nu,
                        const FgwConfig& cfg);

// Moves an approximately feasible plan onto Pi(mu, nu) by down-scaling
// over-full rows and columns and spreading the missing mass as a rank-one
// term. Changes the plan by at most 2(|P1 - mu|_1 + |P^T 1 - nu|_1) in l1.
void round_to_polytope(Matrix& plan, const Vector& mu, const Vector& nu);

// ---- batched solves -----------------------------------------------------------

struct FgwProblem {
  const CostMatrices* costs = nullptr;
  Vector mu;
  Vector nu;
};

// Problem i uses seed cfg.seed + i for its initial jitter, so the parallel and
// serial drivers return identical plans.
std::vector<TransportPlan> solve_batch(std::span<const FgwProblem> problems, const FgwConfig& cfg,
                                       int threads);
std::vector<TransportPlan> solve_batch_serial(std::span<const FgwProblem> problems,
                                              const FgwConfig& cfg);

// ---- exact small-instance references ----------------------------------------------

// Optimal transport value for n = m <= 10 with uniform marginals, by
// enumerating permutations (vertices of the Birkhoff polytope), scaled by 1/n.
double wd_exact_small(const Matrix& feature_cost, const Vector& mu, const Vector& nu);

// Minimum of the FGW objective for n = m = 2, uniform marginals, over the
// coupling family [[t, 1/2 - t], [1/2 - t, t]] via a dense grid plus local
// refinement.
double fgw_brute_small(const CostMatrices& costs, const FgwConfig& cfg);

}  // namespace fossil::ot
