#include <exception>

#include <omp.h>

#include "fossil/ot.hpp"

namespace fossil::ot {

namespace {

TransportPlan solve_one(const FgwProblem& problem, const FgwConfig& cfg, std::size_t index) {
  FgwConfig local = cfg;
  local.seed = cfg.seed + index;
  return bapg_fgwd(*problem.costs, problem.mu, problem.nu, local);
}

}  // namespace

std::vector<TransportPlan> solve_batch(std::span<const FgwProblem> problems, const FgwConfig& cfg,
                                       int threads) {
  cfg.validate();
  std::vector<TransportPlan> plans(problems.size());
  std::exception_ptr failure;
  const auto count = static_cast<std::int64_t>(problems.size());
  const int team = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(team)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      plans[i] = solve_one(problems[i], cfg, static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(fossil_ot_batch_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return plans;
}

std::vector<TransportPlan> solve_batch_serial(std::span<const FgwProblem> problems,
                                              const FgwConfig& cfg) {
  cfg.validate();
  std::vector<TransportPlan> plans;
  plans.reserve(problems.size());
  for (std::size_t i = 0; i < problems.size(); ++i) plans.push_back(solve_one(problems[i], cfg, i));
  return plans;
}

}  // namespace fossil::ot
