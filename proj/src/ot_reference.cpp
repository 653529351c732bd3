#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "fossil/ot.hpp"

namespace fossil::ot {

namespace {

bool is_uniform(const Vector& d) {
  const double u = 1.0 / static_cast<double>(d.size());
  return (d.array() - u).abs().maxCoeff() < 1e-12;
}

}  // namespace

double wd_exact_small(const Matrix& feature_cost, const Vector& mu, const Vector& nu) {
  const Eigen::Index n = feature_cost.rows();
  if (n != feature_cost.cols() || n < 1 || n > 10) {
    throw std::invalid_argument("wd_exact_small: needs a square cost with 1 <= n <= 10");
  }
  if (mu.size() != n || nu.size() != n || !is_uniform(mu) || !is_uniform(nu)) {
    throw std::invalid_argument("wd_exact_small: marginals must be uniform");
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double v = 0;
    for (Eigen::Index i = 0; i < n; ++i) v += feature_cost(i, perm[i]);
    best = std::min(best, v);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

double fgw_brute_small(const CostMatrices& costs, const FgwConfig& cfg) {
  if (costs.cost1.rows() != 2 || costs.cost2.rows() != 2 || costs.feature_cost.rows() != 2 ||
      costs.feature_cost.cols() != 2) {
    throw std::invalid_argument("fgw_brute_small: only 2 x 2 instances are supported");
  }
  auto value = [&](double t) {
    Matrix p(2, 2);
    p << t, 0.5 - t, 0.5 - t, t;
    return fgw_objective(costs, p, cfg.alpha);
  };
  constexpr int kGrid = 10000;
  constexpr double kHalf = 0.5;
  double best_t = 0;
  double best = value(0);
  for (int s = 1; s <= kGrid; ++s) {
    const double t = kHalf * s / kGrid;
    const double v = value(t);
    if (v < best) {
      best = v;
      best_t = t;
    }
  }
  // Golden-section refinement on the bracketing grid cell pair.
  double lo = std::max(0.0, best_t - kHalf / kGrid);
  double hi = std::min(kHalf, best_t + kHalf / kGrid);
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - r * (hi - lo);
  double b = lo + r * (hi - lo);
  double fa = value(a);
  double fb = value(b);
  for (int it = 0; it < 80; ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - r * (hi - lo);
      fa = value(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + r * (hi - lo);
      fb = value(b);
    }
  }
  return std::min({best, fa, fb});
}

}  // namespace fossil::ot
