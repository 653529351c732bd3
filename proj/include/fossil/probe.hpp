#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fossil/graph.hpp"

namespace fossil {

struct ProbeOptions {
  int iterations = 200;
  double l2 = 1e-4;
};

// Multinomial logistic regression on standardized features.
struct LinearProbe {
  Vector center;  // per-feature mean of the training rows
  Vector scale;   // per-feature 1/std (1 for constant features)
  Matrix weight;  // D x C
  Vector bias;    // C

  Matrix logits(const Matrix& x) const;
  std::vector<int> predict(const Matrix& x) const;
};

// Full-batch gradient descent with step 1/L, L the smoothness bound of the
// objective. Sees only the training rows and their labels; every class in
// [0, num_classes) must appear among them.
LinearProbe fit_probe(const Matrix& x, std::span<const int> labels, int num_classes,
                      const ProbeOptions& options = {});

double accuracy(const LinearProbe& probe, const Matrix& x, std::span<const int> labels);

struct ConfidenceInterval {
  double lower = 0;
  double upper = 0;
};

// Percentile bootstrap of the mean.
ConfidenceInterval bootstrap_ci(std::span<const double> values, int resamples = 1000,
                                double level = 0.95, std::uint64_t seed = 0);

struct EvalReport {
  std::vector<double> accuracies;  // one per split seed
  double mean = 0;
  double stddev = 0;
  ConfidenceInterval ci;
  double majority_rate = 0;  // mean over seeds of the largest test-class share
  std::vector<LinearProbe> probes;
};

// Probes frozen embeddings on `seeds` splits (split seed s = 0 .. seeds-1).
EvalReport evaluate_embeddings(const Matrix& embeddings, const Graph& g, SplitMode mode, int seeds,
                               const ProbeOptions& options = {});

Matrix gather(const Matrix& x, std::span<const NodeId> rows);

}  // namespace fossil
