#include "fossil/probe.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace fossil {

namespace {

Matrix standardized(const LinearProbe& p, const Matrix& x) {
  if (x.cols() != p.center.size()) {
    throw std::invalid_argument("probe: expected " + std::to_string(p.center.size()) +
                                " features, got " + std::to_string(x.cols()));
  }
  return ((x.rowwise() - p.center.transpose()).array().rowwise() * p.scale.transpose().array())
      .matrix();
}

void softmax_rows(Matrix& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z.row(i).array() -= z.row(i).maxCoeff();
    z.row(i) = z.row(i).array().exp().matrix();
    z.row(i) /= z.row(i).sum();
  }
}

// Largest eigenvalue of a^T a / n by power iteration, slightly inflated.
double gram_spectral_bound(const Matrix& a) {
  const double n = static_cast<double>(a.rows());
  Vector v = Vector::Ones(a.cols()).normalized();
  double lambda = 0;
  for (int it = 0; it < 100; ++it) {
    Vector w = a.transpose() * (a * v) / n;
    lambda = w.norm();
    if (lambda == 0) return 0;
    v = w / lambda;
  }
  return 1.01 * lambda;
}

}  // namespace

Matrix LinearProbe::logits(const Matrix& x) const {
  return (standardized(*this, x) * weight).rowwise() + bias.transpose();
}

std::vector<int> LinearProbe::predict(const Matrix& x) const {
  const Matrix z = logits(x);
  std::vector<int> out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index arg = 0;
    z.row(i).maxCoeff(&arg);
    out[i] = static_cast<int>(arg);
  }
  return out;
}

LinearProbe fit_probe(const Matrix& x, std::span<const int> labels, int num_classes,
                      const ProbeOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n == 0) throw std::invalid_argument("fit_probe: no training rows");
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw std::invalid_argument("fit_probe: label count does not match rows");
  }
  if (num_classes < 1) throw std::invalid_argument("fit_probe: need at least one class");
  std::vector<int> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw std::invalid_argument("fit_probe: label out of range");
    ++counts[y];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) {
      throw std::invalid_argument("fit_probe: class " + std::to_string(c) +
                                  " is absent from the training mask");
    }
  }

  LinearProbe p;
  p.center = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - p.center.transpose();
  p.scale.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sd = std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(n));
    p.scale(j) = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  Matrix a(n, d + 1);
  a.leftCols(d) = (centered.array().rowwise() * p.scale.transpose().array()).matrix();
  a.col(d).setOnes();

  Matrix y = Matrix::Zero(n, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) y(i, labels[i]) = 1.0;

  // Softmax cross-entropy has Hessian at most 1/2 times the feature Gram.
  const double smooth = 0.5 * gram_spectral_bound(a) + options.l2;
  const double step = 1.0 / smooth;
  Matrix w = Matrix::Zero(d + 1, num_classes);
  for (int it = 0; it < options.iterations; ++it) {
    Matrix prob = a * w;
    softmax_rows(prob);
    Matrix grad = a.transpose() * (prob - y) / static_cast<double>(n);
    grad.topRows(d) += options.l2 * w.topRows(d);
    w -= step * grad;
  }
  p.weight = w.topRows(d);
  p.bias = w.row(d).transpose();
  return p;
}

double accuracy(const LinearProbe& probe, const Matrix& x, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    throw std::invalid_argument("accuracy: label count does not match rows");
  }
  if (labels.empty()) throw std::invalid_argument("accuracy: no rows");
  const auto pred = probe.predict(x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

ConfidenceInterval bootstrap_ci(std::span<const double> values, int resamples, double level,
                                std::uint64_t seed) {
  if (values.empty()) throw std::invalid_argument("bootstrap_ci: no values");
  if (resamples < 1 || !(level > 0 && level < 1)) {
    throw std::invalid_argument("bootstrap_ci: bad resample count or level");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(resamples);
  for (double& m : means) {
    double s = 0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
    m = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  const double tail = (1.0 - level) / 2.0;
  return {quantile(tail), quantile(1.0 - tail)};
}

Matrix gather(const Matrix& x, std::span<const NodeId> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = x.row(rows[i]);
  return out;
}

EvalReport evaluate_embeddings(const Matrix& embeddings, const Graph& g, SplitMode mode, int seeds,
                               const ProbeOptions& options) {
  if (!g.has_labels()) throw std::invalid_argument("evaluate: graph has no labels");
  if (embeddings.rows() != g.num_nodes()) {
    throw std::invalid_argument("evaluate: embedding rows do not match the graph");
  }
  if (seeds < 1) throw std::invalid_argument("evaluate: need at least one seed");
  const auto& labels = g.labels();
  const int classes = g.num_classes();
  auto labels_of = [&](const std::vector<NodeId>& nodes) {
    std::vector<int> out;
    out.reserve(nodes.size());
    for (NodeId v : nodes) out.push_back(labels[v]);
    return out;
  };

  EvalReport r;
  for (int s = 0; s < seeds; ++s) {
    const SplitSpec split = make_splits(g, mode, static_cast<std::uint64_t>(s));
    LinearProbe probe =
        fit_probe(gather(embeddings, split.train), labels_of(split.train), classes, options);
    const std::vector<int> test_labels = labels_of(split.test);
    r.accuracies.push_back(accuracy(probe, gather(embeddings, split.test), test_labels));
    std::vector<int> counts(classes, 0);
    for (int y : test_labels) ++counts[y];
    r.majority_rate += static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
                       static_cast<double>(test_labels.size());
    r.probes.push_back(std::move(probe));
  }
  const double n = static_cast<double>(seeds);
  r.majority_rate /= n;
  for (double a : r.accuracies) r.mean += a / n;
  double var = 0;
  for (double a : r.accuracies) var += (a - r.mean) * (a - r.mean);
  r.stddev = seeds > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  r.ci = bootstrap_ci(r.accuracies);
  return r;
}

}  // namespace fossil
