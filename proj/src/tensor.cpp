#include "fossil/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fossil::ad {

namespace {

thread_local Tape* g_tape = nullptr;

constexpr double kNormFloor = 1e-12;

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(const char* kind, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(kind) + ": shape mismatch " + shape_str(a) + " vs " +
                              shape_str(b));
}

void check_finite(const char* kind, const Tensor& t) {
  if (!t.value().allFinite()) {
    throw std::domain_error(std::string(kind) + ": non-finite input of shape " +
                            shape_str(t.value()));
  }
}

void check_output(const char* kind, const Matrix& m) {
  if (!m.allFinite()) {
    throw std::domain_error(std::string(kind) + ": produced non-finite values");
  }
}

Matrix& grad_of(Node& n) {
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename Expr>
void accumulate(Node& n, const Expr& g) {
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Tensor make_result(Matrix value, std::vector<NodePtr> inputs, std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->is_leaf = false;
  Tape* tape = g_tape;
  const bool needs_grad =
      tape != nullptr &&
      std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(bw);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid_scalar(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

}  // namespace

// ---- Tensor / Tape ----------------------------------------------------------

Tensor::Tensor(Matrix value, bool requires_grad, std::string name)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->name = std::move(name);
}

Tensor Tensor::scalar(double v) { return Tensor(Matrix::Constant(1, 1, v)); }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw std::invalid_argument("item: tensor is " + shape_str(value()) + ", not 1x1");
  }
  return value()(0, 0);
}

void Tensor::zero_grad() { node_->grad = Matrix::Zero(rows(), cols()); }

void Tape::backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward: loss must be 1x1, got " + shape_str(loss.value()));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward: loss does not depend on any gradient-tracked tensor");
  }
  for (auto& n : ops_) n->grad.resize(0, 0);
  grad_of(*loss.node())(0, 0) += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.size() != 0 && n.backward) n.backward(n);
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_tape) { g_tape = &tape; }
TapeScope::~TapeScope() { g_tape = previous_; }

Tape* active_tape() { return g_tape; }

// ---- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  check_finite("matmul", a);
  check_finite("matmul", b);
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) accumulate(x, self.grad * y.value.transpose());
    if (y.requires_grad) accumulate(y, x.value.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a.value(), b.value());
  check_finite("matmul_nt", a);
  check_finite("matmul_nt", b);
  Matrix out = a.value() * b.value().transpose();
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) accumulate(x, self.grad * y.value);
    if (y.requires_grad) accumulate(y, self.grad.transpose() * x.value);
  });
}

Tensor transpose(const Tensor& a) {
  check_finite("transpose", a);
  Matrix out = a.value().transpose();
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad.transpose());
  });
}

Tensor spmm(const SparseMatrix& s, const Tensor& a) {
  if (s.cols() != a.rows()) {
    throw std::invalid_argument("spmm: shape mismatch " + std::to_string(s.rows()) + "x" +
                                std::to_string(s.cols()) + " vs " + shape_str(a.value()));
  }
  check_finite("spmm", a);
  Matrix out = s * a.value();
  return make_result(std::move(out), {a.node()}, [&s](Node& self) {
    accumulate(*self.inputs[0], s.transpose() * self.grad);
  });
}

// ---- elementwise --------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a.value(), b.value());
  check_finite("add", a);
  check_finite("add", b);
  Matrix out = a.value() + b.value();
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a.value(), b.value());
  check_finite("sub", a);
  check_finite("sub", b);
  Matrix out = a.value() - b.value();
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], -self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a.value(), b.value());
  check_finite("mul", a);
  check_finite("mul", b);
  Matrix out = a.value().cwiseProduct(b.value());
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) accumulate(x, self.grad.cwiseProduct(y.value));
    if (y.requires_grad) accumulate(y, self.grad.cwiseProduct(x.value));
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_rowvec", a.value(), row.value());
  check_finite("add_rowvec", a);
  check_finite("add_rowvec", row);
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {a.node(), row.node()}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    Node& r = *self.inputs[1];
    if (r.requires_grad) accumulate(r, self.grad.colwise().sum());
  });
}

Tensor mul_colvec(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) shape_error("mul_colvec", a.value(), col.value());
  check_finite("mul_colvec", a);
  check_finite("mul_colvec", col);
  Matrix out = col.value().col(0).asDiagonal() * a.value();
  return make_result(std::move(out), {a.node(), col.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& c = *self.inputs[1];
    if (x.requires_grad) accumulate(x, c.value.col(0).asDiagonal() * self.grad);
    if (c.requires_grad) accumulate(c, self.grad.cwiseProduct(x.value).rowwise().sum());
  });
}

Tensor scale(const Tensor& a, double c) {
  check_finite("scale", a);
  Matrix out = a.value() * c;
  return make_result(std::move(out), {a.node()},
                     [c](Node& self) { accumulate(*self.inputs[0], self.grad * c); });
}

Tensor add_scalar(const Tensor& a, double c) {
  check_finite("add_scalar", a);
  Matrix out = a.value().array() + c;
  return make_result(std::move(out), {a.node()},
                     [](Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Tensor exp(const Tensor& a) {
  check_finite("exp", a);
  Matrix out = a.value().array().exp();
  check_output("exp", out);
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad.cwiseProduct(self.value));
  });
}

Tensor log(const Tensor& a) {
  check_finite("log", a);
  Matrix out = a.value().array().log();
  check_output("log", out);
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    accumulate(x, self.grad.cwiseQuotient(x.value));
  });
}

Tensor abs(const Tensor& a) {
  check_finite("abs", a);
  Matrix out = a.value().cwiseAbs();
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    Matrix sign = x.value.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
    accumulate(x, self.grad.cwiseProduct(sign));
  });
}

Tensor sigmoid(const Tensor& a) {
  check_finite("sigmoid", a);
  Matrix out = a.value().unaryExpr(&sigmoid_scalar);
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Matrix d = self.value.array() * (1.0 - self.value.array());
    accumulate(*self.inputs[0], self.grad.cwiseProduct(d));
  });
}

Tensor log_sigmoid(const Tensor& a) {
  check_finite("log_sigmoid", a);
  Matrix out = a.value().unaryExpr(&log_sigmoid_scalar);
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    Matrix d = x.value.unaryExpr([](double v) { return 1.0 - sigmoid_scalar(v); });
    accumulate(x, self.grad.cwiseProduct(d));
  });
}

Tensor prelu(const Tensor& a, const Tensor& slope) {
  if (slope.rows() != 1 || slope.cols() != 1) shape_error("prelu", a.value(), slope.value());
  check_finite("prelu", a);
  check_finite("prelu", slope);
  const double s = slope.item();
  Matrix out = a.value().unaryExpr([s](double v) { return v > 0 ? v : s * v; });
  return make_result(std::move(out), {a.node(), slope.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& sl = *self.inputs[1];
    const double s = sl.value(0, 0);
    if (x.requires_grad) {
      Matrix d = x.value.unaryExpr([s](double v) { return v > 0 ? 1.0 : s; });
      accumulate(x, self.grad.cwiseProduct(d));
    }
    if (sl.requires_grad) {
      Matrix neg = x.value.unaryExpr([](double v) { return v > 0 ? 0.0 : v; });
      accumulate(sl, Matrix::Constant(1, 1, self.grad.cwiseProduct(neg).sum()));
    }
  });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  check_finite("leaky_relu", a);
  Matrix out = a.value().unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
  return make_result(std::move(out), {a.node()}, [slope](Node& self) {
    Node& x = *self.inputs[0];
    Matrix d = x.value.unaryExpr([slope](double v) { return v > 0 ? 1.0 : slope; });
    accumulate(x, self.grad.cwiseProduct(d));
  });
}

// ---- row-wise -------------------------------------------------------------------

Tensor row_softmax(const Tensor& a) {
  check_finite("row_softmax", a);
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double mx = a.value().row(i).maxCoeff();
    out.row(i) = (a.value().row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    const Matrix& y = self.value;
    Vector dot = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix d = y.cwiseProduct(self.grad - dot.replicate(1, y.cols()));
    accumulate(*self.inputs[0], d);
  });
}

Tensor row_l2_normalize(const Tensor& a) {
  check_finite("row_l2_normalize", a);
  Vector norms = a.value().rowwise().norm();
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (norms(i) >= kNormFloor) out.row(i) = a.value().row(i) / norms(i);
  }
  return make_result(std::move(out), {a.node()}, [norms](Node& self) {
    const Matrix& y = self.value;
    Matrix d = Matrix::Zero(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      if (norms(i) < kNormFloor) continue;
      const double proj = self.grad.row(i).dot(y.row(i));
      d.row(i) = (self.grad.row(i) - proj * y.row(i)) / norms(i);
    }
    accumulate(*self.inputs[0], d);
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_error("cosine_similarity", a.value(), b.value());
  Tensor na = row_l2_normalize(a);
  Tensor nb = a.same_as(b) ? na : row_l2_normalize(b);
  return matmul_nt(na, nb);
}

Tensor row_cosine(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("row_cosine", a.value(), b.value());
  return row_sum(mul(row_l2_normalize(a), row_l2_normalize(b)));
}

// ---- indexing / reductions ----------------------------------------------------------

Tensor gather_rows(const Tensor& a, std::span<const int> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= a.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(index[r]) +
                              " outside [0, " + std::to_string(a.rows()) + ")");
    }
    out.row(static_cast<Eigen::Index>(r)) = a.value().row(index[r]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return make_result(std::move(out), {a.node()}, [idx = std::move(idx)](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Matrix& g = grad_of(x);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      g.row(idx[r]) += self.grad.row(static_cast<Eigen::Index>(r));
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Eigen::Index total = 0;
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) {
      shape_error("concat_cols", parts.front().value(), p.value());
    }
    check_finite("concat_cols", p);
    total += p.cols();
    inputs.push_back(p.node());
  }
  Matrix out(parts.front().rows(), total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result(std::move(out), std::move(inputs), [](Node& self) {
    Eigen::Index at = 0;
    for (auto& in : self.inputs) {
      const Eigen::Index c = in->value.cols();
      if (in->requires_grad) accumulate(*in, self.grad.middleCols(at, c));
      at += c;
    }
  });
}

Tensor sum(const Tensor& a) {
  check_finite("sum", a);
  return make_result(Matrix::Constant(1, 1, a.value().sum()), {a.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    accumulate(x, Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  if (a.value().size() == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Tensor row_sum(const Tensor& a) {
  check_finite("row_sum", a);
  Matrix out = a.value().rowwise().sum();
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    accumulate(x, self.grad.replicate(1, x.value.cols()));
  });
}

Tensor l2_norm(const Tensor& a) {
  check_finite("l2_norm", a);
  const double n = a.value().norm();
  return make_result(Matrix::Constant(1, 1, n), {a.node()}, [n](Node& self) {
    Node& x = *self.inputs[0];
    if (n == 0.0) {
      accumulate(x, Matrix::Zero(x.value.rows(), x.value.cols()));
      return;
    }
    accumulate(x, x.value * (self.grad(0, 0) / n));
  });
}

Tensor dropout(const Tensor& a, double rate, bool train, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return a;
  check_finite("dropout", a);
  const double keep = 1.0 - rate;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = unif(rng) < keep ? 1.0 / keep : 0.0;
  }
  Matrix out = a.value().cwiseProduct(mask);
  return make_result(std::move(out), {a.node()}, [mask = std::move(mask)](Node& self) {
    accumulate(*self.inputs[0], self.grad.cwiseProduct(mask));
  });
}

// ---- attention -----------------------------------------------------------------

namespace {

void check_support(const AttentionSupport& support, Eigen::Index rows, Eigen::Index cols) {
  if (support.offsets.size() != static_cast<std::size_t>(rows) + 1) {
    throw std::invalid_argument("attention: support has wrong row count");
  }
  for (int c : support.columns) {
    if (c < 0 || c >= cols) throw std::out_of_range("attention: support column out of range");
  }
}

}  // namespace

std::vector<double> attention_weights(const Matrix& left, const Matrix& right,
                                      const AttentionSupport& support, double leaky_slope) {
  const Eigen::Index n = left.rows();
  std::vector<double> w(support.columns.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto b = support.offsets[i];
    const auto e = support.offsets[i + 1];
    if (b == e) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (auto p = b; p < e; ++p) {
      const double pre = left(i, 0) + right(support.columns[p], 0);
      w[p] = pre > 0 ? pre : leaky_slope * pre;
      mx = std::max(mx, w[p]);
    }
    double z = 0;
    for (auto p = b; p < e; ++p) {
      w[p] = std::exp(w[p] - mx);
      z += w[p];
    }
    for (auto p = b; p < e; ++p) w[p] /= z;
  }
  return w;
}

Tensor attention_aggregate(const Tensor& z, const Tensor& left, const Tensor& right,
                           const AttentionSupport& support, double leaky_slope) {
  if (left.rows() != z.rows() || left.cols() != 1) shape_error("attention", z.value(), left.value());
  if (right.rows() != z.rows() || right.cols() != 1) {
    shape_error("attention", z.value(), right.value());
  }
  check_finite("attention", z);
  check_finite("attention", left);
  check_finite("attention", right);
  check_support(support, z.rows(), z.rows());

  std::vector<double> w = attention_weights(left.value(), right.value(), support, leaky_slope);
  const Eigen::Index n = z.rows();
  Matrix out = Matrix::Zero(n, z.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (auto p = support.offsets[i]; p < support.offsets[i + 1]; ++p) {
      out.row(i) += w[p] * z.value().row(support.columns[p]);
    }
  }
  return make_result(
      std::move(out), {z.node(), left.node(), right.node()},
      [&support, w = std::move(w), leaky_slope](Node& self) {
        Node& zn = *self.inputs[0];
        Node& ln = *self.inputs[1];
        Node& rn = *self.inputs[2];
        const Eigen::Index n = zn.value.rows();
        Matrix dz = Matrix::Zero(n, zn.value.cols());
        Matrix dl = Matrix::Zero(n, 1);
        Matrix dr = Matrix::Zero(n, 1);
        std::vector<double> dw;
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto b = support.offsets[i];
          const auto e = support.offsets[i + 1];
          dw.assign(static_cast<std::size_t>(e - b), 0.0);
          double weighted = 0;
          for (auto p = b; p < e; ++p) {
            const int j = support.columns[p];
            dz.row(j) += w[p] * self.grad.row(i);
            dw[p - b] = self.grad.row(i).dot(zn.value.row(j));
            weighted += w[p] * dw[p - b];
          }
          for (auto p = b; p < e; ++p) {
            const int j = support.columns[p];
            const double de = w[p] * (dw[p - b] - weighted);
            const double pre = ln.value(i, 0) + rn.value(j, 0);
            const double dpre = de * (pre > 0 ? 1.0 : leaky_slope);
            dl(i, 0) += dpre;
            dr(j, 0) += dpre;
          }
        }
        accumulate(zn, dz);
        accumulate(ln, dl);
        accumulate(rn, dr);
      });
}

// ---- init -------------------------------------------------------------------------

Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::uint64_t seed) {
  if (fan_in <= 0 || fan_out <= 0) {
    throw std::invalid_argument("glorot_uniform: dimensions must be positive");
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-bound, bound);
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = unif(rng);
  return m;
}

}  // namespace fossil::ad
