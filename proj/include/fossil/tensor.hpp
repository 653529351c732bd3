#pragma once

// Dense f64 matrices with a dynamic reverse-mode tape.
//
// Ops only record themselves when a Tape is active on the calling thread
// (see TapeScope) and at least one input requires a gradient. Without an
// active tape every op is a plain value computation, which is what the
// parallel OT workers and evaluation code rely on.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace fossil {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

}  // namespace fossil

namespace fossil::ad {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  bool is_leaf = true;
  std::string name;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node& self)> backward;
};

using NodePtr = std::shared_ptr<Node>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false, std::string name = {});
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value, std::string name) {
    return Tensor(std::move(value), true, std::move(name));
  }
  static Tensor scalar(double v);

  bool defined() const { return static_cast<bool>(node_); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  const Matrix& value() const { return node_->value; }
  // Leaf mutation only (optimizer steps, finite-difference probes).
  Matrix& mutable_value() { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Matrix& grad() const { return node_->grad; }
  void zero_grad();
  void clear_grad() { node_->grad.resize(0, 0); }
  const std::string& name() const { return node_->name; }

  const NodePtr& node() const { return node_; }
  bool same_as(const Tensor& other) const { return node_ == other.node_; }

 private:
  NodePtr node_;
};

class Tape {
 public:
  void record(NodePtr node) { ops_.push_back(std::move(node)); }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // Fills grads of every requires_grad tensor reachable from `loss`.
  // Leaf grads accumulate across calls; intermediate grads are reset.
  void backward(const Tensor& loss);

 private:
  std::vector<NodePtr> ops_;
};

// Makes `tape` the recording target for ops on this thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor transpose(const Tensor& a);
// `s` is a constant and must outlive the backward pass.
Tensor spmm(const SparseMatrix& s, const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);          // elementwise
Tensor add_rowvec(const Tensor& a, const Tensor& row);  // row: 1 x cols
Tensor mul_colvec(const Tensor& a, const Tensor& col);  // col: rows x 1, diag(col) * a
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_sigmoid(const Tensor& a);
Tensor prelu(const Tensor& a, const Tensor& slope);  // slope: 1 x 1
Tensor leaky_relu(const Tensor& a, double slope);

Tensor row_softmax(const Tensor& a);
Tensor row_l2_normalize(const Tensor& a);
Tensor cosine_similarity(const Tensor& a, const Tensor& b);  // rows(a) x rows(b)
Tensor row_cosine(const Tensor& a, const Tensor& b);         // rows x 1

Tensor gather_rows(const Tensor& a, std::span<const int> index);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor row_sum(const Tensor& a);  // rows x 1
Tensor l2_norm(const Tensor& a);  // 1 x 1, gradient 0 at the origin

Tensor dropout(const Tensor& a, double rate, bool train, std::mt19937_64& rng);

// Single-head attention aggregation over a sparsity pattern.
// `support` lists, per row i, the column ids j attended to (self included by
// the caller when wanted) and must outlive the backward pass.
// e_ij = leaky(left_i + right_j); out_i = sum_j softmax_j(e_ij) z_j.
struct AttentionSupport {
  std::vector<std::int64_t> offsets;  // size rows + 1
  std::vector<int> columns;
};
Tensor attention_aggregate(const Tensor& z, const Tensor& left, const Tensor& right,
                           const AttentionSupport& support, double leaky_slope);
// Attention coefficients for inspection (no tape).
std::vector<double> attention_weights(const Matrix& left, const Matrix& right,
                                      const AttentionSupport& support, double leaky_slope);

// ---- initialization ---------------------------------------------------------

Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::uint64_t seed);

}  // namespace fossil::ad
