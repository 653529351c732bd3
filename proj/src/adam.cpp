#include "fossil/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace fossil {

Adam::Adam(std::vector<ad::Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.lr > 0)) throw std::invalid_argument("Adam: learning rate must be positive");
  for (const auto& p : params_) {
    if (!p.is_leaf() || !p.requires_grad()) {
      throw std::invalid_argument("Adam: '" + p.name() + "' is not a trainable leaf");
    }
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void Adam::step() {
  for (const auto& p : params_) {
    if (!p.has_grad()) throw std::logic_error("Adam: parameter '" + p.name() + "' has no gradient");
  }
  ++step_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const Matrix& g = p.grad();
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    auto m_hat = m_[i].array() / c1;
    auto v_hat = v_[i].array() / c2;
    p.mutable_value().array() -= options_.lr * m_hat / (v_hat.sqrt() + options_.eps);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace fossil
