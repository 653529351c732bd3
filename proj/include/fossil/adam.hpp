#pragma once

#include <cstdint>
#include <vector>

#include "fossil/tensor.hpp"

namespace fossil {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Grads are read, never cleared.
class Adam {
 public:
  Adam(std::vector<ad::Tensor> params, AdamOptions options);

  void step();
  void zero_grad();

  std::int64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<ad::Tensor>& params() const { return params_; }
  const Matrix& first_moment(std::size_t i) const { return m_[i]; }
  const Matrix& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<ad::Tensor> params_;
  AdamOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t step_ = 0;
};

}  // namespace fossil
