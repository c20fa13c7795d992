#pragma once

#include <string>
#include <vector>

#include "iogvqa/layers.hpp"

namespace iog {

/// Global L2 norm over the gradients of `params`.
double global_grad_norm(const ParamList& params);

/// Rescales gradients so their global norm is at most max_norm. Returns the
/// norm before clipping. An infinite max_norm leaves gradients untouched.
double clip_grad_norm(const ParamList& params, double max_norm);

void zero_grads(const ParamList& params);

class Adam {
 public:
  Adam() = default;
  Adam(std::string name, ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad() { zero_grads(params_); }

  const std::string& name() const { return name_; }
  const ParamList& params() const { return params_; }
  long steps() const { return t_; }
  double learning_rate() const { return lr_; }

  // state access for checkpoints
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  std::string name_;
  ParamList params_;
  std::vector<Matrix> m_, v_;
  double lr_ = 0.001, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace iog
