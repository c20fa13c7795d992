#include "iogvqa/optim.hpp"

#include <cmath>

#include "iogvqa/errors.hpp"

namespace iog {

double global_grad_norm(const ParamList& params) {
  double s = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.values()) s += g * g;
  return std::sqrt(s);
}

double clip_grad_norm(const ParamList& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ValidationError("clip_norm must be > 0");
  const double norm = global_grad_norm(params);
  if (std::isfinite(max_norm) && norm > max_norm) {
    const double k = max_norm / norm;
    for (Parameter* p : params)
      for (double& g : p->grad.values()) g *= k;
  }
  return norm;
}

void zero_grads(const ParamList& params) {
  for (Parameter* p : params) p->zero_grad();
}

Adam::Adam(std::string name, ParamList params, double lr, double beta1, double beta2, double eps)
    : name_(std::move(name)), params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw ValidationError("learning rate must be > 0");
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.frozen) continue;
    Matrix& m = m_[i];
    Matrix& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = b1_ * m[j] + (1.0 - b1_) * g;
      v[j] = b2_ * v[j] + (1.0 - b2_) * g * g;
      p.value[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

}  // namespace iog
