#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "iogvqa/autograd.hpp"
#include "iogvqa/util.hpp"

namespace iog {

using ParamList = std::vector<Parameter*>;

/// Glorot-uniform matrix.
inline Matrix glorot(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(in, out);
  for (double& v : m.values()) v = u(rng);
  return m;
}

/// y = x W + b
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : weight(name + ".weight", glorot(in, out, rng)), bias(name + ".bias", Matrix(1, out)) {}

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  Var operator()(Tape& t, Var x) { return ag::add_row(ag::matmul(x, t.param(weight)), t.param(bias)); }

  void collect(ParamList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

inline void set_frozen(const ParamList& params, bool frozen) {
  for (Parameter* p : params) p->frozen = frozen;
}

}  // namespace iog
