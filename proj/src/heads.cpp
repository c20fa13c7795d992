#include "iogvqa/heads.hpp"

#include <algorithm>
#include <cmath>

#include "iogvqa/errors.hpp"
#include "iogvqa/kernels.hpp"

namespace iog {

JointHead::JointHead(const std::string& name, std::size_t q_dim, std::size_t v_dim, std::size_t joint_dim,
                     std::size_t answers, Rng& rng)
    : q_proj(name + ".q_proj", q_dim, joint_dim, rng),
      v_proj(name + ".v_proj", v_dim, joint_dim, rng),
      hidden(name + ".hidden", joint_dim, joint_dim, rng),
      out(name + ".out", joint_dim, answers, rng) {}

Var JointHead::logits(Tape& t, Var qv, Var fv) {
  if (qv.rows() != fv.rows()) throw ShapeError("joint head: question and visual batch sizes differ");
  if (qv.cols() != q_proj.in_dim() || fv.cols() != v_proj.in_dim())
    throw ShapeError("joint head: feature width mismatch (" + qv.value().shape_string() + ", " +
                     fv.value().shape_string() + ")");
  Var joint = ag::mul(q_proj(t, qv), v_proj(t, fv));
  return out(t, ag::elu(hidden(t, joint)));
}

ParamList JointHead::parameters() {
  ParamList p;
  q_proj.collect(p);
  v_proj.collect(p);
  hidden.collect(p);
  out.collect(p);
  return p;
}

TeacherHead::TeacherHead(const std::string& name, std::size_t in_dim, std::size_t hidden_dim, std::size_t answers,
                         Rng& rng)
    : hidden(name + ".hidden", in_dim, hidden_dim, rng), out(name + ".out", hidden_dim, answers, rng) {}

Var TeacherHead::logits(Tape& t, Var x) {
  if (x.cols() != hidden.in_dim()) throw ShapeError("teacher head: input width mismatch");
  return out(t, ag::elu(hidden(t, x)));
}

ParamList TeacherHead::parameters() {
  ParamList p;
  hidden.collect(p);
  out.collect(p);
  return p;
}

Matrix sigmoid_probabilities(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = logits[i];
    const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    p[i] = std::clamp(s, kProbEps, 1.0 - kProbEps);
  }
  return p;
}

Matrix softmax_probabilities(const Matrix& logits) {
  Matrix p = logits;
  kernels::softmax_rows(p);
  return p;
}

std::vector<double> fuse(std::span<const double> p_d, std::span<const double> p_b, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1], got " + std::to_string(beta));
  if (p_d.size() != p_b.size()) throw ShapeError("fuse: probability vectors differ in length");
  std::vector<double> out(p_d.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = beta * p_d[i] + (1.0 - beta) * p_b[i];
  return out;
}

Matrix fuse(const Matrix& p_d, const Matrix& p_b, double beta) {
  if (!p_d.same_shape(p_b)) throw ShapeError("fuse: " + p_d.shape_string() + " vs " + p_b.shape_string());
  const auto v = fuse(std::span<const double>(p_d.values()), std::span<const double>(p_b.values()), beta);
  return Matrix(p_d.rows(), p_d.cols(), v);
}

std::size_t predict(std::span<const double> p) {
  if (p.empty()) throw ValidationError("predict: empty probability vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

PredictionBundle make_prediction(std::span<const double> p_d, std::span<const double> p_b, double beta) {
  PredictionBundle b;
  b.p_d.assign(p_d.begin(), p_d.end());
  b.p_b.assign(p_b.begin(), p_b.end());
  b.p_fused = fuse(p_d, p_b, beta);
  b.answer_index = predict(b.p_fused);
  b.beta = beta;
  return b;
}

}  // namespace iog
