#pragma once

#include <span>
#include <string>
#include <vector>

#include "iogvqa/autograd.hpp"
#include "iogvqa/layers.hpp"

// Answer heads: the Destination and Bias models share the joint form
// sigma(W . f(Q^v, F_V)), teachers see one modality each. Fusion and argmax
// implement the weighted-average inference rule.

namespace iog {

/// Probabilities are kept inside [kProbEps, 1 - kProbEps] so that log terms stay finite.
inline constexpr double kProbEps = 1e-12;

/// f(q, v) = ELU(((q Wq + bq) * (v Wv + bv)) Wh + bh); logits = f Wo + bo.
class JointHead {
 public:
  JointHead() = default;
  JointHead(const std::string& name, std::size_t q_dim, std::size_t v_dim, std::size_t joint_dim,
            std::size_t answers, Rng& rng);

  Var logits(Tape& t, Var qv, Var fv);
  /// Elementwise sigmoid of the logits (on the tape, unclamped).
  Var forward(Tape& t, Var qv, Var fv) { return ag::sigmoid(logits(t, qv, fv)); }
  ParamList parameters();

  Linear q_proj, v_proj, hidden, out;
};

/// Single-modality head: logits = ELU(x W1 + b1) W2 + b2.
class TeacherHead {
 public:
  TeacherHead() = default;
  TeacherHead(const std::string& name, std::size_t in_dim, std::size_t hidden_dim, std::size_t answers, Rng& rng);

  Var logits(Tape& t, Var x);
  ParamList parameters();

  Linear hidden, out;
};

/// Clamped elementwise sigmoid.
Matrix sigmoid_probabilities(const Matrix& logits);
/// Row-wise softmax.
Matrix softmax_probabilities(const Matrix& logits);

/// beta * p_d + (1 - beta) * p_b. Throws ValidationError for beta outside [0, 1].
std::vector<double> fuse(std::span<const double> p_d, std::span<const double> p_b, double beta);
Matrix fuse(const Matrix& p_d, const Matrix& p_b, double beta);

/// Index of the largest entry; ties go to the lowest index.
std::size_t predict(std::span<const double> p);

struct PredictionBundle {
  std::vector<double> p_b;
  std::vector<double> p_d;
  std::vector<double> p_fused;
  std::size_t answer_index = 0;
  double beta = 0.7;
};

PredictionBundle make_prediction(std::span<const double> p_d, std::span<const double> p_b, double beta);

}  // namespace iog
