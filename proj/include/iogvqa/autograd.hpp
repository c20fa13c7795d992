#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iogvqa/matrix.hpp"

// Minimal reverse-mode automatic differentiation over Matrix values.
//
// A Tape records one forward pass. Leaves are constants, inputs or Parameters;
// every op appends a node holding its value and a closure that pushes the
// node's gradient to its inputs. Tape::backward walks the nodes in reverse and
// accumulates into Parameter::grad. Tapes are single-use and single-threaded.

namespace iog {

/// A named trainable tensor with its gradient accumulator.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value)
      : name(std::move(name)), value(std::move(value)), grad(this->value.rows(), this->value.cols()) {}

  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Scalar value of a 1x1 node.
  double item() const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose gradient is kept on the tape (read it back with grad()).
  Var input(Matrix value);
  /// Leaf bound to a parameter. Frozen parameters behave as constants.
  Var param(Parameter& p);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() target w.r.t. this node. Zero-sized if none flowed.
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  using BackwardFn = std::function<void(Tape&, int)>;
  Var push(Matrix value, bool requires_grad, BackwardFn fn);
  /// Gradient buffer of node `id`, allocated (zero) on first use.
  Matrix& grad_buffer(int id);
  bool needs(int id) const { return nodes_[id].requires_grad; }
  const Matrix& val(int id) const { return nodes_[id].value; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

namespace ag {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a (r x c) + bias (1 x c) broadcast over rows.
Var add_row(Var a, Var bias);
Var scale(Var a, double s);
/// a (r x c) scaled row-wise by the constant column `s` (length r).
Var scale_rows(Var a, std::span<const double> s);

Var sigmoid(Var a);
Var tanh(Var a);
/// Exponential linear unit with alpha = 1.
Var elu(Var a);
Var log(Var a);
/// Elementwise clamp; gradient is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);
/// Gradient stop: returns a constant copy.
Var detach(Var a);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t len);
/// Row gather; index -1 produces a zero row.
Var gather_rows(Var a, std::span<const long> index);
/// Rows [offsets[g], offsets[g+1]) averaged into row g.
Var segment_mean(Var a, std::span<const std::size_t> offsets);
/// Row g = column-wise max over rows [offsets[g], offsets[g+1]); empty groups give zeros.
Var segment_max(Var a, std::span<const std::size_t> offsets);
/// Row r = mask[r] ? a[r] : b[r].
Var select_rows(Var a, Var b, std::span<const char> mask);

/// Scaled dot-product attention restricted to row groups: rows of group g
/// attend only to keys of group g. out = softmax(q k^T * scale) v per group.
/// When `weights` is non-null it receives one attention matrix per group.
Var grouped_attention(Var q, Var k, Var v, std::span<const std::size_t> offsets, double scale,
                      std::vector<Matrix>* weights = nullptr);

Var sum(Var a);
Var mean(Var a);
/// Sum of squares of each row, averaged over rows.
Var mean_row_sq_norm(Var a);

/// -sum_{r,c} w_c [y log sigmoid(l) + (1-y) log(1-sigmoid(l))], evaluated stably from logits.
Var weighted_bce_with_logits(Var logits, const Matrix& targets, std::span<const double> class_weights);
/// sum_r KL(teacher_r || softmax(student_logits_r)); teacher rows are distributions.
Var kl_to_softmax(const Matrix& teacher, Var student_logits);

}  // namespace ag
}  // namespace iog
