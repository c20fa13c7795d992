#include "iogvqa/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iogvqa/errors.hpp"
#include "iogvqa/kernels.hpp"

namespace iog {

const Matrix& Var::value() const { return tape->value(*this); }

double Var::item() const {
  const Matrix& m = value();
  if (m.size() != 1) throw ShapeError("item() on " + m.shape_string());
  return m[0];
}

Var Tape::push(Matrix value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Matrix& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::input(Matrix value) {
  return push(std::move(value), true, [](Tape&, int) {});
}

Var Tape::param(Parameter& p) {
  if (p.frozen) return constant(p.value);
  Parameter* ptr = &p;
  return push(p.value, true, [ptr](Tape& t, int self) {
    const Matrix& g = t.grad_buffer(self);
    if (ptr->grad.empty() || !ptr->grad.same_shape(g)) ptr->grad = Matrix(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) ptr->grad[i] += g[i];
  });
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ValidationError("backward: variable belongs to another tape");
  if (nodes_[loss.id].value.size() != 1) throw ShapeError("backward target must be scalar");
  for (auto& n : nodes_) n.grad = Matrix();
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
}

namespace ag {
namespace {

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw ValidationError("variable is not attached to a tape");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw ValidationError("variables live on different tapes");
  return tape_of(a);
}

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
}

template <class F, class D>
Var unary(Var a, F forward, D derivative) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  const int ia = a.id;
  return t.push(std::move(y), t.needs(ia), [ia, derivative](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    const Matrix& xin = tp.val(ia);
    const Matrix& yout = tp.val(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * derivative(xin[i], yout[i]);
  });
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Matrix out;
  kernels::gemm_nn(a.value(), b.value(), out);
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), t.needs(ia) || t.needs(ib), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    if (tp.needs(ia)) kernels::gemm_nt_acc(g, tp.val(ib), tp.grad_buffer(ia));
    if (tp.needs(ib)) kernels::gemm_tn_acc(tp.val(ia), g, tp.grad_buffer(ib));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same(a.value(), b.value(), "add");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), t.needs(ia) || t.needs(ib), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    for (int id : {ia, ib}) {
      if (!tp.needs(id)) continue;
      Matrix& gx = tp.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same(a.value(), b.value(), "sub");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), t.needs(ia) || t.needs(ib), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    if (tp.needs(ia)) {
      Matrix& gx = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.needs(ib)) {
      Matrix& gx = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same(a.value(), b.value(), "mul");
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), t.needs(ia) || t.needs(ib), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    if (tp.needs(ia)) {
      Matrix& gx = tp.grad_buffer(ia);
      const Matrix& other = tp.val(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * other[i];
    }
    if (tp.needs(ib)) {
      Matrix& gx = tp.grad_buffer(ib);
      const Matrix& other = tp.val(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * other[i];
    }
  });
}

Var add_row(Var a, Var bias) {
  Tape& t = tape_of(a, bias);
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw ShapeError("add_row: " + av.shape_string() + " + " + bv.shape_string());
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  const int ia = a.id, ib = bias.id;
  return t.push(std::move(out), t.needs(ia) || t.needs(ib), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    if (tp.needs(ia)) {
      Matrix& gx = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.needs(ib)) {
      Matrix& gb = tp.grad_buffer(ib);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var scale_rows(Var a, std::span<const double> s) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (s.size() != av.rows()) throw ShapeError("scale_rows: factor count mismatch");
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= s[r];
  std::vector<double> f(s.begin(), s.end());
  const int ia = a.id;
  return t.push(std::move(out), t.needs(ia), [ia, f = std::move(f)](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    Matrix& gx = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += g(r, c) * f[r];
  });
}

Var sigmoid(Var a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var elu(Var a) {
  return unary(
      a, [](double x) { return x > 0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.tape != &t) throw ValidationError("concat_cols: mixed tapes");
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<std::size_t> starts;
  bool req = false;
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.row_span(r).begin(), v.row_span(r).end(), out.row_span(r).begin() + c0);
    ids.push_back(p.id);
    starts.push_back(c0);
    req = req || t.needs(p.id);
    c0 += v.cols();
  }
  return t.push(std::move(out), req, [ids, starts](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.needs(ids[k])) continue;
      Matrix& gx = tp.grad_buffer(ids[k]);
      for (std::size_t r = 0; r < gx.rows(); ++r)
        for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g(r, starts[k] + c);
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t len) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (start + len > av.cols()) throw ShapeError("slice_cols out of range");
  Matrix out(av.rows(), len);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < len; ++c) out(r, c) = av(r, start + c);
  const int ia = a.id;
  return t.push(std::move(out), t.needs(ia), [ia, start](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    Matrix& gx = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, start + c) += g(r, c);
  });
}

Var gather_rows(Var a, std::span<const long> index) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  Matrix out(index.size(), av.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    const long src = index[r];
    if (src < 0) continue;
    if (static_cast<std::size_t>(src) >= av.rows())
      throw IndexError("gather_rows: index " + std::to_string(src) + " >= " + std::to_string(av.rows()));
    std::copy(av.row_span(src).begin(), av.row_span(src).end(), out.row_span(r).begin());
  }
  std::vector<long> idx(index.begin(), index.end());
  const int ia = a.id;
  return t.push(std::move(out), t.needs(ia), [ia, idx = std::move(idx)](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    Matrix& gx = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0) continue;
      for (std::size_t c = 0; c < g.cols(); ++c) gx(idx[r], c) += g(r, c);
    }
  });
}

Var segment_mean(Var a, std::span<const std::size_t> offsets) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (offsets.empty() || offsets.back() != av.rows()) throw ShapeError("segment_mean: bad offsets");
  const std::size_t groups = offsets.size() - 1;
  Matrix out(groups, av.cols());
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t n = offsets[g + 1] - offsets[g];
    if (n == 0) continue;
    for (std::size_t r = offsets[g]; r < offsets[g + 1]; ++r)
      for (std::size_t c = 0; c < av.cols(); ++c) out(g, c) += av(r, c);
    for (std::size_t c = 0; c < av.cols(); ++c) out(g, c) /= static_cast<double>(n);
  }
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  const int ia = a.id;
  return t.push(std::move(out), t.needs(ia), [ia, off = std::move(off)](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    Matrix& gx = tp.grad_buffer(ia);
    for (std::size_t grp = 0; grp + 1 < off.size(); ++grp) {
      const std::size_t n = off[grp + 1] - off[grp];
      for (std::size_t r = off[grp]; r < off[grp + 1]; ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += g(grp, c) / static_cast<double>(n);
    }
  });
}

Var segment_max(Var a, std::span<const std::size_t> offsets) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (offsets.empty() || offsets.back() > av.rows()) throw ShapeError("segment_max: bad offsets");
  const std::size_t groups = offsets.size() - 1;
  Matrix out(groups, av.cols());
  std::vector<long> argmax(groups * av.cols(), -1);
  for (std::size_t g = 0; g < groups; ++g) {
    if (offsets[g + 1] <= offsets[g]) continue;
    for (std::size_t c = 0; c < av.cols(); ++c) {
      std::size_t best = offsets[g];
      for (std::size_t r = offsets[g] + 1; r < offsets[g + 1]; ++r)
        if (av(r, c) > av(best, c)) best = r;
      out(g, c) = av(best, c);
      argmax[g * av.cols() + c] = static_cast<long>(best);
    }
  }
  const int ia = a.id;
  return t.push(std::move(out), t.needs(ia), [ia, argmax = std::move(argmax)](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    Matrix& gx = tp.grad_buffer(ia);
    for (std::size_t grp = 0; grp < g.rows(); ++grp)
      for (std::size_t c = 0; c < g.cols(); ++c) {
        const long r = argmax[grp * g.cols() + c];
        if (r >= 0) gx(r, c) += g(grp, c);
      }
  });
}

Var select_rows(Var a, Var b, std::span<const char> mask) {
  Tape& t = tape_of(a, b);
  require_same(a.value(), b.value(), "select_rows");
  if (mask.size() != a.rows()) throw ShapeError("select_rows: mask length mismatch");
  Matrix out = b.value();
  const Matrix& av = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    if (mask[r])
      std::copy(av.row_span(r).begin(), av.row_span(r).end(), out.row_span(r).begin());
  std::vector<char> m(mask.begin(), mask.end());
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), t.needs(ia) || t.needs(ib), [ia, ib, m = std::move(m)](Tape& tp, int self) {
    const Matrix& g = tp.grad_buffer(self);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const int target = m[r] ? ia : ib;
      if (!tp.needs(target)) continue;
      Matrix& gx = tp.grad_buffer(target);
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += g(r, c);
    }
  });
}

Var grouped_attention(Var q, Var k, Var v, std::span<const std::size_t> offsets, double scale,
                      std::vector<Matrix>* weights) {
  Tape& t = tape_of(q, k);
  if (v.tape != &t) throw ValidationError("grouped_attention: mixed tapes");
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  if (Q.rows() != K.rows() || Q.rows() != V.rows() || Q.cols() != K.cols())
    throw ShapeError("grouped_attention: q " + Q.shape_string() + ", k " + K.shape_string() + ", v " +
                     V.shape_string());
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != Q.rows())
    throw ShapeError("grouped_attention: offsets do not cover the rows");
  const std::size_t groups = offsets.size() - 1;
  const std::size_t dk = Q.cols(), dv = V.cols();

  std::vector<Matrix> attn(groups);
  Matrix out(Q.rows(), dv);
#pragma omp parallel for schedule(dynamic) if (groups > 8)
  for (std::ptrdiff_t gi = 0; gi < static_cast<std::ptrdiff_t>(groups); ++gi) {
    const std::size_t s = offsets[gi], n = offsets[gi + 1] - offsets[gi];
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dk; ++c) dot += Q(s + i, c) * K(s + j, c);
        a(i, j) = dot * scale;
      }
    kernels::reference::softmax_rows(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double w = a(i, j);
        for (std::size_t c = 0; c < dv; ++c) out(s + i, c) += w * V(s + j, c);
      }
    attn[gi] = std::move(a);
  }
  if (weights) *weights = attn;

  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  const int iq = q.id, ik = k.id, iv = v.id;
  const bool req = t.needs(iq) || t.needs(ik) || t.needs(iv);
  return t.push(std::move(out), req,
                [iq, ik, iv, off = std::move(off), attn = std::move(attn), scale](Tape& tp, int self) {
                  const Matrix& g = tp.grad_buffer(self);
                  const Matrix& Qv = tp.val(iq);
                  const Matrix& Kv = tp.val(ik);
                  const Matrix& Vv = tp.val(iv);
                  const std::size_t dkk = Qv.cols(), dvv = Vv.cols();
                  Matrix* gq = tp.needs(iq) ? &tp.grad_buffer(iq) : nullptr;
                  Matrix* gk = tp.needs(ik) ? &tp.grad_buffer(ik) : nullptr;
                  Matrix* gv = tp.needs(iv) ? &tp.grad_buffer(iv) : nullptr;
                  // q and k may be the same node; the per-group loop stays serial so
                  // accumulation into a shared buffer is race free.
                  for (std::size_t gi = 0; gi + 1 < off.size(); ++gi) {
                    const std::size_t s = off[gi], n = off[gi + 1] - off[gi];
                    const Matrix& a = attn[gi];
                    Matrix da(n, n);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < n; ++j) {
                        double dot = 0.0;
                        for (std::size_t c = 0; c < dvv; ++c) dot += g(s + i, c) * Vv(s + j, c);
                        da(i, j) = dot;
                      }
                    if (gv)
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < n; ++j) {
                          const double w = a(i, j);
                          for (std::size_t c = 0; c < dvv; ++c) (*gv)(s + j, c) += w * g(s + i, c);
                        }
                    Matrix ds(n, n);
                    for (std::size_t i = 0; i < n; ++i) {
                      double row = 0.0;
                      for (std::size_t j = 0; j < n; ++j) row += da(i, j) * a(i, j);
                      for (std::size_t j = 0; j < n; ++j) ds(i, j) = a(i, j) * (da(i, j) - row) * scale;
                    }
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < n; ++j) {
                        const double w = ds(i, j);
                        if (w == 0.0) continue;
                        for (std::size_t c = 0; c < dkk; ++c) {
                          if (gq) (*gq)(s + i, c) += w * Kv(s + j, c);
                          if (gk) (*gk)(s + j, c) += w * Qv(s + i, c);
                        }
                      }
                  }
                });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  const int ia = a.id;
  return t.push(Matrix(1, 1, s), t.needs(ia), [ia](Tape& tp, int self) {
    const double g = tp.grad_buffer(self)[0];
    Matrix& gx = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var mean_row_sq_norm(Var a) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (av.rows() == 0) throw ShapeError("mean_row_sq_norm: no rows");
  double s = 0.0;
  for (double x : av.values()) s += x * x;
  const double inv = 1.0 / static_cast<double>(av.rows());
  const int ia = a.id;
  return t.push(Matrix(1, 1, s * inv), t.needs(ia), [ia, inv](Tape& tp, int self) {
    const double g = tp.grad_buffer(self)[0];
    const Matrix& x = tp.val(ia);
    Matrix& gx = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * x[i] * inv * g;
  });
}

Var weighted_bce_with_logits(Var logits, const Matrix& targets, std::span<const double> class_weights) {
  Tape& t = tape_of(logits);
  const Matrix& l = logits.value();
  require_same(l, targets, "weighted_bce_with_logits");
  if (class_weights.size() != l.cols()) throw ShapeError("weighted_bce_with_logits: weight count");
  double s = 0.0;
  for (std::size_t r = 0; r < l.rows(); ++r)
    for (std::size_t c = 0; c < l.cols(); ++c) {
      const double x = l(r, c), y = targets(r, c);
      s += class_weights[c] * (softplus(x) - y * x);
    }
  std::vector<double> w(class_weights.begin(), class_weights.end());
  const int il = logits.id;
  return t.push(Matrix(1, 1, s), t.needs(il), [il, targets, w = std::move(w)](Tape& tp, int self) {
    const double g = tp.grad_buffer(self)[0];
    const Matrix& x = tp.val(il);
    Matrix& gx = tp.grad_buffer(il);
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c)
        gx(r, c) += g * w[c] * (stable_sigmoid(x(r, c)) - targets(r, c));
  });
}

Var kl_to_softmax(const Matrix& teacher, Var student_logits) {
  Tape& t = tape_of(student_logits);
  const Matrix& l = student_logits.value();
  require_same(l, teacher, "kl_to_softmax");
  Matrix probs = l;
  kernels::reference::softmax_rows(probs);
  double s = 0.0;
  for (std::size_t r = 0; r < l.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < l.cols(); ++c) mx = std::max(mx, l(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < l.cols(); ++c) z += std::exp(l(r, c) - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t c = 0; c < l.cols(); ++c) {
      const double p = teacher(r, c);
      if (p > 0.0) s += p * (std::log(p) - (l(r, c) - log_z));
    }
  }
  const int il = student_logits.id;
  return t.push(Matrix(1, 1, s), t.needs(il),
                [il, teacher, probs = std::move(probs)](Tape& tp, int self) {
                  const double g = tp.grad_buffer(self)[0];
                  Matrix& gx = tp.grad_buffer(il);
                  for (std::size_t r = 0; r < gx.rows(); ++r) {
                    double mass = 0.0;
                    for (std::size_t c = 0; c < gx.cols(); ++c) mass += teacher(r, c);
                    for (std::size_t c = 0; c < gx.cols(); ++c)
                      gx(r, c) += g * (mass * probs(r, c) - teacher(r, c));
                  }
                });
}

}  // namespace ag
}  // namespace iog
