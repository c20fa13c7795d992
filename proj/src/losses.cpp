#include "iogvqa/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iogvqa/errors.hpp"
#include "iogvqa/gan.hpp"

namespace iog {
namespace {

constexpr double kNormTol = 1e-6;
constexpr double kQFloor = 1e-9;

void require_distribution(std::span<const double> p, const char* what) {
  double s = 0.0;
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) throw ValidationError(std::string(what) + ": entries must be finite and >= 0");
    s += x;
  }
  if (std::abs(s - 1.0) > kNormTol)
    throw ValidationError(std::string(what) + ": not normalised (sum " + std::to_string(s) + ")");
}

}  // namespace

void LossWeights::validate() const {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError(std::string(name) + " must be finite and >= 0");
  };
  check(alpha1, "alpha1");
  check(alpha2, "alpha2");
  check(distill_v, "distill_v");
  check(distill_q, "distill_q");
  for (double w : class_weights) check(w, "class weight");
}

double weighted_cross_entropy(std::span<const double> y, std::span<const double> p, std::span<const double> w) {
  if (y.size() != p.size() || y.size() != w.size()) throw ShapeError("weighted_cross_entropy: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(w[i] >= 0.0)) throw ValidationError("weighted_cross_entropy: negative class weight");
    if (!(p[i] > 0.0 && p[i] < 1.0)) throw ValidationError("weighted_cross_entropy: prediction outside (0, 1)");
    s += w[i] * (y[i] * std::log(p[i]) + (1.0 - y[i]) * std::log(1.0 - p[i]));
  }
  return -s;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: length mismatch");
  require_distribution(p, "kl_divergence p");
  require_distribution(q, "kl_divergence q");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    s += p[i] * std::log(p[i] / std::max(q[i], kQFloor));
  }
  // rounding can leave a tiny negative value when p == q
  return std::max(s, 0.0);
}

double distill_loss(std::span<const double> p_t_v, std::span<const double> p_t_q, std::span<const double> p_s,
                    const LossWeights& weights) {
  return weights.distill_v * kl_divergence(p_t_v, p_s) + weights.distill_q * kl_divergence(p_t_q, p_s);
}

double total_loss(double l_gan, double l_wce, double l_distill, double alpha1, double alpha2) {
  return l_gan + alpha1 * l_wce + alpha2 * l_distill;
}

LossBundle make_bundle(double wce, double distill, double l_d, double l_g, double l_qv, double l_vq,
                       double lambda1, double lambda2, double alpha1, double alpha2) {
  LossBundle b;
  b.wce = wce;
  b.distill = distill;
  b.l_d = l_d;
  b.l_g = l_g;
  b.l_qv = l_qv;
  b.l_vq = l_vq;
  b.gan = gan_total_loss(l_d, l_g, l_qv, l_vq, lambda1, lambda2);
  b.total = total_loss(b.gan, wce, distill, alpha1, alpha2);
  return b;
}

std::vector<double> class_weights(const Dataset& train) {
  if (train.instances.empty()) throw ValidationError("class_weights: empty training split");
  const std::size_t n = train.answer_vocab.size();
  std::vector<double> freq(n, 0.0);
  for (const QAInstance& q : train.instances) freq[q.best_answer()] += 1.0;
  std::vector<double> w(n);
  double seen_sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t a = 0; a < n; ++a)
    if (freq[a] > 0) {
      w[a] = 1.0 / freq[a];
      seen_sum += w[a];
      ++seen;
    }
  const double mean = seen_sum / static_cast<double>(seen);
  for (std::size_t a = 0; a < n; ++a) w[a] = freq[a] > 0 ? std::clamp(w[a] / mean, 0.1, 10.0) : 10.0;
  return w;
}

}  // namespace iog
