#include <doctest.h>

#include <cmath>

#include "iogvqa/errors.hpp"
#include "iogvqa/gan.hpp"
#include "iogvqa/losses.hpp"
#include "support.hpp"

using namespace iog;

namespace {

std::vector<double> random_distribution(std::mt19937_64& g, std::size_t n, bool sparse = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n);
  double s = 0;
  for (double& v : p) s += (v = (sparse && u(g) < 0.3) ? 0.0 : u(g));
  if (s == 0) {
    p[0] = 1.0;
    return p;
  }
  for (double& v : p) v /= s;
  return p;
}

// plain sum of binary cross-entropies, written independently
double bce_sum(const std::vector<double>& y, const std::vector<double>& p) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += -(y[i] * std::log(p[i])) - (1 - y[i]) * std::log(1 - p[i]);
  return s;
}

}  // namespace

TEST_CASE("weighted cross entropy examples") {
  CHECK(weighted_cross_entropy(std::vector<double>{1.0}, std::vector<double>{1 - 1e-12}, std::vector<double>{1.0}) <
        1e-11);
  CHECK(weighted_cross_entropy(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}, std::vector<double>{2, 1}) ==
        doctest::Approx(3 * std::log(2.0)).epsilon(1e-15));

  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> y(7), p(7), ones(7, 1.0);
    for (auto& v : y) v = u(g) < 0.5 ? 0.0 : 1.0;
    for (auto& v : p) v = u(g);
    CHECK(weighted_cross_entropy(y, p, ones) == doctest::Approx(bce_sum(y, p)).epsilon(1e-13));
  }

  CHECK_THROWS_AS(weighted_cross_entropy(std::vector<double>{1}, std::vector<double>{0.5}, std::vector<double>{-1}),
                  ValidationError);
  CHECK_THROWS_AS(weighted_cross_entropy(std::vector<double>{1}, std::vector<double>{1.0}, std::vector<double>{1}),
                  ValidationError);
  CHECK_THROWS_AS(weighted_cross_entropy(std::vector<double>{1, 0}, std::vector<double>{0.5}, std::vector<double>{1}),
                  ShapeError);
}

TEST_CASE("weighted cross entropy grows with the weight of an erring class") {
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> y(5), p(5), w(5);
    for (auto& v : y) v = u(g) < 0.5 ? 0.0 : 1.0;
    for (auto& v : p) v = u(g);
    for (auto& v : w) v = u(g) * 3;
    const std::size_t k = trial % 5;
    const double before = weighted_cross_entropy(y, p, w);
    CHECK(before >= 0.0);
    w[k] += 0.25;
    CHECK(weighted_cross_entropy(y, p, w) > before);
  }
}

TEST_CASE("KL divergence examples and errors") {
  CHECK(std::abs(kl_divergence(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}) - std::log(2.0)) < 1e-12);
  CHECK(kl_divergence(std::vector<double>{0.7, 0.3}, std::vector<double>{0.4, 0.6}) ==
        doctest::Approx(0.7 * std::log(1.75) + 0.3 * std::log(0.5)).epsilon(1e-14));
  CHECK(kl_divergence(std::vector<double>{0.7, 0.3}, std::vector<double>{0.4, 0.6}) == doctest::Approx(0.1838).epsilon(1e-3));
  // q of zero where p is not uses the floor instead of dividing by zero
  CHECK(kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}) ==
        doctest::Approx(0.5 * std::log(0.5) + 0.5 * std::log(0.5 / 1e-9)).epsilon(1e-12));
  CHECK_THROWS_AS(kl_divergence(std::vector<double>{0.5, 0.4}, std::vector<double>{0.5, 0.5}), ValidationError);
  CHECK_THROWS_AS(kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{1.5, -0.5}), ValidationError);
  CHECK_THROWS_AS(kl_divergence(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), ShapeError);
}

TEST_CASE("KL is non-negative, zero on the diagonal and asymmetric") {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + trial % 9;
    const auto p = random_distribution(g, n, trial % 2 == 0), q = random_distribution(g, n);
    CHECK(kl_divergence(p, q) >= 0.0);
    if (trial % 100 == 0) CHECK(kl_divergence(p, p) == 0.0);
  }
  const std::vector<double> p{0.7, 0.2, 0.1}, q{0.1, 0.3, 0.6};
  CHECK(std::abs(kl_divergence(p, q) - kl_divergence(q, p)) > 1e-3);
}

TEST_CASE("distillation loss") {
  LossWeights w;
  const std::vector<double> p{0.2, 0.3, 0.5};
  CHECK(distill_loss(p, p, p, w) == 0.0);

  const std::vector<double> tv{0.7, 0.2, 0.1}, tq{0.1, 0.1, 0.8};
  w.distill_q = 0.0;
  CHECK(distill_loss(tv, tq, p, w) == w.distill_v * kl_divergence(tv, p));

  w.distill_v = w.distill_q = 0.5;
  // teachers (x, 1-x) against a uniform student: KL = ln 2 - H(x); bisect for KL 0.2 and 0.4
  auto teacher_with_kl = [](double target) {
    double lo = 0.5, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
      const double x = (lo + hi) / 2;
      const double kl = std::log(2.0) + x * std::log(x) + (1 - x) * std::log(1 - x);
      (kl < target ? lo : hi) = x;
    }
    return std::vector<double>{lo, 1 - lo};
  };
  const std::vector<double> uniform{0.5, 0.5};
  const auto t02 = teacher_with_kl(0.2), t04 = teacher_with_kl(0.4);
  CHECK(kl_divergence(t02, uniform) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(distill_loss(t02, t04, uniform, w) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("total loss and bundle identities") {
  CHECK(total_loss(1.7, 3.0, 4.0, 0.0, 0.0) == 1.7);
  CHECK(total_loss(1.0, 2.0, 1.0, 0.5, 0.3) == doctest::Approx(2.3).epsilon(1e-15));
  CHECK(total_loss(0, 0, 0, 0.5, 0.3) == 0.0);

  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double wce = u(g), dis = u(g), ld = u(g), lg = u(g), lqv = u(g), lvq = u(g);
    const double l1 = u(g), l2 = u(g), a1 = u(g), a2 = u(g);
    const LossBundle b = make_bundle(wce, dis, ld, lg, lqv, lvq, l1, l2, a1, a2);
    CHECK(b.gan == ld + lg + l1 * lqv + l2 * lvq);
    CHECK(b.total == b.gan + a1 * b.wce + a2 * b.distill);
    // d total / d alpha1 == wce: the difference quotient over a unit step is exact here
    CHECK(total_loss(b.gan, wce, dis, a1 + 1.0, a2) - total_loss(b.gan, wce, dis, a1, a2) ==
          doctest::Approx(wce).epsilon(1e-12));
  }
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.alpha2 = -0.1;
  CHECK_THROWS_AS(w.validate(), ValidationError);
  w = {};
  w.class_weights = {1.0, std::nan("")};
  CHECK_THROWS_AS(w.validate(), ValidationError);
}

TEST_CASE("class weights from answer frequencies") {
  Dataset d = generate(testing_support::small_spec(40, 10)).first;
  d.instances.resize(6);
  const std::size_t n = d.answer_vocab.size();
  auto set_answer = [&](std::size_t i, std::size_t a) {
    std::fill(d.instances[i].answer_scores.begin(), d.instances[i].answer_scores.end(), 0.0);
    d.instances[i].answer_scores[a] = 1.0;
  };
  // answer 0 x4, answer 1 x2
  for (std::size_t i = 0; i < 4; ++i) set_answer(i, 0);
  set_answer(4, 1);
  set_answer(5, 1);
  const auto w = class_weights(d);
  REQUIRE(w.size() == n);
  // inverse frequencies 1/4 and 1/2, mean 3/8
  CHECK(w[0] == doctest::Approx((0.25) / 0.375).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx((0.5) / 0.375).epsilon(1e-15));
  for (std::size_t a = 2; a < n; ++a) CHECK(w[a] == 10.0);

  Dataset empty = d;
  empty.instances.clear();
  CHECK_THROWS_AS(class_weights(empty), ValidationError);

  const auto full = class_weights(generate(testing_support::small_spec(500, 10)).first);
  for (double v : full) {
    CHECK(v >= 0.1);
    CHECK(v <= 10.0);
  }
}
