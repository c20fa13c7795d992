#include <doctest.h>

#include <cmath>

#include "iogvqa/errors.hpp"
#include "iogvqa/kernels.hpp"
#include "support.hpp"

using namespace iog;
using testing_support::check_gradients;
using testing_support::project;
using testing_support::random_matrix;

namespace {

struct Fixture {
  std::mt19937_64 rng{11};
  Parameter a{"a", random_matrix(5, 4, rng)};
  Parameter b{"b", random_matrix(5, 4, rng)};
  Parameter w{"w", random_matrix(4, 3, rng)};
  Parameter bias{"bias", random_matrix(1, 4, rng)};
  Parameter pos{"pos", [&] {
                  Matrix m = random_matrix(5, 4, rng);
                  for (double& v : m.values()) v = 0.5 + std::abs(v);
                  return m;
                }()};
};

void expect_ok(const testing_support::GradReport& r) {
  INFO(r.worst);
  CHECK(r.max_rel < 1e-6);
}

}  // namespace

TEST_CASE("elementwise and linear ops have correct gradients") {
  Fixture f;
  auto A = [&](Tape& t) { return t.param(f.a); };
  auto B = [&](Tape& t) { return t.param(f.b); };
  expect_ok(check_gradients({&f.a, &f.w}, [&](Tape& t) { return project(ag::matmul(A(t), t.param(f.w))); }, 30, 1));
  expect_ok(check_gradients({&f.a, &f.b}, [&](Tape& t) { return project(ag::add(A(t), B(t))); }, 20, 2));
  expect_ok(check_gradients({&f.a, &f.b}, [&](Tape& t) { return project(ag::sub(A(t), B(t))); }, 20, 3));
  expect_ok(check_gradients({&f.a, &f.b}, [&](Tape& t) { return project(ag::mul(A(t), B(t))); }, 20, 4));
  expect_ok(check_gradients({&f.a, &f.bias}, [&](Tape& t) { return project(ag::add_row(A(t), t.param(f.bias))); },
                            20, 5));
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return project(ag::scale(A(t), -2.5)); }, 20, 6));
  const std::vector<double> rs{0.5, -1.0, 2.0, 0.0, 3.0};
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return project(ag::scale_rows(A(t), rs)); }, 20, 7));
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return project(ag::sigmoid(A(t))); }, 20, 8));
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return project(ag::tanh(A(t))); }, 20, 9));
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return project(ag::elu(A(t))); }, 20, 10));
  expect_ok(check_gradients({&f.pos}, [&](Tape& t) { return project(ag::log(t.param(f.pos))); }, 20, 11));
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return project(ag::clamp(A(t), -0.5, 0.5)); }, 20, 12));
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return ag::sum(A(t)); }, 10, 13));
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return ag::mean(A(t)); }, 10, 14));
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return ag::mean_row_sq_norm(A(t)); }, 20, 15));
}

TEST_CASE("structural ops have correct gradients") {
  Fixture f;
  expect_ok(check_gradients({&f.a, &f.b}, [&](Tape& t) {
    const Var parts[] = {t.param(f.a), t.param(f.b)};
    return project(ag::concat_cols(parts));
  }, 30, 1));
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return project(ag::slice_cols(t.param(f.a), 1, 2)); }, 20, 2));
  const std::vector<long> idx{4, -1, 0, 4, 2, 2};
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return project(ag::gather_rows(t.param(f.a), idx)); }, 20, 3));
  const std::vector<std::size_t> offs{0, 2, 2, 5};
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return project(ag::segment_mean(t.param(f.a), offs)); }, 20, 4));
  expect_ok(check_gradients({&f.a}, [&](Tape& t) { return project(ag::segment_max(t.param(f.a), offs)); }, 20, 5));
  const std::vector<char> mask{1, 0, 0, 1, 1};
  expect_ok(check_gradients({&f.a, &f.b}, [&](Tape& t) {
    return project(ag::select_rows(t.param(f.a), t.param(f.b), mask));
  }, 20, 6));
}

TEST_CASE("grouped attention gradient, including shared query and key") {
  std::mt19937_64 rng(5);
  Parameter q("q", random_matrix(6, 3, rng)), k("k", random_matrix(6, 3, rng)), v("v", random_matrix(6, 4, rng));
  const std::vector<std::size_t> offs{0, 1, 4, 6};
  expect_ok(check_gradients({&q, &k, &v}, [&](Tape& t) {
    return project(ag::grouped_attention(t.param(q), t.param(k), t.param(v), offs, 0.7));
  }, 40, 1));
  expect_ok(check_gradients({&q, &v}, [&](Tape& t) {
    Var qq = t.param(q);
    return project(ag::grouped_attention(qq, qq, t.param(v), offs, 0.7));
  }, 40, 2));
}

TEST_CASE("grouped attention forward equals a direct computation") {
  std::mt19937_64 rng(6);
  const Matrix q = random_matrix(5, 3, rng), k = random_matrix(5, 3, rng), v = random_matrix(5, 2, rng);
  const std::vector<std::size_t> offs{0, 2, 5};
  Tape t;
  std::vector<Matrix> weights;
  const Matrix out = ag::grouped_attention(t.constant(q), t.constant(k), t.constant(v), offs, 0.5, &weights).value();
  REQUIRE(weights.size() == 2);
  for (std::size_t g = 0; g < 2; ++g) {
    const std::size_t lo = offs[g], n = offs[g + 1] - offs[g];
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double mx = -1e300, z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t d = 0; d < 3; ++d) s[j] += q(lo + i, d) * k(lo + j, d);
        s[j] *= 0.5;
        mx = std::max(mx, s[j]);
      }
      for (double& x : s) z += (x = std::exp(x - mx));
      for (std::size_t c = 0; c < 2; ++c) {
        double o = 0.0;
        for (std::size_t j = 0; j < n; ++j) o += s[j] / z * v(lo + j, c);
        CHECK(out(lo + i, c) == doctest::Approx(o).epsilon(1e-12));
      }
      for (std::size_t j = 0; j < n; ++j) CHECK(weights[g](i, j) == doctest::Approx(s[j] / z).epsilon(1e-12));
    }
  }
}

TEST_CASE("loss ops: weighted BCE and softmax KL gradients and values") {
  std::mt19937_64 rng(7);
  Parameter logits("logits", random_matrix(4, 5, rng, 3.0));
  Matrix y(4, 5);
  y(0, 1) = 1.0;
  y(1, 4) = 1.0;
  y(2, 0) = 0.6;
  y(3, 3) = 1.0;
  const std::vector<double> w{0.5, 1.0, 2.0, 1.5, 0.1};
  expect_ok(check_gradients({&logits}, [&](Tape& t) { return ag::weighted_bce_with_logits(t.param(logits), y, w); },
                            20, 1));
  Matrix p(4, 5, 0.2);
  p(0, 0) = 0.0;
  p(0, 1) = 0.4;
  expect_ok(check_gradients({&logits}, [&](Tape& t) { return ag::kl_to_softmax(p, t.param(logits)); }, 20, 2));

  // values against direct formulas
  Tape t;
  const double bce = ag::weighted_bce_with_logits(t.constant(logits.value), y, w).item();
  double ref = 0.0;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      const double s = 1.0 / (1.0 + std::exp(-logits.value(r, c)));
      ref -= w[c] * (y(r, c) * std::log(s) + (1 - y(r, c)) * std::log(1 - s));
    }
  CHECK(bce == doctest::Approx(ref).epsilon(1e-12));

  Matrix sm = logits.value;
  kernels::softmax_rows(sm);
  double kl = 0.0;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c)
      if (p(r, c) > 0) kl += p(r, c) * std::log(p(r, c) / sm(r, c));
  CHECK(ag::kl_to_softmax(p, t.constant(logits.value)).item() == doctest::Approx(kl).epsilon(1e-12));
}

TEST_CASE("tape bookkeeping") {
  std::mt19937_64 rng(8);
  Parameter a("a", random_matrix(2, 2, rng));
  SUBCASE("frozen parameters act as constants") {
    a.frozen = true;
    Tape t;
    Var x = t.param(a);
    CHECK_FALSE(t.requires_grad(x));
    t.backward(ag::sum(ag::mul(x, x)));
    CHECK(a.grad == Matrix(2, 2));
  }
  SUBCASE("detach stops the gradient") {
    Tape t;
    Var x = t.param(a);
    t.backward(ag::sum(ag::add(x, ag::detach(ag::scale(x, 3.0)))));
    CHECK(a.grad == Matrix(2, 2, 1.0));
  }
  SUBCASE("input leaves keep their gradient") {
    Tape t;
    Var x = t.input(a.value);
    t.backward(ag::sum(ag::scale(x, 2.0)));
    CHECK(t.grad(x) == Matrix(2, 2, 2.0));
  }
  SUBCASE("errors") {
    Tape t;
    Var x = t.param(a);
    CHECK_THROWS_AS(t.backward(x), ShapeError);
    const std::vector<long> bad{2};
    CHECK_THROWS_AS(ag::gather_rows(x, bad), IndexError);
    CHECK_THROWS_AS(ag::matmul(x, t.constant(Matrix(3, 1))), ShapeError);
  }
}
