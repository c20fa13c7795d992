#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "iogvqa/errors.hpp"
#include "iogvqa/gan.hpp"
#include "iogvqa/optim.hpp"
#include "support.hpp"

using namespace iog;
using testing_support::check_gradients;
using testing_support::project;
using testing_support::random_matrix;

namespace {

GanDims small_dims(std::size_t v = 4, std::size_t q = 3) { return {v, q, 5, 6}; }

void expect_grad(const testing_support::GradReport& r) {
  INFO(r.worst);
  CHECK(r.probes >= 20);
  CHECK(r.max_rel < 1e-4);
}

// Mean D(V2) after alternating updates on a 1-D feature distribution.
double toy_gan_run(std::uint64_t seed, int steps) {
  Rng rng(seed);
  FeatureGan gan("toy", {1, 1, 4, 16}, rng);
  Adam d_opt("d", gan.discriminator_parameters(), 0.005);
  ParamList g_params = gan.generator_parameters();
  for (Parameter* p : gan.transformer_parameters()) g_params.push_back(p);
  Adam g_opt("g", g_params, 0.005);
  std::normal_distribution<double> real(2.0, 0.5), unit(0.0, 1.0);
  const std::size_t batch = 64;
  auto draw = [&](std::normal_distribution<double>& dist, std::size_t cols) {
    Matrix m(batch, cols);
    for (double& v : m.values()) v = dist(rng);
    return m;
  };
  double tail = 0.0;
  int tail_n = 0;
  for (int s = 0; s < steps; ++s) {
    const Matrix v1 = draw(real, 1), v3 = draw(unit, 1), noise = draw(unit, 4);
    {
      d_opt.zero_grad();
      Tape t;
      Var v3p = gan.transform_q_to_v(t, t.constant(v3));
      Var fake = ag::detach(gan.generate(t, t.constant(noise), v3p, t.constant(v1)));
      t.backward(ag::discriminator_loss(gan.discriminate(t, t.constant(v1)), gan.discriminate(t, fake)));
      d_opt.step();
    }
    {
      g_opt.zero_grad();
      Tape t;
      Var v3p = gan.transform_q_to_v(t, t.constant(v3));
      Var d_fake = gan.discriminate(t, gan.generate(t, t.constant(noise), v3p, t.constant(v1)));
      set_frozen(gan.discriminator_parameters(), true);
      t.backward(ag::generator_loss(d_fake));
      set_frozen(gan.discriminator_parameters(), false);
      g_opt.step();
      if (s >= steps - 50) {
        double m = 0.0;
        for (double v : d_fake.value().values()) m += v;
        tail += m / batch;
        ++tail_n;
      }
    }
  }
  return tail / tail_n;
}

}  // namespace

TEST_CASE("transformers: identity, zero input, shapes") {
  Rng rng(1);
  FeatureGan gan("g", small_dims(4, 4), rng);
  gan.set_identity_transformers();
  std::mt19937_64 g(2);
  const Matrix x = random_matrix(3, 4, g);
  Tape t;
  CHECK(gan.transform_q_to_v(t, t.constant(x)).value() == x);
  CHECK(gan.transform_v_to_q(t, t.constant(x)).value() == x);

  FeatureGan rect("r", small_dims(4, 3), rng);
  CHECK(rect.transform_q_to_v(t, t.constant(Matrix(2, 3))).value() == Matrix(2, 4));
  CHECK(rect.transform_v_to_q(t, t.constant(Matrix(2, 4))).value() == Matrix(2, 3));
  CHECK_THROWS_AS(rect.transform_q_to_v(t, t.constant(Matrix(2, 4))), ShapeError);
  CHECK_THROWS_AS(rect.set_identity_transformers(), ShapeError);
}

TEST_CASE("every GAN subgraph passes a finite-difference check") {
  Rng rng(3);
  FeatureGan gan("g", small_dims(), rng);
  std::mt19937_64 g(4);
  Parameter v1("v1", random_matrix(5, 4, g)), v3("v3", random_matrix(5, 3, g)), noise("noise", random_matrix(5, 5, g));

  expect_grad(check_gradients({&gan.t_qv.weight, &gan.t_qv.bias, &v3},
                              [&](Tape& t) { return project(gan.transform_q_to_v(t, t.param(v3))); }, 25, 1));
  expect_grad(check_gradients({&gan.t_vq.weight, &gan.t_vq.bias, &v1},
                              [&](Tape& t) { return project(gan.transform_v_to_q(t, t.param(v1))); }, 25, 2));
  ParamList gen = gan.generator_parameters();
  gen.push_back(&v1);
  gen.push_back(&noise);
  expect_grad(check_gradients(gen, [&](Tape& t) {
    return project(gan.generate(t, t.param(noise), gan.transform_q_to_v(t, t.param(v3)), t.param(v1)));
  }, 40, 3));
  ParamList disc = gan.discriminator_parameters();
  disc.push_back(&v1);
  expect_grad(check_gradients(disc, [&](Tape& t) { return project(gan.discriminate(t, t.param(v1))); }, 30, 4));
  expect_grad(check_gradients(gan.parameters(), [&](Tape& t) {
    Var fake = gan.generate(t, t.constant(noise.value), gan.transform_q_to_v(t, t.constant(v3.value)),
                            t.constant(v1.value));
    return ag::discriminator_loss(gan.discriminate(t, t.constant(v1.value)), gan.discriminate(t, fake));
  }, 40, 5));
}

TEST_CASE("generator: determinism, noise sensitivity, gradient flow") {
  Rng rng(5);
  FeatureGan gan("g", small_dims(), rng);
  std::mt19937_64 g(6);
  const Matrix v1 = random_matrix(3, 4, g), v3 = random_matrix(3, 3, g);
  const Matrix n1 = random_matrix(3, 5, g), n2 = random_matrix(3, 5, g);
  auto gen = [&](const Matrix& n) {
    Tape t;
    return gan.generate(t, t.constant(n), gan.transform_q_to_v(t, t.constant(v3)), t.constant(v1)).value();
  };
  const Matrix a = gen(n1);
  CHECK(gen(n1) == a);
  CHECK(a.same_shape(v1));
  CHECK(all_finite(a));
  for (std::size_t r = 0; r < 3; ++r) {
    bool differs = false;
    const Matrix b = gen(n2);
    for (std::size_t c = 0; c < 4; ++c) differs |= a(r, c) != b(r, c);
    CHECK(differs);
  }

  zero_grads(gan.parameters());
  Tape t;
  Var fake = gan.generate(t, t.constant(n1), gan.transform_q_to_v(t, t.constant(v3)), t.constant(v1));
  t.backward(ag::generator_loss(gan.discriminate(t, fake)));
  double norm = 0.0;
  for (double v : gan.gen_in.weight.grad.values()) norm += v * v;
  CHECK(norm > 0.0);

  Tape bad;
  CHECK_THROWS_AS(gan.generate(bad, bad.constant(Matrix(3, 4)), bad.constant(v1), bad.constant(v1)), ShapeError);
}

TEST_CASE("discriminator output stays inside the clamp") {
  Rng rng(7);
  FeatureGan gan("g", small_dims(), rng);
  gan.disc_out.weight.value.fill(0.0);
  gan.disc_out.bias.value.fill(0.0);
  Tape t;
  std::mt19937_64 g(8);
  const Matrix d0 = gan.discriminate(t, t.constant(random_matrix(4, 4, g))).value();
  CHECK(d0 == Matrix(4, 1, 0.5));

  gan.disc_out.bias.value.fill(1e4);
  CHECK(gan.discriminate(t, t.constant(random_matrix(2, 4, g))).value() == Matrix(2, 1, 1.0 - kDiscEps));
  gan.disc_out.bias.value.fill(-1e4);
  CHECK(gan.discriminate(t, t.constant(random_matrix(2, 4, g))).value() == Matrix(2, 1, kDiscEps));
}

TEST_CASE("closed-form GAN losses") {
  const double ln2 = std::log(2.0);
  CHECK(generator_loss(std::vector<double>{1.0, 1.0}) == 0.0);
  CHECK(std::abs(generator_loss(std::vector<double>{0.5}) - ln2) < 1e-12);
  CHECK(generator_loss(std::vector<double>{0.2, 0.8}) ==
        doctest::Approx(-(std::log(0.2) + std::log(0.8)) / 2).epsilon(1e-15));
  CHECK(std::abs(discriminator_loss(std::vector<double>{0.5}, std::vector<double>{0.5}) - 2 * ln2) < 1e-12);
  CHECK(discriminator_loss(std::vector<double>{0.9}, std::vector<double>{0.1}) ==
        doctest::Approx(0.2107210313156526).epsilon(1e-12));

  double prev = 1e300;
  for (double e : {0.4, 0.2, 0.1, 1e-2, 1e-4, 1e-8}) {
    const double l = discriminator_loss(std::vector<double>{1 - e}, std::vector<double>{e});
    CHECK(l < prev);
    prev = l;
  }
  CHECK(prev < 1e-7);

  const Matrix v1(1, 2, {1, 0}), v3p(1, 2, {0, 1});
  CHECK(transformer_losses(v1, v1, v3p, v1).q_to_v == 2.0);
  CHECK(transformer_losses(v1, v1, v1, v1).q_to_v == 0.0);
  CHECK(transformer_losses(v1, v1, v1, v1).v_to_q == 0.0);

  CHECK(gan_total_loss(1.0, 0.5, 0.2, 0.4, 0.5, 0.5) == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(gan_total_loss(1.25, 0.5, 7.0, 9.0, 0.0, 0.0) == 1.75);
  CHECK(gan_total_loss(0, 0, 0, 0, 0.5, 0.5) == 0.0);
}

TEST_CASE("GAN loss properties") {
  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  const double h = 1e-7;
  for (int trial = 0; trial < 2000; ++trial) {
    const double r = std::clamp(u(g), 1e-3, 1 - 1e-3), f = std::clamp(u(g), 1e-3, 1 - 1e-3);
    const std::vector<double> real{r}, fake{f};
    CHECK(generator_loss(fake) >= 0.0);
    CHECK(discriminator_loss(real, fake) >= 0.0);
    const double d_real = (discriminator_loss(std::vector<double>{r + h}, fake) -
                           discriminator_loss(std::vector<double>{r - h}, fake)) / (2 * h);
    const double d_fake = (discriminator_loss(real, std::vector<double>{f + h}) -
                           discriminator_loss(real, std::vector<double>{f - h})) / (2 * h);
    CHECK(d_real < 0.0);
    CHECK(d_fake > 0.0);
    CHECK(generator_loss(std::vector<double>{f + 1e-3 * (1 - f)}) < generator_loss(fake));

    // doubling lambda1 adds exactly one more lambda1 * l_qv
    const double ld = u(g), lg = u(g), lqv = u(g), lvq = u(g), l1 = u(g), l2 = u(g);
    const double base = gan_total_loss(ld, lg, lqv, lvq, l1, l2);
    CHECK(gan_total_loss(ld, lg, lqv, lvq, 2 * l1, l2) == ld + lg + (2 * l1) * lqv + l2 * lvq);
    CHECK(base == ld + lg + l1 * lqv + l2 * lvq);
  }

  std::mt19937_64 g2(10);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix a = random_matrix(3, 4, g2), b = random_matrix(3, 2, g2), c = random_matrix(3, 4, g2),
                 d = random_matrix(3, 2, g2);
    const auto l = transformer_losses(a, b, c, d);
    CHECK(l.q_to_v >= 0.0);
    CHECK(l.v_to_q >= 0.0);
  }
}

TEST_CASE("tape GAN losses agree with the plain versions") {
  const std::vector<double> real{0.9, 0.3, 0.6}, fake{0.2, 0.5, 0.7};
  Tape t;
  CHECK(ag::generator_loss(t.constant(Matrix(3, 1, fake))).item() ==
        doctest::Approx(generator_loss(fake)).epsilon(1e-15));
  CHECK(ag::discriminator_loss(t.constant(Matrix(3, 1, real)), t.constant(Matrix(3, 1, fake))).item() ==
        doctest::Approx(discriminator_loss(real, fake)).epsilon(1e-15));
}

TEST_CASE("1-D toy GAN reaches D(fake) near 0.5") {
  std::vector<double> finals;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) finals.push_back(toy_gan_run(seed, 500));
  std::sort(finals.begin(), finals.end());
  const double median = finals[2];
  INFO("per-seed mean D(V2): " << finals[0] << " " << finals[1] << " " << finals[2] << " " << finals[3] << " "
                               << finals[4]);
  CHECK(std::abs(median - 0.5) <= 0.15);
}
