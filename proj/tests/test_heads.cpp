#include <doctest.h>

#include <cmath>

#include "iogvqa/errors.hpp"
#include "iogvqa/heads.hpp"
#include "support.hpp"

using namespace iog;
using testing_support::check_gradients;
using testing_support::project;
using testing_support::random_matrix;

TEST_CASE("sigmoid probabilities: closed forms and range") {
  CHECK(sigmoid_probabilities(Matrix(1, 3)) == Matrix(1, 3, 0.5));
  const Matrix p = sigmoid_probabilities(Matrix(1, 2, {std::log(3.0), 0.0}));
  CHECK(p(0, 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(p(0, 1) == 0.5);

  const Matrix extreme = sigmoid_probabilities(Matrix(1, 4, {800.0, -800.0, 40.0, -40.0}));
  for (double v : extreme.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(extreme[0] == 1.0 - kProbEps);
  CHECK(extreme[1] == kProbEps);
}

TEST_CASE("softmax of uniform logits is uniform") {
  const Matrix p = softmax_probabilities(Matrix(2, 4, 3.7));
  for (double v : p.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("joint and teacher heads: gradients, shapes, purity") {
  Rng rng(1);
  JointHead head("h", 6, 5, 8, 4, rng);
  TeacherHead teacher("t", 5, 7, 4, rng);
  std::mt19937_64 g(2);
  Parameter qv("qv", random_matrix(3, 6, g)), fv("fv", random_matrix(3, 5, g));

  ParamList params = head.parameters();
  params.push_back(&qv);
  params.push_back(&fv);
  auto rep = check_gradients(params, [&](Tape& t) {
    return project(head.forward(t, t.param(qv), t.param(fv)), 5);
  }, 60, 1);
  INFO(rep.worst);
  CHECK(rep.max_rel < 1e-4);

  ParamList tp = teacher.parameters();
  tp.push_back(&fv);
  auto trep = check_gradients(tp, [&](Tape& t) { return project(teacher.logits(t, t.param(fv)), 6); }, 40, 2);
  INFO(trep.worst);
  CHECK(trep.max_rel < 1e-4);

  Tape t;
  const Matrix probs = head.forward(t, t.constant(qv.value), t.constant(fv.value)).value();
  CHECK(probs.rows() == 3);
  CHECK(probs.cols() == 4);
  for (double v : probs.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK_THROWS_AS(head.logits(t, t.constant(Matrix(3, 5)), t.constant(fv.value)), ShapeError);
  CHECK_THROWS_AS(head.logits(t, t.constant(Matrix(2, 6)), t.constant(fv.value)), ShapeError);

  set_frozen(teacher.parameters(), true);
  const Matrix first = teacher.logits(t, t.constant(fv.value)).value();
  const Matrix second = teacher.logits(t, t.constant(fv.value)).value();
  CHECK(first == second);
}

TEST_CASE("fuse: endpoints, worked example, affine in beta") {
  const std::vector<double> pd{0.9, 0.1}, pb{0.2, 0.6};
  CHECK(fuse(pd, pb, 1.0) == pd);
  CHECK(fuse(pd, pb, 0.0) == pb);
  const auto f = fuse(pd, pb, 0.7);
  CHECK(f[0] == doctest::Approx(0.69).epsilon(1e-15));
  CHECK(f[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(fuse(pd, pb, 1.01), ValidationError);
  CHECK_THROWS_AS(fuse(pd, pb, -0.1), ValidationError);
  CHECK_THROWS_AS(fuse(pd, pb, std::nan("")), ValidationError);

  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(6), b(6);
    for (auto& v : a) v = u(g);
    for (auto& v : b) v = u(g);
    const double beta = u(g) * 0.9, h = 0.1;
    const auto lo = fuse(a, b, beta), hi = fuse(a, b, beta + h);
    for (std::size_t i = 0; i < 6; ++i) CHECK((hi[i] - lo[i]) / h == doctest::Approx(a[i] - b[i]).epsilon(1e-9));
    // identical inputs: prediction does not depend on beta
    CHECK(predict(fuse(a, a, beta)) == predict(a));
  }
}

TEST_CASE("predict: argmax, tie-break and monotone invariance") {
  CHECK(predict(std::vector<double>{0.2, 0.9, 0.1}) == 1);
  CHECK(predict(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(predict(std::vector<double>{0.1, 0.7, 0.7}) == 1);
  CHECK_THROWS_AS(predict(std::vector<double>{}), ValidationError);

  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(9), q(9), r(9);
    for (auto& v : p) v = u(g);
    for (std::size_t i = 0; i < 9; ++i) {
      q[i] = std::log(p[i]);
      r[i] = std::pow(p[i], 3.0) * 5.0 - 2.0;
    }
    CHECK(predict(q) == predict(p));
    CHECK(predict(r) == predict(p));
  }

  const auto b = make_prediction(std::vector<double>{0.9, 0.1}, std::vector<double>{0.2, 0.6}, 0.7);
  CHECK(b.answer_index == 0);
  CHECK(b.beta == 0.7);
  CHECK(b.p_fused[1] == doctest::Approx(0.25));
}
