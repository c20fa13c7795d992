#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "iogvqa/autograd.hpp"
#include "iogvqa/config.hpp"
#include "iogvqa/dataset.hpp"
#include "iogvqa/evaluation.hpp"
#include "iogvqa/layers.hpp"
#include "iogvqa/trainer.hpp"

namespace testing_support {

using iog::Matrix;
using iog::Parameter;
using iog::Tape;
using iog::Var;

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = u(rng);
  return m;
}

/// Scalar loss sum(out * R) with a fixed random R, so every output entry
/// carries an O(1) gradient.
inline Var project(Var out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Matrix r = random_matrix(out.rows(), out.cols(), rng);
  return iog::ag::sum(iog::ag::mul(out, out.tape->constant(std::move(r))));
}

struct GradReport {
  double max_rel = 0.0;
  int probes = 0;
  std::string worst;
};

/// Central finite differences on `probes` random entries drawn across
/// `params`, compared to the tape's reverse-mode gradient.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
inline GradReport check_gradients(const std::vector<Parameter*>& params, const std::function<Var(Tape&)>& loss,
                                  int probes, std::uint64_t seed, double h = 1e-5) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    Var l = loss(t);
    t.backward(l);
  }
  std::vector<Matrix> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);

  std::size_t total = 0;
  for (Parameter* p : params) total += p->value.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  GradReport rep;
  for (int k = 0; k < probes; ++k) {
    std::size_t flat = pick(rng), pi = 0;
    while (flat >= params[pi]->value.size()) flat -= params[pi++]->value.size();
    double& x = params[pi]->value[flat];
    const double x0 = x;
    x = x0 + h;
    double up;
    {
      Tape t;
      up = loss(t).item();
    }
    x = x0 - h;
    double down;
    {
      Tape t;
      down = loss(t).item();
    }
    x = x0;
    const double num = (up - down) / (2.0 * h);
    const double ana = analytic[pi][flat];
    const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6});
    if (rel > rep.max_rel) {
      rep.max_rel = rel;
      rep.worst = params[pi]->name + "[" + std::to_string(flat) + "] analytic " + std::to_string(ana) +
                  " numeric " + std::to_string(num);
    }
    ++rep.probes;
  }
  return rep;
}

/// Small dimensions that keep unit tests fast.
inline iog::TrainingConfig tiny_config(std::uint64_t seed = 1) {
  iog::TrainingConfig c = iog::TrainingConfig::desk_scale();
  c.hidden = 24;
  c.d_w = 12;
  c.d_a = 8;
  c.attention_d = 8;
  c.noise_dim = 8;
  c.batch_size = 32;
  c.epochs = 3;
  c.teacher_epochs = 1;
  c.seed = seed;
  return c;
}

/// The dimensions used by the slower end-to-end checks.
inline iog::TrainingConfig compact_config(std::uint64_t seed = 1) {
  iog::TrainingConfig c = iog::TrainingConfig::desk_scale();
  c.hidden = 64;
  c.d_w = 32;
  c.d_a = 16;
  c.attention_d = 16;
  c.noise_dim = 32;
  c.seed = seed;
  return c;
}

inline iog::SyntheticSpec small_spec(std::size_t train = 200, std::size_t test = 100) {
  iog::SyntheticSpec s;
  s.num_train = train;
  s.num_test = test;
  return s;
}

/// Full-batch WCE-only training on the first 64 training instances. Returns
/// the first step (checked every 10) at which fused train accuracy reached
/// 0.95, or 0 if it never did within `max_steps`.
inline std::size_t overfit_steps(std::uint64_t seed, std::size_t max_steps = 300) {
  const iog::Dataset sub = iog::head(iog::generate(small_spec(200, 10)).first, 64);
  iog::TrainingConfig c = compact_config(seed);
  c.enable_gan = c.enable_distill = false;
  c.batch_size = 64;
  iog::Trainer tr(c, sub);
  std::vector<std::size_t> idx(sub.instances.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const iog::Batch b = iog::make_batch(sub, idx);
  for (std::size_t s = 1; s <= max_steps; ++s) {
    tr.train_step(b);
    if (s % 10 == 0 && iog::evaluate(tr.model(), sub, c.beta).overall >= 0.95) return s;
  }
  return 0;
}

}  // namespace testing_support
