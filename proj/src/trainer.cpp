#include "iogvqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "iogvqa/errors.hpp"
#include "iogvqa/evaluation.hpp"
#include "iogvqa/gan.hpp"

namespace iog {
namespace {

Matrix normal_noise(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

void concat(ParamList& a, const ParamList& b) { a.insert(a.end(), b.begin(), b.end()); }

ParamList gen_and_transformers(FeatureGan& g) {
  ParamList p = g.generator_parameters();
  concat(p, g.transformer_parameters());
  return p;
}

}  // namespace

Trainer::Trainer(const TrainingConfig& config, const Dataset& train)
    : config_(config),
      train_(train),
      data_rng_(make_rng(config.seed, "train.data")),
      noise_rng_(make_rng(config.seed, "train.noise")),
      teacher_rng_(make_rng(config.seed, "train.teacher")) {
  config.validate();
  if (train.instances.empty()) throw ValidationError("training split is empty");
  model_ = std::make_unique<IogModel>(config, DataDims::of(train));
  class_weights_ = iog::class_weights(train);
  IogModel& m = *model_;
  if (!config.word_vectors.empty()) {
    m.question.load_word_vectors(config.word_vectors, train.word_vocab);
    m.teacher_q_encoder.load_word_vectors(config.word_vectors, train.word_vocab);
  }
  const double lr = config.learning_rate;
  opt_main_ = Adam("main", m.main_parameters(), lr);
  opt_disc_ = Adam("discriminator", m.gan.discriminator_parameters(), lr);
  opt_gen_ = Adam("generator", gen_and_transformers(m.gan), lr);
  opt_teacher_v_ = Adam("teacher_v", m.teacher_v_parameters(), lr);
  opt_teacher_q_ = Adam("teacher_q", m.teacher_q_parameters(), lr);
}

void Trainer::check_finite(double v, const char* component) const {
  if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite ") + component + " loss");
}

double Trainer::wce_term(Tape& t, Var logits, const Matrix& targets, Var* out) const {
  (void)t;
  *out = ag::scale(ag::weighted_bce_with_logits(logits, targets, class_weights_),
                   1.0 / static_cast<double>(targets.rows()));
  return out->item();
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches() {
  std::vector<std::size_t> order(train_.instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), data_rng_);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += config_.batch_size)
    out.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + config_.batch_size));
  return out;
}

std::size_t Trainer::train_teachers(std::size_t epochs) {
  if (teachers_frozen_) throw ValidationError("teachers are already trained and frozen");
  IogModel& m = *model_;
  std::vector<std::size_t> order(train_.instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t steps = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), teacher_rng_);
    for (std::size_t i = 0; i < order.size(); i += config_.batch_size) {
      const std::span<const std::size_t> idx(order.data() + i, std::min(config_.batch_size, order.size() - i));
      const Batch b = make_batch(train_, idx);
      {
        opt_teacher_v_.zero_grad();
        Tape t;
        Var loss;
        const double v = wce_term(t, m.teacher_v.logits(t, m.teacher_v_encoder.encode(t, b.objects)), b.targets,
                                  &loss);
        check_finite(v, "V-teacher WCE");
        t.backward(loss);
        clip_grad_norm(opt_teacher_v_.params(), config_.clip_norm);
        opt_teacher_v_.step();
      }
      {
        opt_teacher_q_.zero_grad();
        Tape t;
        Var loss;
        const double v = wce_term(t, m.teacher_q.logits(t, m.teacher_q_encoder.encode(t, b.questions)), b.targets,
                                  &loss);
        check_finite(v, "Q-teacher WCE");
        t.backward(loss);
        clip_grad_norm(opt_teacher_q_.params(), config_.clip_norm);
        opt_teacher_q_.step();
      }
      ++steps;
    }
  }
  set_frozen(m.teacher_v_parameters(), true);
  set_frozen(m.teacher_q_parameters(), true);
  teachers_frozen_ = true;
  teacher_steps_ = steps;
  return steps;
}

LossBundle Trainer::train_step(const Batch& batch) {
  if (config_.enable_distill && !teachers_frozen_)
    throw ValidationError("train_step: distillation needs pretrained, frozen teachers");
  IogModel& m = *model_;
  const std::size_t n = batch.size();
  double l_d = 0.0, l_g = 0.0, l_qv = 0.0, l_vq = 0.0;

  Tape t;
  Var qv = m.question.encode(t, batch.questions);
  Var fv = m.visual.encode(t, batch.objects);
  Var bias_visual = fv;

  if (config_.enable_gan) {
    const Matrix v1 = fv.value();
    const Matrix v3 = qv.value();
    const Matrix noise = normal_noise(n, config_.noise_dim, noise_rng_);

    // (1) discriminator on real V1 against a detached V2
    {
      opt_disc_.zero_grad();
      Tape td;
      Var v1c = td.constant(v1);
      Var v3p = m.gan.transform_q_to_v(td, td.constant(v3));
      Var v2 = ag::detach(m.gan.generate(td, td.constant(noise), v3p, v1c));
      Var loss = ag::discriminator_loss(m.gan.discriminate(td, v1c), m.gan.discriminate(td, v2));
      l_d = loss.item();
      check_finite(l_d, "discriminator");
      td.backward(loss);
      norms_.discriminator = clip_grad_norm(opt_disc_.params(), config_.clip_norm);
      opt_disc_.step();
    }

    // (2) generator and transformers against the updated discriminator
    Matrix delta;
    {
      opt_gen_.zero_grad();
      Tape tg;
      Var v1c = tg.constant(v1);
      Var v3c = tg.constant(v3);
      Var v3p = m.gan.transform_q_to_v(tg, v3c);
      Var v1p = m.gan.transform_v_to_q(tg, v1c);
      Var v2 = m.gan.generate(tg, tg.constant(noise), v3p, v1c);
      Var lg = ag::generator_loss(m.gan.discriminate(tg, v2));
      Var lqv = ag::mean_row_sq_norm(ag::sub(v1c, v3p));
      Var lvq = ag::mean_row_sq_norm(ag::sub(v3c, v1p));
      Var obj = ag::add(lg, ag::add(ag::scale(lqv, config_.lambda1), ag::scale(lvq, config_.lambda2)));
      l_g = lg.item();
      l_qv = lqv.item();
      l_vq = lvq.item();
      check_finite(l_g, "generator");
      check_finite(l_qv, "q->v transformer");
      check_finite(l_vq, "v->q transformer");
      tg.backward(obj);
      norms_.generator = clip_grad_norm(opt_gen_.params(), config_.clip_norm);
      opt_gen_.step();
      delta = v2.value();
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= v1[i];
    }
    // the bias head sees the disturbed feature; the disturbance itself is a constant here
    bias_visual = ag::add(fv, t.constant(std::move(delta)));
  }

  // (3) main network
  opt_main_.zero_grad();
  Var dest_logits = m.destination.logits(t, qv, fv);
  Var bias_logits = m.bias.logits(t, qv, bias_visual);
  Var wce_d, wce_b;
  wce_term(t, dest_logits, batch.targets, &wce_d);
  wce_term(t, bias_logits, batch.targets, &wce_b);
  Var wce = ag::add(wce_d, wce_b);
  check_finite(wce.item(), "WCE");
  Var obj = ag::scale(wce, config_.alpha1);
  double distill = 0.0;
  if (config_.enable_distill) {
    const Matrix pt_v = softmax_probabilities(m.teacher_v_logits(batch));
    const Matrix pt_q = softmax_probabilities(m.teacher_q_logits(batch));
    const double inv_n = 1.0 / static_cast<double>(n);
    Var kl_v = ag::scale(ag::kl_to_softmax(pt_v, dest_logits), config_.distill_v * inv_n);
    Var kl_q = ag::scale(ag::kl_to_softmax(pt_q, dest_logits), config_.distill_q * inv_n);
    Var dl = ag::add(kl_v, kl_q);
    distill = dl.item();
    check_finite(distill, "distillation");
    obj = ag::add(obj, ag::scale(dl, config_.alpha2));
  }
  t.backward(obj);
  norms_.main = clip_grad_norm(opt_main_.params(), config_.clip_norm);
  opt_main_.step();

  return make_bundle(wce.item(), distill, l_d, l_g, l_qv, l_vq, config_.lambda1, config_.lambda2, config_.alpha1,
                     config_.alpha2);
}

LossBundle Trainer::wce_only_step(const Batch& batch) {
  IogModel& m = *model_;
  opt_main_.zero_grad();
  Tape t;
  Var qv = m.question.encode(t, batch.questions);
  Var fv = m.visual.encode(t, batch.objects);
  Var wce_d, wce_b;
  wce_term(t, m.destination.logits(t, qv, fv), batch.targets, &wce_d);
  wce_term(t, m.bias.logits(t, qv, fv), batch.targets, &wce_b);
  Var wce = ag::add(wce_d, wce_b);
  check_finite(wce.item(), "WCE");
  t.backward(ag::scale(wce, config_.alpha1));
  norms_.main = clip_grad_norm(opt_main_.params(), config_.clip_norm);
  opt_main_.step();
  LossBundle b;
  b.wce = wce.item();
  b.total = total_loss(0.0, b.wce, 0.0, config_.alpha1, config_.alpha2);
  return b;
}

Checkpoint Trainer::snapshot(std::size_t epoch, double best_score) const {
  Checkpoint c = capture(*model_, train_.vocab_fingerprint(), epoch, best_score);
  for (const Adam* o : {&opt_main_, &opt_disc_, &opt_gen_, &opt_teacher_v_, &opt_teacher_q_}) capture_optimizer(*o, c);
  return c;
}

void Trainer::restore_from(const Checkpoint& ckpt) {
  restore(*model_, ckpt);
  for (Adam* o : {&opt_main_, &opt_disc_, &opt_gen_, &opt_teacher_v_, &opt_teacher_q_}) restore_optimizer(*o, ckpt);
}

TrainResult train(const Dataset& train_data, const Dataset& val_data, const TrainingConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (train_data.instances.empty()) throw ValidationError("train: training split is empty");
  if (val_data.instances.empty()) throw ValidationError("train: validation split is empty");
  if (val_data.vocab_fingerprint() != train_data.vocab_fingerprint())
    throw ValidationError("train: validation vocabulary differs from training vocabulary");

  Trainer tr(config, train_data);
  if (config.enable_distill) tr.train_teachers(config.teacher_epochs);

  TrainResult res;
  std::size_t step = 0, bad_epochs = 0;
  bool have_best = false;
  const std::size_t patience = std::max<std::size_t>(config.early_stop_patience, 1);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (const auto& idx : tr.epoch_batches()) {
      const Batch b = make_batch(train_data, idx);
      res.metrics.push_back({++step, tr.train_step(b)});
    }
    const double acc = evaluate(tr.model(), val_data, config.beta).overall;
    res.val_history.push_back(acc);
    res.epochs_run = epoch;
    if (options.on_epoch) options.on_epoch(epoch, acc);
    if (!have_best || acc > res.best_score) {
      have_best = true;
      res.best_score = acc;
      res.best_epoch = epoch;
      res.best = tr.snapshot(epoch, acc);
      bad_epochs = 0;
    } else if (++bad_epochs >= patience) {
      break;
    }
  }
  if (!have_best) res.best = tr.snapshot(0, 0.0);
  return res;
}

void write_metrics_csv(const std::vector<StepRecord>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "step,wce,distill,l_d,l_g,l_qv,l_vq,total\n";
  char buf[512];
  for (const StepRecord& r : rows) {
    const LossBundle& b = r.loss;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, b.wce, b.distill, b.l_d,
                  b.l_g, b.l_qv, b.l_vq, b.total);
    f << buf;
  }
}

}  // namespace iog
