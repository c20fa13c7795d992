#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "iogvqa/checkpoint.hpp"
#include "iogvqa/losses.hpp"
#include "iogvqa/model.hpp"
#include "iogvqa/optim.hpp"

namespace iog {

struct StepRecord {
  std::size_t step = 0;
  LossBundle loss;
};

/// Owns the model, its optimizers and the random streams of one training run.
///
/// Streams (all keyed to config.seed): "train.data" for minibatch order,
/// "train.noise" for generator noise, "train.teacher" for teacher batches.
class Trainer {
 public:
  Trainer(const TrainingConfig& config, const Dataset& train);

  IogModel& model() { return *model_; }
  const TrainingConfig& config() const { return config_; }
  const std::vector<double>& class_weights() const { return class_weights_; }
  const Dataset& data() const { return train_; }

  /// WCE pretraining of both single-modality teachers for `epochs` passes,
  /// then freezes them. Returns the number of teacher steps taken.
  std::size_t train_teachers(std::size_t epochs);
  bool teachers_frozen() const { return teachers_frozen_; }

  /// One full update: discriminator, then generator + transformers, then the
  /// main network. Teachers must be frozen when distillation is enabled.
  LossBundle train_step(const Batch& batch);

  /// Plain weighted-cross-entropy step on the main network. With both
  /// ablation flags off, train_step must be bit-identical to this.
  LossBundle wce_only_step(const Batch& batch);

  /// Minibatches of one epoch in shuffled order (consumes the data stream).
  std::vector<std::vector<std::size_t>> epoch_batches();

  /// Gradient norms before clipping, from the most recent train_step.
  struct Norms {
    double discriminator = 0.0;
    double generator = 0.0;
    double main = 0.0;
  };
  const Norms& last_norms() const { return norms_; }

  Checkpoint snapshot(std::size_t epoch, double best_score) const;
  void restore_from(const Checkpoint& ckpt);

  Adam& main_optimizer() { return opt_main_; }

 private:
  double wce_term(Tape& t, Var logits, const Matrix& targets, Var* out) const;
  void check_finite(double v, const char* component) const;

  TrainingConfig config_;
  const Dataset& train_;
  std::unique_ptr<IogModel> model_;
  std::vector<double> class_weights_;
  Adam opt_main_, opt_disc_, opt_gen_, opt_teacher_v_, opt_teacher_q_;
  Rng data_rng_, noise_rng_, teacher_rng_;
  bool teachers_frozen_ = false;
  std::size_t teacher_steps_ = 0;
  Norms norms_;
};

struct TrainResult {
  Checkpoint best;
  std::size_t best_epoch = 0;
  double best_score = 0.0;
  std::size_t epochs_run = 0;
  std::vector<double> val_history;
  std::vector<StepRecord> metrics;
};

struct TrainOptions {
  /// Called after every epoch with (epoch, validation accuracy).
  std::function<void(std::size_t, double)> on_epoch;
};

/// Teacher pretraining (when distillation is on), then epochs of train_step
/// with early stopping on validation accuracy of the fused prediction.
/// Returns the best checkpoint.
TrainResult train(const Dataset& train_data, const Dataset& val_data, const TrainingConfig& config,
                  const TrainOptions& options = {});

void write_metrics_csv(const std::vector<StepRecord>& rows, const std::filesystem::path& path);

}  // namespace iog
