#pragma once

#include <span>
#include <string>
#include <vector>

#include "iogvqa/config.hpp"
#include "iogvqa/dataset.hpp"
#include "iogvqa/gan.hpp"
#include "iogvqa/heads.hpp"
#include "iogvqa/question_encoder.hpp"
#include "iogvqa/visual_encoder.hpp"

namespace iog {

/// Sizes taken from the data rather than the config.
struct DataDims {
  std::size_t word_vocab = 0;
  std::size_t char_vocab = 0;
  std::size_t answers = 0;
  std::size_t object_dim = 0;

  static DataDims of(const Dataset& d);
  friend bool operator==(const DataDims&, const DataDims&) = default;
};

/// One minibatch in model-ready form.
struct Batch {
  QuestionBatch questions;
  ObjectBatch objects;
  Matrix targets;  // instances x answers, the answer scores
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

/// Every module of the system. Parameter addresses are stable for the
/// lifetime of the object, so the type is neither copyable nor movable.
class IogModel {
 public:
  IogModel(const TrainingConfig& config, const DataDims& dims);
  IogModel(const IogModel&) = delete;
  IogModel& operator=(const IogModel&) = delete;

  const TrainingConfig& config() const { return config_; }
  const DataDims& dims() const { return dims_; }

  QuestionEncoder question;
  VisualEncoder visual;
  JointHead destination;
  JointHead bias;
  FeatureGan gan;

  VisualEncoder teacher_v_encoder;
  TeacherHead teacher_v;
  QuestionEncoder teacher_q_encoder;
  TeacherHead teacher_q;

  /// Encoders, destination head and bias head.
  ParamList main_parameters();
  ParamList teacher_v_parameters();
  ParamList teacher_q_parameters();
  ParamList all_parameters();

  struct Logits {
    Matrix destination;
    Matrix bias;
  };
  /// Deterministic inference: the bias head sees the real visual feature.
  Logits infer(const Batch& batch);

  /// Teacher logits (frozen or not, evaluated without gradients).
  Matrix teacher_v_logits(const Batch& batch);
  Matrix teacher_q_logits(const Batch& batch);

  /// Copies every parameter value from `other`; shapes must agree.
  void copy_from(IogModel& other);

 private:
  TrainingConfig config_;
  DataDims dims_;
};

}  // namespace iog
