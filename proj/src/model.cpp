#include "iogvqa/model.hpp"

#include "iogvqa/errors.hpp"

namespace iog {
namespace {

QuestionEncoderDims question_dims(const TrainingConfig& c, const DataDims& d) {
  QuestionEncoderDims q;
  q.word_vocab = d.word_vocab;
  q.char_vocab = d.char_vocab;
  q.d_a = c.d_a;
  q.d_w = c.d_w;
  q.hidden = c.hidden;
  q.attention_d = c.attention_d;
  q.char_kernel = c.char_kernel;
  return q;
}

VisualEncoderDims visual_dims(const TrainingConfig& c, const DataDims& d) {
  return {d.object_dim, c.attention_d, c.hidden};
}

// Each module draws its initial weights from its own stream, so adding or
// resizing one module never changes another's initialisation.
Rng init_rng(const TrainingConfig& c, const char* module) { return make_rng(c.seed, std::string("init.") + module); }

}  // namespace

DataDims DataDims::of(const Dataset& d) {
  return {d.word_vocab.size(), d.char_vocab.size(), d.answer_vocab.size(), d.object_feature_dim};
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ValidationError("empty batch");
  std::vector<const TokenizedQuestion*> qs;
  std::vector<const ObjectSet*> os;
  Batch b;
  b.targets = Matrix(indices.size(), data.answer_vocab.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= data.instances.size()) throw IndexError("batch index " + std::to_string(i) + " out of range");
    const QAInstance& inst = data.instances[i];
    qs.push_back(&inst.question);
    os.push_back(&inst.objects);
    if (inst.answer_scores.size() != b.targets.cols()) throw ShapeError("answer score width mismatch");
    for (std::size_t a = 0; a < b.targets.cols(); ++a) b.targets(r, a) = inst.answer_scores[a];
  }
  b.questions = make_question_batch(qs);
  b.objects = make_object_batch(os);
  b.indices.assign(indices.begin(), indices.end());
  return b;
}

IogModel::IogModel(const TrainingConfig& config, const DataDims& dims) : config_(config), dims_(dims) {
  config.validate();
  if (dims.word_vocab == 0 || dims.char_vocab == 0 || dims.answers == 0 || dims.object_dim == 0)
    throw ValidationError("model: empty vocabulary or feature width");
  const auto qd = question_dims(config, dims);
  const auto vd = visual_dims(config, dims);
  const std::size_t h = config.hidden;

  {
    Rng r = init_rng(config, "question");
    question = QuestionEncoder("question", qd, r);
  }
  {
    Rng r = init_rng(config, "visual");
    visual = VisualEncoder("visual", vd, r);
  }
  {
    Rng r = init_rng(config, "destination");
    destination = JointHead("destination", h, h, h, dims.answers, r);
  }
  {
    Rng r = init_rng(config, "bias");
    bias = JointHead("bias", h, h, h, dims.answers, r);
  }
  {
    Rng r = init_rng(config, "gan");
    gan = FeatureGan("gan", GanDims{h, h, config.noise_dim, h}, r);
  }
  {
    Rng r = init_rng(config, "teacher_v");
    teacher_v_encoder = VisualEncoder("teacher_v.encoder", vd, r);
    teacher_v = TeacherHead("teacher_v.head", h, h, dims.answers, r);
  }
  {
    Rng r = init_rng(config, "teacher_q");
    teacher_q_encoder = QuestionEncoder("teacher_q.encoder", qd, r);
    teacher_q = TeacherHead("teacher_q.head", h, h, dims.answers, r);
  }
}

ParamList IogModel::main_parameters() {
  ParamList p = question.parameters();
  for (Parameter* x : visual.parameters()) p.push_back(x);
  for (Parameter* x : destination.parameters()) p.push_back(x);
  for (Parameter* x : bias.parameters()) p.push_back(x);
  return p;
}

ParamList IogModel::teacher_v_parameters() {
  ParamList p = teacher_v_encoder.parameters();
  for (Parameter* x : teacher_v.parameters()) p.push_back(x);
  return p;
}

ParamList IogModel::teacher_q_parameters() {
  ParamList p = teacher_q_encoder.parameters();
  for (Parameter* x : teacher_q.parameters()) p.push_back(x);
  return p;
}

ParamList IogModel::all_parameters() {
  ParamList p = main_parameters();
  for (Parameter* x : gan.parameters()) p.push_back(x);
  for (Parameter* x : teacher_v_parameters()) p.push_back(x);
  for (Parameter* x : teacher_q_parameters()) p.push_back(x);
  return p;
}

IogModel::Logits IogModel::infer(const Batch& batch) {
  Tape t;
  Var qv = question.encode(t, batch.questions);
  Var fv = visual.encode(t, batch.objects);
  Var d = destination.logits(t, qv, fv);
  Var b = bias.logits(t, qv, fv);
  return {d.value(), b.value()};
}

Matrix IogModel::teacher_v_logits(const Batch& batch) {
  Tape t;
  return teacher_v.logits(t, teacher_v_encoder.encode(t, batch.objects)).value();
}

Matrix IogModel::teacher_q_logits(const Batch& batch) {
  Tape t;
  return teacher_q.logits(t, teacher_q_encoder.encode(t, batch.questions)).value();
}

void IogModel::copy_from(IogModel& other) {
  ParamList mine = all_parameters();
  ParamList theirs = other.all_parameters();
  if (mine.size() != theirs.size()) throw IncompatibleError("model copy: parameter count differs");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (!mine[i]->value.same_shape(theirs[i]->value) || mine[i]->name != theirs[i]->name)
      throw IncompatibleError("model copy: parameter " + mine[i]->name + " differs");
    mine[i]->value = theirs[i]->value;
  }
}

}  // namespace iog
