#include "iogvqa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "iogvqa/errors.hpp"
#include "iogvqa/heads.hpp"
#include "iogvqa/trainer.hpp"

namespace iog {
namespace {

constexpr std::size_t kEvalBatch = 256;

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_type(const EvalReport& r, QuestionType t) {
  const double v = r.type_accuracy(t);
  return std::isnan(v) ? "" : fmt(v);
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

}  // namespace

double vqa_accuracy(std::size_t predicted, std::span<const double> answer_scores) {
  if (predicted >= answer_scores.size())
    throw ValidationError("predicted index " + std::to_string(predicted) + " outside answer vocabulary of " +
                          std::to_string(answer_scores.size()));
  return std::clamp(answer_scores[predicted], 0.0, 1.0);
}

double vqa_accuracy_from_counts(std::size_t predicted, std::span<const int> counts) {
  if (predicted >= counts.size())
    throw ValidationError("predicted index " + std::to_string(predicted) + " outside answer vocabulary");
  return std::min(static_cast<double>(counts[predicted]) / 3.0, 1.0);
}

double EvalReport::type_accuracy(QuestionType t) const {
  auto it = per_type.find(t);
  return it == per_type.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json pt = nlohmann::json::object(), ct = nlohmann::json::object();
  for (const auto& [t, v] : per_type) pt[to_string(t)] = v;
  for (const auto& [t, c] : count_per_type) ct[to_string(t)] = c;
  return {{"overall", overall},
          {"per_type", pt},
          {"count_per_type", ct},
          {"config_fingerprint", config_fingerprint},
          {"seed", seed}};
}

std::string EvalReport::to_text() const {
  std::ostringstream o;
  char buf[128];
  std::size_t total = 0;
  for (const auto& [t, c] : count_per_type) total += c;
  std::snprintf(buf, sizeof buf, "%-8s %8s %6s\n", "type", "accuracy", "n");
  o << buf;
  std::snprintf(buf, sizeof buf, "%-8s %7.2f%% %6zu\n", "all", 100.0 * overall, total);
  o << buf;
  for (QuestionType t : kQuestionTypes) {
    auto it = per_type.find(t);
    if (it == per_type.end()) continue;
    std::snprintf(buf, sizeof buf, "%-8s %7.2f%% %6zu\n", to_string(t).c_str(), 100.0 * it->second,
                  count_per_type.at(t));
    o << buf;
  }
  o << "config " << config_fingerprint << "  seed " << seed << "\n";
  return o.str();
}

std::vector<std::size_t> predict_dataset(IogModel& model, const Dataset& data, double beta, Scorer scorer) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1]");
  std::vector<std::size_t> out(data.instances.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.instances.size(); start += kEvalBatch) {
    const std::size_t end = std::min(data.instances.size(), start + kEvalBatch);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const Batch b = make_batch(data, idx);
    const IogModel::Logits lg = model.infer(b);
    const Matrix p_d = sigmoid_probabilities(lg.destination);
    const Matrix p_b = sigmoid_probabilities(lg.bias);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      switch (scorer) {
        case Scorer::destination:
          out[start + r] = predict(p_d.row_span(r));
          break;
        case Scorer::bias:
          out[start + r] = predict(p_b.row_span(r));
          break;
        case Scorer::fused:
          out[start + r] = predict(fuse(p_d.row_span(r), p_b.row_span(r), beta));
          break;
      }
    }
  }
  return out;
}

EvalReport report_from_predictions(const Dataset& data, std::span<const std::size_t> predicted) {
  if (predicted.size() != data.instances.size()) throw ShapeError("one prediction per instance expected");
  if (data.instances.empty()) throw ValidationError("cannot evaluate an empty split");
  std::map<QuestionType, double> sums;
  EvalReport r;
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const QAInstance& q = data.instances[i];
    const double a = vqa_accuracy(predicted[i], q.answer_scores);
    sums[q.question_type] += a;
    r.count_per_type[q.question_type] += 1;
    total += a;
  }
  for (const auto& [t, s] : sums) r.per_type[t] = s / static_cast<double>(r.count_per_type[t]);
  r.overall = total / static_cast<double>(predicted.size());
  return r;
}

EvalReport evaluate(IogModel& model, const Dataset& data, double beta, Scorer scorer) {
  if (DataDims::of(data) != model.dims()) throw IncompatibleError("dataset dimensions differ from the model's");
  const auto pred = predict_dataset(model, data, beta, scorer);
  EvalReport r = report_from_predictions(data, pred);
  r.config_fingerprint = model.config().fingerprint();
  r.seed = model.config().seed;
  return r;
}

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data, double beta, Scorer scorer) {
  if (ckpt.vocab_fingerprint != data.vocab_fingerprint())
    throw IncompatibleError("dataset vocabulary fingerprint " + data.vocab_fingerprint() +
                            " does not match the checkpoint's " + ckpt.vocab_fingerprint);
  auto model = model_from_checkpoint(ckpt);
  return evaluate(*model, data, beta, scorer);
}

bool AblationGrid::complete() const {
  return std::all_of(rows.begin(), rows.end(), [](const AblationRow& r) { return r.ok; });
}

AblationGrid run_ablation(const Dataset& train_data, const Dataset& val, const Dataset& test,
                          const TrainingConfig& base, std::span<const std::uint64_t> seeds) {
  base.validate();
  if (seeds.empty()) throw ValidationError("ablation needs at least one seed");
  AblationGrid grid;
  for (std::uint64_t seed : seeds) {
    for (auto [gan, distill] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}}) {
      AblationRow row;
      row.gan = gan;
      row.distill = distill;
      row.seed = seed;
      TrainingConfig c = base;
      c.seed = seed;
      c.enable_gan = gan;
      c.enable_distill = distill;
      try {
        const TrainResult res = train(train_data, val, c);
        row.report = evaluate(res.best, test, c.beta);
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
      grid.rows.push_back(std::move(row));
    }
  }
  return grid;
}

std::map<std::pair<bool, bool>, double> median_overall(const AblationGrid& grid) {
  std::map<std::pair<bool, bool>, std::vector<double>> acc;
  for (const AblationRow& r : grid.rows)
    if (r.ok) acc[{r.gan, r.distill}].push_back(r.report.overall);
  std::map<std::pair<bool, bool>, double> out;
  for (auto& [k, v] : acc) out[k] = median(v);
  return out;
}

void write_ablation_csv(const AblationGrid& grid, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "gan,distill,overall,yesno,number,other,seed\n";
  for (const AblationRow& r : grid.rows) {
    if (!r.ok) {
      f << r.gan << ',' << r.distill << ",,,,," << r.seed << '\n';
      continue;
    }
    f << r.gan << ',' << r.distill << ',' << fmt(r.report.overall) << ',' << csv_type(r.report, QuestionType::yesno)
      << ',' << csv_type(r.report, QuestionType::number) << ',' << csv_type(r.report, QuestionType::other) << ','
      << r.seed << '\n';
  }
}

std::vector<SweepRow> run_sweep(const std::string& param, std::span<const std::string> values,
                                const Dataset& train_data, const Dataset& val, const Dataset& test,
                                const TrainingConfig& base, std::span<const std::uint64_t> seeds) {
  if (std::find(kSweepParams.begin(), kSweepParams.end(), param) == kSweepParams.end())
    throw ValidationError("cannot sweep '" + param + "'");
  if (values.empty()) throw ValidationError("sweep needs at least one value");
  if (seeds.empty()) throw ValidationError("sweep needs at least one seed");

  const std::map<std::string, std::string> keys{{"beta", "infer.beta"},       {"alpha1", "loss.alpha1"},
                                                {"alpha2", "loss.alpha2"},    {"d_w", "model.d_w"},
                                                {"noise_dim", "gan.noise_dim"}, {"hidden", "model.hidden"},
                                                {"attention_d", "model.attention_d"}};
  std::vector<TrainingConfig> configs;
  for (const std::string& v : values) {
    TrainingConfig c = base;
    c.set(keys.at(param), v);
    c.validate();
    configs.push_back(c);
  }

  std::vector<SweepRow> rows;
  for (std::uint64_t seed : seeds) {
    if (param == "beta") {
      // beta is inference-only: one model per seed
      TrainingConfig c = base;
      c.seed = seed;
      const TrainResult res = train(train_data, val, c);
      auto model = model_from_checkpoint(res.best);
      for (std::size_t i = 0; i < values.size(); ++i) {
        EvalReport r = evaluate(*model, test, configs[i].beta);
        r.config_fingerprint = [&] {
          TrainingConfig cc = configs[i];
          cc.seed = seed;
          return cc.fingerprint();
        }();
        rows.push_back({param, values[i], seed, r});
      }
      continue;
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      TrainingConfig c = configs[i];
      c.seed = seed;
      const TrainResult res = train(train_data, val, c);
      rows.push_back({param, values[i], seed, evaluate(res.best, test, c.beta)});
    }
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "param,value,overall,yesno,number,other,seed\n";
  for (const SweepRow& r : rows)
    f << r.param << ',' << r.value << ',' << fmt(r.report.overall) << ',' << csv_type(r.report, QuestionType::yesno)
      << ',' << csv_type(r.report, QuestionType::number) << ',' << csv_type(r.report, QuestionType::other) << ','
      << r.seed << '\n';
}

}  // namespace iog
