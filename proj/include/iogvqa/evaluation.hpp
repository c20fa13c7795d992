#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "iogvqa/checkpoint.hpp"
#include "iogvqa/dataset.hpp"
#include "iogvqa/model.hpp"

namespace iog {

/// Score of the predicted answer, i.e. min(matching annotators / 3, 1) as
/// stored by the generator. ValidationError for an out-of-range index.
double vqa_accuracy(std::size_t predicted, std::span<const double> answer_scores);
/// Same metric from raw annotator counts.
double vqa_accuracy_from_counts(std::size_t predicted, std::span<const int> annotator_counts);

struct EvalReport {
  double overall = 0.0;
  std::map<QuestionType, double> per_type;            // only types present in the data
  std::map<QuestionType, std::size_t> count_per_type;
  std::string config_fingerprint;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  std::string to_text() const;
  /// Accuracy for `t`, or NaN when the split has no such question.
  double type_accuracy(QuestionType t) const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Which probabilities drive the prediction.
enum class Scorer { fused, destination, bias };

/// Predicted answer index per instance, in dataset order.
std::vector<std::size_t> predict_dataset(IogModel& model, const Dataset& data, double beta,
                                         Scorer scorer = Scorer::fused);

/// Aggregates per-instance predictions by question type.
EvalReport report_from_predictions(const Dataset& data, std::span<const std::size_t> predicted);

EvalReport evaluate(IogModel& model, const Dataset& data, double beta, Scorer scorer = Scorer::fused);
/// Rejects datasets whose vocabulary fingerprint differs from the checkpoint's.
EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data, double beta, Scorer scorer = Scorer::fused);

struct AblationRow {
  bool gan = false;
  bool distill = false;
  std::uint64_t seed = 0;
  EvalReport report;
  bool ok = true;
  std::string error;
};

struct AblationGrid {
  std::vector<AblationRow> rows;  // order: {}, {gan}, {distill}, {gan, distill} per seed
  bool complete() const;
};

/// Trains and evaluates the four flag combinations for every seed in `seeds`.
AblationGrid run_ablation(const Dataset& train, const Dataset& val, const Dataset& test,
                          const TrainingConfig& base, std::span<const std::uint64_t> seeds);

/// Median overall test accuracy per flag combination, keyed (gan, distill).
std::map<std::pair<bool, bool>, double> median_overall(const AblationGrid& grid);

void write_ablation_csv(const AblationGrid& grid, const std::filesystem::path& path);

struct SweepRow {
  std::string param;
  std::string value;
  std::uint64_t seed = 0;
  EvalReport report;
};

/// Parameters that can be swept. beta only changes inference and reuses one
/// trained model per seed.
inline const std::vector<std::string> kSweepParams{"beta", "alpha1", "alpha2", "d_w", "noise_dim", "hidden",
                                                   "attention_d"};

std::vector<SweepRow> run_sweep(const std::string& param, std::span<const std::string> values,
                                const Dataset& train, const Dataset& val, const Dataset& test,
                                const TrainingConfig& base, std::span<const std::uint64_t> seeds);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

/// Renders an ablation or sweep CSV to SVG. ValidationError on a missing
/// column or an empty table.
void plot(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path);

}  // namespace iog
