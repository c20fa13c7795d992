#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "iogvqa/matrix.hpp"

// Synthetic question-answering corpora with a controlled train/test answer-prior
// shift, plus the on-disk format (meta.json + features.bin).

namespace iog {

enum class QuestionType { yesno = 0, number = 1, other = 2 };
inline constexpr std::array<QuestionType, 3> kQuestionTypes{QuestionType::yesno, QuestionType::number,
                                                            QuestionType::other};
std::string to_string(QuestionType t);
QuestionType question_type_from_string(const std::string& s);

enum class Split { train, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Word ids plus a per-token matrix of character ids. Id 0 is padding in both
/// vocabularies; pad_mask[t] is set for padding tokens.
struct TokenizedQuestion {
  std::vector<int> word_ids;
  std::vector<std::vector<int>> char_ids;
  std::vector<char> pad_mask;

  std::size_t length() const noexcept { return word_ids.size(); }
  std::size_t real_length() const noexcept;
  /// Throws ValidationError when the structural invariants do not hold.
  void validate() const;
  friend bool operator==(const TokenizedQuestion&, const TokenizedQuestion&) = default;
};

/// n object feature rows plus one global feature vector of the same width.
struct ObjectSet {
  Matrix objects;
  std::vector<double> global;

  std::size_t count() const noexcept { return objects.rows(); }
  std::size_t dim() const noexcept { return objects.cols(); }
  void validate(std::size_t max_objects) const;
  friend bool operator==(const ObjectSet&, const ObjectSet&) = default;
};

struct QAInstance {
  TokenizedQuestion question;
  ObjectSet objects;
  std::vector<double> answer_scores;
  QuestionType question_type = QuestionType::other;
  std::string instance_id;

  /// Index of the highest score, lowest index on ties.
  std::size_t best_answer() const;
  friend bool operator==(const QAInstance&, const QAInstance&) = default;
};

struct SyntheticSpec {
  std::size_t num_train = 2000;
  std::size_t num_test = 1000;
  std::size_t answer_vocab_size = 12;
  std::size_t word_vocab_size = 24;
  std::size_t char_vocab_size = 32;
  std::size_t max_question_len = 8;
  std::size_t object_feature_dim = 16;
  std::size_t max_objects = 6;
  double prior_shift = 0.5;
  std::array<double, 3> type_mix{0.4, 0.3, 0.3};  // yesno, number, other
  std::uint64_t seed = 7;
  /// Std-dev of per-object Gaussian noise around the concept means.
  double feature_noise = 0.6;
  /// Mode mass floor for the train answer prior of every question type.
  double base_skew = 0.55;
  /// Ten simulated annotators per question instead of one-hot scores.
  bool soft_scores = false;

  /// Throws ValidationError naming the first violated field.
  void validate() const;
  std::string fingerprint() const;
  /// JSON object with one key per field.
  std::string to_json_text() const;
  /// Fields missing from `text` keep their defaults; unknown keys are a ValidationError.
  static SyntheticSpec from_json_text(const std::string& text);
  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

struct Dataset {
  Split split = Split::train;
  std::vector<QAInstance> instances;
  std::vector<std::string> answer_vocab;
  std::vector<std::string> word_vocab;
  std::vector<std::string> char_vocab;
  std::string spec_fingerprint;
  std::size_t object_feature_dim = 0;
  std::size_t max_objects = 0;

  /// Out-of-vocabulary ids, duplicate instance ids or inconsistent widths.
  void validate() const;
  /// Fingerprint of the vocabularies and feature width; models trained on one
  /// dataset can evaluate any other dataset with the same vocab fingerprint.
  std::string vocab_fingerprint() const;
  std::size_t count(QuestionType t) const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Deterministic in `spec`. Returns {train, test}.
std::pair<Dataset, Dataset> generate(const SyntheticSpec& spec);

inline constexpr int kDatasetFormatVersion = 1;

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// Empirical answer prior (argmax of answer_scores) over instances of `type`.
std::vector<double> answer_prior(const Dataset& dataset, QuestionType type);
double total_variation(const std::vector<double>& p, const std::vector<double>& q);

/// Deterministic hold-out: returns {kept, held_out} with round(fraction * n) held out.
std::pair<Dataset, Dataset> split_holdout(const Dataset& dataset, double fraction, std::uint64_t seed);
/// First `n` instances (or all) as a new dataset sharing vocabularies.
Dataset head(const Dataset& dataset, std::size_t n);

/// Per-type answer vocabulary ranges used by the generator.
struct AnswerLayout {
  std::vector<std::size_t> yesno;
  std::vector<std::size_t> number;
  std::vector<std::size_t> other;
  const std::vector<std::size_t>& of(QuestionType t) const;
};
AnswerLayout answer_layout(const SyntheticSpec& spec);

}  // namespace iog
