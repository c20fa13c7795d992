#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "iogvqa/autograd.hpp"
#include "iogvqa/dataset.hpp"
#include "iogvqa/layers.hpp"

// Question features: character CNN + word embeddings fused by masked
// self-attention, then a single-layer LSTM whose final state is Q^v.

namespace iog {

/// Real (non-padding) tokens of a batch of questions, concatenated.
struct QuestionBatch {
  std::vector<long> word_ids;
  std::vector<int> char_ids;         // tokens x max_chars, 0 = padding character
  std::vector<std::size_t> offsets;  // question q owns tokens [offsets[q], offsets[q+1])
  std::size_t max_chars = 0;

  std::size_t questions() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t tokens() const { return word_ids.size(); }
};

/// Strips padding tokens. Throws ValidationError for a question with no real tokens.
QuestionBatch make_question_batch(std::span<const TokenizedQuestion* const> questions);
QuestionBatch make_question_batch(const TokenizedQuestion& question);

struct QuestionEncoderDims {
  std::size_t word_vocab = 0;
  std::size_t char_vocab = 0;
  std::size_t d_a = 100;
  std::size_t d_w = 300;
  std::size_t hidden = 1024;
  std::size_t attention_d = 64;
  std::size_t char_kernel = 3;
};

class QuestionEncoder {
 public:
  QuestionEncoder() = default;
  QuestionEncoder(const std::string& name, const QuestionEncoderDims& dims, Rng& rng);

  const QuestionEncoderDims& dims() const { return dims_; }
  std::size_t fused_dim() const { return dims_.d_w + dims_.d_a; }

  /// Per-token character features (tokens x d_a): convolution over character
  /// positions, max-pooled over positions holding a real character.
  Var embed_chars(Tape& t, const QuestionBatch& batch);
  /// Word embedding lookup (tokens x d_w).
  Var embed_words(Tape& t, const QuestionBatch& batch);
  /// Masked self-attention over [word ; char] token features, with a residual
  /// connection. `weights` receives one attention matrix per question.
  Var fuse(Tape& t, Var word_emb, Var char_feat, std::span<const std::size_t> offsets,
           std::vector<Matrix>* weights = nullptr);
  /// Final LSTM state per question (questions x hidden).
  Var recur(Tape& t, Var fused, std::span<const std::size_t> offsets);
  /// Full pipeline: questions x hidden.
  Var encode(Tape& t, const QuestionBatch& batch);

  /// Loads `token v1 ... v_dw` lines for tokens present in `vocab`; returns the
  /// number of rows replaced. Other rows keep their random initialisation.
  std::size_t load_word_vectors(const std::filesystem::path& path, const std::vector<std::string>& vocab);

  ParamList parameters();

  Parameter char_embedding;
  Parameter word_embedding;
  Parameter conv_weight;  // (char_kernel * d_a) x d_a
  Parameter conv_bias;
  Parameter attn_query;  // fused x attention_d
  Parameter attn_key;
  Parameter attn_value;  // fused x fused
  Parameter lstm_input;  // fused x 4*hidden, gate order i f g o
  Parameter lstm_recurrent;
  Parameter lstm_bias;

 private:
  QuestionEncoderDims dims_;
};

}  // namespace iog
