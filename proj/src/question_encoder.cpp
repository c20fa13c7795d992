#include "iogvqa/question_encoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "iogvqa/errors.hpp"

namespace iog {
namespace {

Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

}  // namespace

QuestionBatch make_question_batch(std::span<const TokenizedQuestion* const> questions) {
  QuestionBatch b;
  b.offsets.push_back(0);
  for (const TokenizedQuestion* q : questions) b.max_chars = std::max(b.max_chars, q->char_ids.empty() ? 0 : q->char_ids[0].size());
  for (const TokenizedQuestion* q : questions) {
    q->validate();
    for (std::size_t t = 0; t < q->length(); ++t) {
      if (q->pad_mask[t]) continue;
      b.word_ids.push_back(q->word_ids[t]);
      const auto& row = q->char_ids[t];
      if (row.size() > b.max_chars) throw ShapeError("question: ragged character rows");
      for (std::size_t c = 0; c < b.max_chars; ++c) b.char_ids.push_back(c < row.size() ? row[c] : 0);
    }
    b.offsets.push_back(b.word_ids.size());
  }
  return b;
}

QuestionBatch make_question_batch(const TokenizedQuestion& question) {
  const TokenizedQuestion* p = &question;
  return make_question_batch(std::span<const TokenizedQuestion* const>(&p, 1));
}

QuestionEncoder::QuestionEncoder(const std::string& name, const QuestionEncoderDims& dims, Rng& rng)
    : dims_(dims) {
  const std::size_t fused = dims.d_w + dims.d_a;
  const std::size_t h = dims.hidden;
  char_embedding = Parameter(name + ".char_embedding", normal_matrix(dims.char_vocab, dims.d_a, 0.3, rng));
  word_embedding = Parameter(name + ".word_embedding", normal_matrix(dims.word_vocab, dims.d_w, 0.3, rng));
  conv_weight = Parameter(name + ".conv_weight", glorot(dims.char_kernel * dims.d_a, dims.d_a, rng));
  conv_bias = Parameter(name + ".conv_bias", Matrix(1, dims.d_a));
  attn_query = Parameter(name + ".attn_query", glorot(fused, dims.attention_d, rng));
  attn_key = Parameter(name + ".attn_key", glorot(fused, dims.attention_d, rng));
  attn_value = Parameter(name + ".attn_value", glorot(fused, fused, rng));
  lstm_input = Parameter(name + ".lstm_input", glorot(fused, 4 * h, rng));
  lstm_recurrent = Parameter(name + ".lstm_recurrent", glorot(h, 4 * h, rng));
  Matrix bias(1, 4 * h);
  for (std::size_t c = h; c < 2 * h; ++c) bias[c] = 1.0;  // forget gate
  lstm_bias = Parameter(name + ".lstm_bias", std::move(bias));
}

Var QuestionEncoder::embed_chars(Tape& t, const QuestionBatch& batch) {
  const std::size_t a = batch.max_chars;
  const std::size_t tokens = batch.tokens();
  const std::size_t k = dims_.char_kernel;
  if (batch.char_ids.size() != tokens * a) throw ShapeError("embed_chars: char id matrix size");

  std::vector<long> lookup(tokens * a);
  for (std::size_t i = 0; i < lookup.size(); ++i) {
    const int id = batch.char_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= dims_.char_vocab)
      throw IndexError("char id " + std::to_string(id) + " outside vocabulary of " + std::to_string(dims_.char_vocab));
    lookup[i] = id == 0 ? -1 : id;
  }
  Var table = t.param(char_embedding);
  Var chars = ag::gather_rows(table, lookup);  // (tokens*a) x d_a, zero rows for padding

  std::vector<Var> shifted;
  shifted.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    std::vector<long> idx(tokens * a, -1);
    for (std::size_t tok = 0; tok < tokens; ++tok)
      for (std::size_t p = 0; p + s < a; ++p) idx[tok * a + p] = static_cast<long>(tok * a + p + s);
    shifted.push_back(s == 0 ? chars : ag::gather_rows(chars, idx));
  }
  Var cols = k == 1 ? shifted[0] : ag::concat_cols(shifted);
  Var conv = ag::add_row(ag::matmul(cols, t.param(conv_weight)), t.param(conv_bias));

  // pool only over windows that start on a real character
  std::vector<long> valid;
  std::vector<std::size_t> offsets{0};
  for (std::size_t tok = 0; tok < tokens; ++tok) {
    for (std::size_t p = 0; p < a; ++p)
      if (batch.char_ids[tok * a + p] != 0) valid.push_back(static_cast<long>(tok * a + p));
    offsets.push_back(valid.size());
  }
  Var pooled_rows = ag::gather_rows(conv, valid);
  return ag::segment_max(pooled_rows, offsets);
}

Var QuestionEncoder::embed_words(Tape& t, const QuestionBatch& batch) {
  for (long id : batch.word_ids)
    if (id < 0 || static_cast<std::size_t>(id) >= dims_.word_vocab)
      throw IndexError("word id " + std::to_string(id) + " outside vocabulary of " + std::to_string(dims_.word_vocab));
  return ag::gather_rows(t.param(word_embedding), batch.word_ids);
}

Var QuestionEncoder::fuse(Tape& t, Var word_emb, Var char_feat, std::span<const std::size_t> offsets,
                          std::vector<Matrix>* weights) {
  if (word_emb.rows() != char_feat.rows())
    throw ShapeError("fuse: " + std::to_string(word_emb.rows()) + " word rows vs " +
                     std::to_string(char_feat.rows()) + " char rows");
  if (word_emb.cols() != dims_.d_w || char_feat.cols() != dims_.d_a)
    throw ShapeError("fuse: embedding widths do not match the encoder");
  const Var parts[] = {word_emb, char_feat};
  Var x = ag::concat_cols(parts);
  Var q = ag::matmul(x, t.param(attn_query));
  Var k = ag::matmul(x, t.param(attn_key));
  Var v = ag::matmul(x, t.param(attn_value));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims_.attention_d));
  return ag::add(x, ag::grouped_attention(q, k, v, offsets, scale, weights));
}

Var QuestionEncoder::recur(Tape& t, Var fused, std::span<const std::size_t> offsets) {
  const std::size_t batch = offsets.size() - 1;
  const std::size_t h = dims_.hidden;
  std::size_t longest = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = offsets[b + 1] - offsets[b];
    if (len == 0) throw ValidationError("encode: question with zero real tokens");
    longest = std::max(longest, len);
  }
  Var w_in = t.param(lstm_input);
  Var w_rec = t.param(lstm_recurrent);
  Var bias = t.param(lstm_bias);
  Var hs = t.constant(Matrix(batch, h));
  Var cs = t.constant(Matrix(batch, h));
  for (std::size_t step = 0; step < longest; ++step) {
    std::vector<long> idx(batch, -1);
    std::vector<char> active(batch, 0);
    for (std::size_t b = 0; b < batch; ++b)
      if (offsets[b] + step < offsets[b + 1]) {
        idx[b] = static_cast<long>(offsets[b] + step);
        active[b] = 1;
      }
    Var x = ag::gather_rows(fused, idx);
    Var z = ag::add_row(ag::add(ag::matmul(x, w_in), ag::matmul(hs, w_rec)), bias);
    Var ig = ag::sigmoid(ag::slice_cols(z, 0, h));
    Var fg = ag::sigmoid(ag::slice_cols(z, h, h));
    Var gg = ag::tanh(ag::slice_cols(z, 2 * h, h));
    Var og = ag::sigmoid(ag::slice_cols(z, 3 * h, h));
    Var c_new = ag::add(ag::mul(fg, cs), ag::mul(ig, gg));
    Var h_new = ag::mul(og, ag::tanh(c_new));
    cs = ag::select_rows(c_new, cs, active);
    hs = ag::select_rows(h_new, hs, active);
  }
  return hs;
}

Var QuestionEncoder::encode(Tape& t, const QuestionBatch& batch) {
  if (batch.questions() == 0) throw ValidationError("encode: empty batch");
  Var words = embed_words(t, batch);
  Var chars = embed_chars(t, batch);
  Var fused = fuse(t, words, chars, batch.offsets);
  return recur(t, fused, batch.offsets);
}

std::size_t QuestionEncoder::load_word_vectors(const std::filesystem::path& path,
                                               const std::vector<std::string>& vocab) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open word-vector file " + path.string());
  std::string line;
  std::size_t line_no = 0, replaced = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> vec;
    double v;
    while (ss >> v) vec.push_back(v);
    if (!ss.eof()) throw ParseError(path.string() + ": non-numeric vector entry", line_no);
    if (vec.size() != dims_.d_w)
      throw ParseError(path.string() + ": expected " + std::to_string(dims_.d_w) + " values, got " +
                           std::to_string(vec.size()),
                       line_no);
    for (std::size_t i = 0; i < vocab.size(); ++i)
      if (vocab[i] == token) {
        for (std::size_t d = 0; d < vec.size(); ++d) word_embedding.value(i, d) = vec[d];
        ++replaced;
      }
  }
  return replaced;
}

ParamList QuestionEncoder::parameters() {
  return {&char_embedding, &word_embedding, &conv_weight,    &conv_bias,      &attn_query,
          &attn_key,       &attn_value,     &lstm_input,     &lstm_recurrent, &lstm_bias};
}

}  // namespace iog
