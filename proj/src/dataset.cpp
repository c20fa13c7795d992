#include "iogvqa/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "iogvqa/errors.hpp"
#include "iogvqa/util.hpp"

namespace iog {
namespace {

using nlohmann::json;

const std::vector<std::string> kCategories{"cube", "sphere", "cylinder", "cone", "torus", "prism"};
const std::vector<std::string> kColors{"red",   "blue",  "green", "yellow", "purple", "orange",
                                       "brown", "white", "black", "pink",   "gray",   "cyan"};
const std::vector<std::string> kTemplateWords{"is", "there", "a", "how", "many", "what", "color", "the"};
const std::vector<std::string> kFillers{"please", "now", "tell", "me", "quickly", "here", "exactly", "again",
                                        "kindly", "then", "so", "just"};
constexpr std::size_t kLongestTemplate = 5;  // what color is the <cat>
constexpr std::size_t kMaxFillers = 2;

std::size_t word_index(const std::vector<std::string>& vocab, const std::string& w) {
  auto it = std::find(vocab.begin(), vocab.end(), w);
  if (it == vocab.end()) throw IndexError("word not in vocabulary: " + w);
  return static_cast<std::size_t>(it - vocab.begin());
}

std::vector<std::string> answer_vocab_for(const SyntheticSpec& spec) {
  const AnswerLayout layout = answer_layout(spec);
  std::vector<std::string> v{"yes", "no"};
  for (std::size_t k = 0; k < layout.number.size(); ++k) v.push_back(std::to_string(k + 1));
  for (std::size_t k = 0; k < layout.other.size(); ++k)
    v.push_back(k < kColors.size() ? kColors[k] : "color" + std::to_string(k));
  return v;
}

std::size_t filler_count(const SyntheticSpec& spec) {
  const std::size_t required = 2 + kTemplateWords.size() + kCategories.size();
  return std::min(spec.word_vocab_size - required, kFillers.size());
}

std::vector<std::string> word_vocab_for(const SyntheticSpec& spec) {
  std::vector<std::string> v{"<pad>", "<unk>"};
  v.insert(v.end(), kTemplateWords.begin(), kTemplateWords.end());
  v.insert(v.end(), kCategories.begin(), kCategories.end());
  const std::size_t fillers = filler_count(spec);
  v.insert(v.end(), kFillers.begin(), kFillers.begin() + static_cast<long>(fillers));
  for (std::size_t k = v.size(); k < spec.word_vocab_size; ++k) v.push_back("w" + std::to_string(k));
  return v;
}

std::vector<std::string> char_vocab_for(const std::vector<std::string>& words, std::size_t size) {
  std::set<char> chars;
  for (std::size_t i = 2; i < words.size(); ++i)
    for (char c : words[i]) chars.insert(c);
  std::vector<std::string> v{"<pad>", "<unk>"};
  for (char c : chars) v.emplace_back(1, c);
  if (v.size() > size)
    throw ValidationError("char_vocab_size: need at least " + std::to_string(v.size()) + ", got " +
                          std::to_string(size));
  for (std::size_t k = v.size(); k < size; ++k) v.push_back("#" + std::to_string(k));
  return v;
}

// Largest-remainder rounding of `total * weights` to integers summing to total.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  std::vector<std::size_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] * static_cast<double>(total);
    out[i] = static_cast<std::size_t>(std::floor(exact));
    used += out[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < total && k < rem.size(); ++k, ++used) ++out[rem[k].second];
  return out;
}

// Train prior with mode mass m, remaining mass decaying geometrically by half.
std::vector<double> ranked_prior(std::size_t k, double m) {
  std::vector<double> p(k, 0.0);
  p[0] = m;
  if (k == 1) {
    p[0] = 1.0;
    return p;
  }
  double norm = 0.0;
  for (std::size_t i = 1; i < k; ++i) norm += std::pow(0.5, static_cast<double>(i - 1));
  for (std::size_t i = 1; i < k; ++i) p[i] = (1.0 - m) * std::pow(0.5, static_cast<double>(i - 1)) / norm;
  return p;
}

std::vector<double> reversed(std::vector<double> p) {
  std::reverse(p.begin(), p.end());
  return p;
}

struct TypePriors {
  std::vector<double> train;  // indexed by rank
  std::vector<double> test;
};

// Margin added to the requested shift so that integer rounding of per-answer
// counts cannot pull the realised distance below prior_shift - 0.02.
constexpr double kShiftMargin = 0.02;

TypePriors priors_for(std::size_t k, double shift, double base_skew) {
  TypePriors out;
  const double floor_mass = std::max(base_skew, 1.0 / static_cast<double>(k));
  if (shift <= 0.0 || k < 2) {
    out.train = ranked_prior(k, std::min(floor_mass, 1.0));
    out.test = out.train;
    return out;
  }
  const double target = std::min(1.0, shift + kShiftMargin);
  auto tv_at = [&](double m) {
    auto p = ranked_prior(k, m);
    return total_variation(p, reversed(p));
  };
  double m = floor_mass;
  if (tv_at(m) < target) {
    double lo = m, hi = 1.0;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (tv_at(mid) >= target ? hi : lo) = mid;
    }
    m = hi;
  }
  out.train = ranked_prior(k, m);
  const auto rev = reversed(out.train);
  const double full = total_variation(out.train, rev);
  const double t = std::min(1.0, target / full);
  out.test.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.test[i] = (1.0 - t) * out.train[i] + t * rev[i];
  return out;
}

struct World {
  SyntheticSpec spec;
  AnswerLayout layout;
  std::vector<std::string> answers, words, chars;
  std::vector<std::vector<double>> category_means, color_means;
  std::array<std::vector<std::size_t>, 3> rank_to_answer;  // per type: rank -> answer vocab id
  std::array<TypePriors, 3> priors;
  std::size_t max_chars = 1;
};

World build_world(const SyntheticSpec& spec) {
  World w;
  w.spec = spec;
  w.layout = answer_layout(spec);
  w.answers = answer_vocab_for(spec);
  w.words = word_vocab_for(spec);
  w.chars = char_vocab_for(w.words, spec.char_vocab_size);
  for (const auto& word : w.words) w.max_chars = std::max(w.max_chars, word.size());

  Rng rng = make_rng(spec.seed, "synth.world");
  std::normal_distribution<double> unit(0.0, 1.0);
  auto draw = [&](std::size_t count) {
    std::vector<std::vector<double>> means(count, std::vector<double>(spec.object_feature_dim));
    for (auto& m : means)
      for (double& x : m) x = unit(rng);
    return means;
  };
  w.category_means = draw(kCategories.size());
  w.color_means = draw(w.layout.other.size());

  for (QuestionType t : kQuestionTypes) {
    const auto& ids = w.layout.of(t);
    auto& ranks = w.rank_to_answer[static_cast<int>(t)];
    ranks = ids;
    std::shuffle(ranks.begin(), ranks.end(), rng);
    w.priors[static_cast<int>(t)] = priors_for(ids.size(), spec.prior_shift, spec.base_skew);
  }
  return w;
}

TokenizedQuestion tokenize(const World& w, const std::vector<std::string>& tokens) {
  TokenizedQuestion q;
  for (const auto& tok : tokens) {
    q.word_ids.push_back(static_cast<int>(word_index(w.words, tok)));
    std::vector<int> row(w.max_chars, 0);
    for (std::size_t c = 0; c < tok.size(); ++c)
      row[c] = static_cast<int>(word_index(w.chars, std::string(1, tok[c])));
    q.char_ids.push_back(std::move(row));
    q.pad_mask.push_back(0);
  }
  return q;
}

// Stored features are rounded to float so that the binary file reproduces them exactly.
double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

QAInstance make_instance(const World& w, QuestionType type, std::size_t answer, Rng& rng) {
  const SyntheticSpec& spec = w.spec;
  const std::size_t n_cat = kCategories.size();
  const std::size_t n_col = w.layout.other.size();
  std::uniform_int_distribution<std::size_t> pick_cat(0, n_cat - 1);
  std::uniform_int_distribution<std::size_t> pick_col(0, n_col - 1);
  std::normal_distribution<double> noise(0.0, spec.feature_noise);

  const std::size_t target = pick_cat(rng);
  auto other_cat = [&] {
    std::size_t c = pick_cat(rng);
    while (c == target) c = pick_cat(rng);
    return c;
  };

  std::vector<std::pair<std::size_t, std::size_t>> objs;  // (category, color)
  std::vector<std::string> tokens;
  switch (type) {
    case QuestionType::yesno: {
      tokens = {"is", "there", "a", kCategories[target]};
      const bool yes = w.answers[answer] == "yes";
      std::uniform_int_distribution<std::size_t> pick_n(1, spec.max_objects);
      const std::size_t n = pick_n(rng);
      std::size_t with_target = 0;
      if (yes) {
        std::uniform_int_distribution<std::size_t> pick_k(1, std::min<std::size_t>(2, n));
        with_target = pick_k(rng);
      }
      for (std::size_t i = 0; i < with_target; ++i) objs.emplace_back(target, pick_col(rng));
      while (objs.size() < n) objs.emplace_back(other_cat(), pick_col(rng));
      break;
    }
    case QuestionType::number: {
      tokens = {"how", "many", kCategories[target]};
      const std::size_t k = static_cast<std::size_t>(std::stoul(w.answers[answer]));
      std::uniform_int_distribution<std::size_t> pick_extra(0, spec.max_objects - k);
      const std::size_t extra = pick_extra(rng);
      for (std::size_t i = 0; i < k; ++i) objs.emplace_back(target, pick_col(rng));
      for (std::size_t i = 0; i < extra; ++i) objs.emplace_back(other_cat(), pick_col(rng));
      break;
    }
    case QuestionType::other: {
      tokens = {"what", "color", "is", "the", kCategories[target]};
      const std::size_t color = answer - w.layout.other.front();
      std::uniform_int_distribution<std::size_t> pick_extra(0, spec.max_objects - 1);
      const std::size_t extra = pick_extra(rng);
      objs.emplace_back(target, color);
      for (std::size_t i = 0; i < extra; ++i) objs.emplace_back(other_cat(), pick_col(rng));
      break;
    }
  }
  std::shuffle(objs.begin(), objs.end(), rng);

  const std::size_t fillers = filler_count(spec);
  const std::size_t room = std::min(kMaxFillers, spec.max_question_len - tokens.size());
  if (fillers > 0 && room > 0) {
    std::uniform_int_distribution<std::size_t> pick_count(0, room);
    std::uniform_int_distribution<std::size_t> pick_filler(0, fillers - 1);
    const std::size_t count = pick_count(rng);
    for (std::size_t i = 0; i < count; ++i) tokens.insert(tokens.begin(), kFillers[pick_filler(rng)]);
  }

  QAInstance inst;
  inst.question_type = type;
  inst.question = tokenize(w, tokens);
  const std::size_t dim = spec.object_feature_dim;
  inst.objects.objects = Matrix(objs.size(), dim);
  inst.objects.global.assign(dim, 0.0);
  for (std::size_t i = 0; i < objs.size(); ++i)
    for (std::size_t d = 0; d < dim; ++d)
      inst.objects.objects(i, d) =
          as_float(w.category_means[objs[i].first][d] + w.color_means[objs[i].second][d] + noise(rng));
  for (std::size_t d = 0; d < dim; ++d) {
    double s = 0.0;
    for (std::size_t i = 0; i < objs.size(); ++i) s += inst.objects.objects(i, d);
    inst.objects.global[d] = as_float(s / static_cast<double>(objs.size()));
  }

  inst.answer_scores.assign(w.answers.size(), 0.0);
  if (!spec.soft_scores) {
    inst.answer_scores[answer] = 1.0;
  } else {
    // Ten annotators: at least five agree on the planted answer, the rest
    // scatter over other answers of the same type with at most two votes each.
    std::map<std::size_t, int> votes;
    std::binomial_distribution<int> dissent(10, 0.2);
    const auto& pool = w.layout.of(type);
    int others = std::min(dissent(rng), 5);
    if (pool.size() < 2) others = 0;
    votes[answer] = 10 - others;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    while (others > 0) {
      const std::size_t a = pool[pick(rng)];
      if (a == answer || votes[a] >= 2) {
        if (std::all_of(pool.begin(), pool.end(), [&](std::size_t x) { return x == answer || votes[x] >= 2; }))
          break;
        continue;
      }
      ++votes[a];
      --others;
    }
    for (auto [a, c] : votes) inst.answer_scores[a] = std::min(c / 3.0, 1.0);
  }
  return inst;
}

Dataset make_split(const World& w, Split split, std::size_t total, Rng& rng) {
  Dataset ds;
  ds.split = split;
  ds.answer_vocab = w.answers;
  ds.word_vocab = w.words;
  ds.char_vocab = w.chars;
  ds.spec_fingerprint = w.spec.fingerprint();
  ds.object_feature_dim = w.spec.object_feature_dim;
  ds.max_objects = w.spec.max_objects;

  const auto per_type =
      apportion(total, std::vector<double>(w.spec.type_mix.begin(), w.spec.type_mix.end()));
  std::vector<std::pair<QuestionType, std::size_t>> plan;
  for (QuestionType t : kQuestionTypes) {
    const int ti = static_cast<int>(t);
    const auto& prior = split == Split::train ? w.priors[ti].train : w.priors[ti].test;
    const auto counts = apportion(per_type[ti], prior);
    for (std::size_t r = 0; r < counts.size(); ++r)
      for (std::size_t c = 0; c < counts[r]; ++c) plan.emplace_back(t, w.rank_to_answer[ti][r]);
  }
  std::shuffle(plan.begin(), plan.end(), rng);

  const std::string prefix = to_string(split) + "-";
  ds.instances.reserve(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    QAInstance inst = make_instance(w, plan[i].first, plan[i].second, rng);
    char id[32];
    std::snprintf(id, sizeof id, "%06zu", i);
    inst.instance_id = prefix + id;
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

json spec_to_json(const SyntheticSpec& s) {
  return json{{"num_train", s.num_train},
              {"num_test", s.num_test},
              {"answer_vocab_size", s.answer_vocab_size},
              {"word_vocab_size", s.word_vocab_size},
              {"char_vocab_size", s.char_vocab_size},
              {"max_question_len", s.max_question_len},
              {"object_feature_dim", s.object_feature_dim},
              {"max_objects", s.max_objects},
              {"prior_shift", s.prior_shift},
              {"type_mix", s.type_mix},
              {"seed", s.seed},
              {"feature_noise", s.feature_noise},
              {"base_skew", s.base_skew},
              {"soft_scores", s.soft_scores}};
}

void write_le_floats(std::ostream& os, const std::vector<float>& values) {
  static_assert(sizeof(float) == 4);
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
  } else {
    for (float f : values) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
      os.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
}

float read_le_float(const unsigned char* p) {
  std::uint32_t u = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                    (std::uint32_t(p[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

std::string to_string(QuestionType t) {
  switch (t) {
    case QuestionType::yesno: return "yesno";
    case QuestionType::number: return "number";
    case QuestionType::other: return "other";
  }
  return "other";
}

QuestionType question_type_from_string(const std::string& s) {
  if (s == "yesno") return QuestionType::yesno;
  if (s == "number") return QuestionType::number;
  if (s == "other") return QuestionType::other;
  throw ValidationError("unknown question type: " + s);
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split: " + s);
}

std::size_t TokenizedQuestion::real_length() const noexcept {
  return static_cast<std::size_t>(std::count(pad_mask.begin(), pad_mask.end(), 0));
}

void TokenizedQuestion::validate() const {
  if (char_ids.size() != word_ids.size()) throw ValidationError("question: char row count != word count");
  if (pad_mask.size() != word_ids.size()) throw ValidationError("question: pad_mask length != word count");
  if (real_length() == 0) throw ValidationError("question: no real tokens");
}

void ObjectSet::validate(std::size_t max_objects) const {
  if (count() == 0 || count() > max_objects)
    throw ValidationError("objects: count " + std::to_string(count()) + " outside [1, " +
                          std::to_string(max_objects) + "]");
  if (global.size() != dim()) throw ShapeError("objects: global width differs from object width");
  if (!all_finite(objects) || !std::all_of(global.begin(), global.end(), [](double v) { return std::isfinite(v); }))
    throw ValidationError("objects: non-finite feature");
}

std::size_t QAInstance::best_answer() const {
  if (answer_scores.empty()) throw ValidationError("instance has no answer scores");
  return static_cast<std::size_t>(std::max_element(answer_scores.begin(), answer_scores.end()) -
                                  answer_scores.begin());
}

const std::vector<std::size_t>& AnswerLayout::of(QuestionType t) const {
  switch (t) {
    case QuestionType::yesno: return yesno;
    case QuestionType::number: return number;
    case QuestionType::other: return other;
  }
  return other;
}

AnswerLayout answer_layout(const SyntheticSpec& spec) {
  AnswerLayout l;
  l.yesno = {0, 1};
  const std::size_t rest = spec.answer_vocab_size - 2;
  const std::size_t numbers = std::min(spec.max_objects, std::max<std::size_t>(1, rest / 2));
  for (std::size_t k = 0; k < numbers; ++k) l.number.push_back(2 + k);
  for (std::size_t k = 2 + numbers; k < spec.answer_vocab_size; ++k) l.other.push_back(k);
  return l;
}

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError(field + ": " + why);
  };
  const double mix = type_mix[0] + type_mix[1] + type_mix[2];
  if (std::any_of(type_mix.begin(), type_mix.end(), [](double v) { return !(v >= 0.0); }))
    fail("type_mix", "fractions must be non-negative");
  if (std::abs(mix - 1.0) > 1e-9) fail("type_mix", "fractions must sum to 1");
  if (!(prior_shift >= 0.0 && prior_shift <= 1.0)) fail("prior_shift", "must lie in [0, 1]");
  if (answer_vocab_size < 4) fail("answer_vocab_size", "must be at least 4");
  if (max_objects < 1) fail("max_objects", "must be at least 1");
  if (object_feature_dim < 1) fail("object_feature_dim", "must be at least 1");
  if (max_question_len < kLongestTemplate) fail("max_question_len", "must be at least 5");
  if (word_vocab_size < 2 + kTemplateWords.size() + kCategories.size())
    fail("word_vocab_size", "must be at least " + std::to_string(2 + kTemplateWords.size() + kCategories.size()));
  if (!(feature_noise >= 0.0) || !std::isfinite(feature_noise)) fail("feature_noise", "must be finite and >= 0");
  if (!(base_skew >= 0.0 && base_skew < 1.0)) fail("base_skew", "must lie in [0, 1)");
  const AnswerLayout l = answer_layout(*this);
  if (l.other.empty()) fail("answer_vocab_size", "leaves no room for 'other' answers");
  if (prior_shift > 0.0) {
    for (QuestionType t : kQuestionTypes)
      if (type_mix[static_cast<int>(t)] > 0.0 && l.of(t).size() < 2)
        fail("answer_vocab_size", "a shifted prior needs at least two answers for type " + to_string(t));
  }
  // char vocabulary size is checked against the words actually used
  char_vocab_for(word_vocab_for(*this), char_vocab_size);
}

std::string SyntheticSpec::fingerprint() const { return hex64(fnv1a(spec_to_json(*this).dump())); }

std::string SyntheticSpec::to_json_text() const { return spec_to_json(*this).dump(2); }

SyntheticSpec SyntheticSpec::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("spec: ") + e.what(), e.byte);
  }
  if (!j.is_object()) throw ValidationError("spec: expected a JSON object");
  SyntheticSpec s;
  const json known = spec_to_json(s);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw ValidationError("spec: unknown field '" + it.key() + "'");
  try {
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("num_train", s.num_train);
    get("num_test", s.num_test);
    get("answer_vocab_size", s.answer_vocab_size);
    get("word_vocab_size", s.word_vocab_size);
    get("char_vocab_size", s.char_vocab_size);
    get("max_question_len", s.max_question_len);
    get("object_feature_dim", s.object_feature_dim);
    get("max_objects", s.max_objects);
    get("prior_shift", s.prior_shift);
    get("type_mix", s.type_mix);
    get("seed", s.seed);
    get("feature_noise", s.feature_noise);
    get("base_skew", s.base_skew);
    get("soft_scores", s.soft_scores);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("spec: ") + e.what());
  }
  s.validate();
  return s;
}

void Dataset::validate() const {
  std::set<std::string> ids;
  for (const auto& inst : instances) {
    if (!ids.insert(inst.instance_id).second) throw ValidationError("duplicate instance id " + inst.instance_id);
    inst.question.validate();
    for (std::size_t t = 0; t < inst.question.length(); ++t) {
      const int w = inst.question.word_ids[t];
      if (w < 0 || static_cast<std::size_t>(w) >= word_vocab.size())
        throw IndexError(inst.instance_id + ": word id " + std::to_string(w) + " out of range");
      for (int c : inst.question.char_ids[t])
        if (c < 0 || static_cast<std::size_t>(c) >= char_vocab.size())
          throw IndexError(inst.instance_id + ": char id " + std::to_string(c) + " out of range");
    }
    if (inst.answer_scores.size() != answer_vocab.size())
      throw ValidationError(inst.instance_id + ": answer score length differs from answer vocabulary");
    if (std::none_of(inst.answer_scores.begin(), inst.answer_scores.end(), [](double s) { return s > 0.0; }))
      throw ValidationError(inst.instance_id + ": no positive answer score");
    if (inst.objects.dim() != object_feature_dim)
      throw ShapeError(inst.instance_id + ": object width differs from dataset");
    inst.objects.validate(max_objects);
  }
}

std::string Dataset::vocab_fingerprint() const {
  json j{{"answers", answer_vocab}, {"words", word_vocab}, {"chars", char_vocab}, {"dim", object_feature_dim}};
  return hex64(fnv1a(j.dump()));
}

std::size_t Dataset::count(QuestionType t) const {
  return static_cast<std::size_t>(std::count_if(instances.begin(), instances.end(),
                                                [t](const QAInstance& i) { return i.question_type == t; }));
}

std::pair<Dataset, Dataset> generate(const SyntheticSpec& spec) {
  spec.validate();
  const World w = build_world(spec);
  Rng train_rng = make_rng(spec.seed, "synth.train");
  Rng test_rng = make_rng(spec.seed, "synth.test");
  return {make_split(w, Split::train, spec.num_train, train_rng),
          make_split(w, Split::test, spec.num_test, test_rng)};
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<float> features;
  json records = json::array();
  for (const auto& inst : ds.instances) {
    const std::size_t offset = features.size();
    for (double v : inst.objects.objects.values()) features.push_back(static_cast<float>(v));
    for (double v : inst.objects.global) features.push_back(static_cast<float>(v));
    records.push_back(json{{"id", inst.instance_id},
                           {"word_ids", inst.question.word_ids},
                           {"char_ids", inst.question.char_ids},
                           {"pad_mask", inst.question.pad_mask},
                           {"answer_scores", inst.answer_scores},
                           {"question_type", to_string(inst.question_type)},
                           {"num_objects", inst.objects.count()},
                           {"feature_offset", offset}});
  }
  std::ostringstream bin;
  write_le_floats(bin, features);
  const std::string bytes = bin.str();

  json meta{{"format_version", kDatasetFormatVersion},
            {"split", to_string(ds.split)},
            {"answer_vocab", ds.answer_vocab},
            {"word_vocab", ds.word_vocab},
            {"char_vocab", ds.char_vocab},
            {"spec_fingerprint", ds.spec_fingerprint},
            {"object_feature_dim", ds.object_feature_dim},
            {"max_objects", ds.max_objects},
            {"features_bytes", bytes.size()},
            {"features_fingerprint", hex64(fnv1a(bytes))},
            {"instances", records}};

  std::ofstream(dir / "features.bin", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  std::ofstream meta_out(dir / "meta.json");
  meta_out << meta.dump(1) << '\n';
  if (!meta_out) throw std::runtime_error("failed writing " + (dir / "meta.json").string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw std::runtime_error("cannot open " + (dir / "meta.json").string());
  std::stringstream buf;
  buf << meta_in.rdbuf();
  json meta;
  try {
    meta = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("meta.json: ") + e.what(), e.byte);
  }

  std::ifstream bin_in(dir / "features.bin", std::ios::binary);
  if (!bin_in) throw std::runtime_error("cannot open " + (dir / "features.bin").string());
  const std::string bytes((std::istreambuf_iterator<char>(bin_in)), std::istreambuf_iterator<char>());

  Dataset ds;
  try {
    const int version = meta.at("format_version").get<int>();
    if (version != kDatasetFormatVersion)
      throw IncompatibleError("dataset format_version " + std::to_string(version) + " (expected " +
                              std::to_string(kDatasetFormatVersion) + ")");
    if (meta.at("features_bytes").get<std::size_t>() != bytes.size())
      throw IntegrityError("features.bin is " + std::to_string(bytes.size()) + " bytes, metadata records " +
                           std::to_string(meta.at("features_bytes").get<std::size_t>()));
    if (meta.at("features_fingerprint").get<std::string>() != hex64(fnv1a(bytes)))
      throw IntegrityError("features.bin fingerprint does not match metadata");

    ds.split = split_from_string(meta.at("split").get<std::string>());
    ds.answer_vocab = meta.at("answer_vocab").get<std::vector<std::string>>();
    ds.word_vocab = meta.at("word_vocab").get<std::vector<std::string>>();
    ds.char_vocab = meta.at("char_vocab").get<std::vector<std::string>>();
    ds.spec_fingerprint = meta.at("spec_fingerprint").get<std::string>();
    ds.object_feature_dim = meta.at("object_feature_dim").get<std::size_t>();
    ds.max_objects = meta.at("max_objects").get<std::size_t>();
    const std::size_t dim = ds.object_feature_dim;
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t total_floats = bytes.size() / 4;

    std::size_t line = 0;
    for (const auto& r : meta.at("instances")) {
      QAInstance inst;
      inst.instance_id = r.at("id").get<std::string>();
      inst.question.word_ids = r.at("word_ids").get<std::vector<int>>();
      inst.question.char_ids = r.at("char_ids").get<std::vector<std::vector<int>>>();
      inst.question.pad_mask = r.at("pad_mask").get<std::vector<char>>();
      inst.answer_scores = r.at("answer_scores").get<std::vector<double>>();
      inst.question_type = question_type_from_string(r.at("question_type").get<std::string>());
      const std::size_t n = r.at("num_objects").get<std::size_t>();
      const std::size_t off = r.at("feature_offset").get<std::size_t>();
      if (off + (n + 1) * dim > total_floats)
        throw IntegrityError("instance " + std::to_string(line) + " features extend past features.bin");
      inst.objects.objects = Matrix(n, dim);
      for (std::size_t i = 0; i < n * dim; ++i) inst.objects.objects[i] = read_le_float(raw + 4 * (off + i));
      inst.objects.global.resize(dim);
      for (std::size_t d = 0; d < dim; ++d) inst.objects.global[d] = read_le_float(raw + 4 * (off + n * dim + d));
      ds.instances.push_back(std::move(inst));
      ++line;
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("meta.json: ") + e.what(), 0);
  }
  ds.validate();
  return ds;
}

std::vector<double> answer_prior(const Dataset& ds, QuestionType type) {
  std::vector<double> p(ds.answer_vocab.size(), 0.0);
  std::size_t n = 0;
  for (const auto& inst : ds.instances) {
    if (inst.question_type != type) continue;
    p[inst.best_answer()] += 1.0;
    ++n;
  }
  if (n == 0) throw ValidationError("answer_prior: no instances of type " + to_string(type));
  for (double& v : p) v /= static_cast<double>(n);
  return p;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ShapeError("total_variation: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ValidationError("holdout fraction must lie in [0, 1)");
  std::vector<std::size_t> order(ds.instances.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, "holdout");
  std::shuffle(order.begin(), order.end(), rng);
  const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(order.size())));
  std::vector<char> is_held(order.size(), 0);
  for (std::size_t i = 0; i < held; ++i) is_held[order[i]] = 1;
  Dataset kept = ds, out = ds;
  kept.instances.clear();
  out.instances.clear();
  for (std::size_t i = 0; i < ds.instances.size(); ++i)
    (is_held[i] ? out : kept).instances.push_back(ds.instances[i]);
  return {std::move(kept), std::move(out)};
}

Dataset head(const Dataset& ds, std::size_t n) {
  Dataset out = ds;
  if (out.instances.size() > n) out.instances.resize(n);
  return out;
}

}  // namespace iog
