#include "iogvqa/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "iogvqa/errors.hpp"
#include "iogvqa/util.hpp"

namespace iog {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError(key + ": expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ValidationError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError(key + ": expected a boolean, got '" + v + "'");
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

struct Field {
  std::function<void(TrainingConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainingConfig&)> get;
};

#define IOG_DOUBLE(key, member)                                                                       \
  {                                                                                                   \
    key, Field {                                                                                      \
      [](TrainingConfig& c, const std::string& k, const std::string& v) { c.member = parse_double(k, v); }, \
          [](const TrainingConfig& c) { return fmt_double(c.member); }                                \
    }                                                                                                 \
  }
#define IOG_UINT(key, member)                                                                         \
  {                                                                                                   \
    key, Field {                                                                                      \
      [](TrainingConfig& c, const std::string& k, const std::string& v) {                             \
        c.member = static_cast<decltype(c.member)>(parse_uint(k, v));                                 \
      },                                                                                              \
          [](const TrainingConfig& c) { return std::to_string(c.member); }                            \
    }                                                                                                 \
  }
#define IOG_BOOL(key, member)                                                                         \
  {                                                                                                   \
    key, Field {                                                                                      \
      [](TrainingConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }, \
          [](const TrainingConfig& c) { return std::string(c.member ? "true" : "false"); }            \
    }                                                                                                 \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table{
      IOG_DOUBLE("train.learning_rate", learning_rate),
      IOG_UINT("train.epochs", epochs),
      IOG_UINT("train.batch_size", batch_size),
      IOG_DOUBLE("train.clip_norm", clip_norm),
      IOG_UINT("train.early_stop_patience", early_stop_patience),
      IOG_UINT("train.seed", seed),
      IOG_DOUBLE("train.val_fraction", val_fraction),
      IOG_UINT("train.teacher_epochs", teacher_epochs),
      IOG_UINT("model.hidden", hidden),
      IOG_UINT("model.d_a", d_a),
      IOG_UINT("model.d_w", d_w),
      IOG_UINT("model.attention_d", attention_d),
      IOG_UINT("model.char_kernel", char_kernel),
      IOG_UINT("gan.noise_dim", noise_dim),
      {"model.word_vectors",
       Field{[](TrainingConfig& c, const std::string&, const std::string& v) { c.word_vectors = v; },
             [](const TrainingConfig& c) { return c.word_vectors; }}},
      IOG_DOUBLE("loss.alpha1", alpha1),
      IOG_DOUBLE("loss.alpha2", alpha2),
      IOG_DOUBLE("gan.lambda1", lambda1),
      IOG_DOUBLE("gan.lambda2", lambda2),
      IOG_DOUBLE("loss.distill_v", distill_v),
      IOG_DOUBLE("loss.distill_q", distill_q),
      IOG_DOUBLE("infer.beta", beta),
      IOG_BOOL("ablation.enable_gan", enable_gan),
      IOG_BOOL("ablation.enable_distill", enable_distill),
  };
  return table;
}

#undef IOG_DOUBLE
#undef IOG_UINT
#undef IOG_BOOL

}  // namespace

TrainingConfig TrainingConfig::desk_scale() {
  TrainingConfig c;
  c.batch_size = 64;
  c.hidden = 128;
  c.noise_dim = 256;
  return c;
}

void TrainingConfig::validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(key) + ": must be positive");
  };
  auto non_negative = [](const char* key, double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(std::string(key) + ": must be >= 0");
  };
  positive("train.learning_rate", learning_rate);
  positive("train.batch_size", static_cast<double>(batch_size));
  if (!(clip_norm > 0.0)) throw ValidationError("train.clip_norm: must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ValidationError("train.val_fraction: must lie in [0, 1)");
  positive("model.hidden", static_cast<double>(hidden));
  positive("model.d_a", static_cast<double>(d_a));
  positive("model.d_w", static_cast<double>(d_w));
  positive("model.attention_d", static_cast<double>(attention_d));
  positive("model.char_kernel", static_cast<double>(char_kernel));
  positive("gan.noise_dim", static_cast<double>(noise_dim));
  non_negative("loss.alpha1", alpha1);
  non_negative("loss.alpha2", alpha2);
  non_negative("gan.lambda1", lambda1);
  non_negative("gan.lambda2", lambda2);
  non_negative("loss.distill_v", distill_v);
  non_negative("loss.distill_q", distill_q);
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("infer.beta: must lie in [0, 1]");
}

void TrainingConfig::set(const std::string& key, const std::string& value) {
  const auto& table = fields();
  auto it = table.find(key);
  if (it == table.end()) throw ValidationError("unknown config key: " + key);
  it->second.set(*this, key, trim(value));
}

std::map<std::string, std::string> TrainingConfig::to_map() const {
  std::map<std::string, std::string> m;
  for (const auto& [k, f] : fields()) m[k] = f.get(*this);
  return m;
}

nlohmann::json TrainingConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : to_map()) j[k] = v;
  return j;
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j, TrainingConfig base) {
  if (!j.is_object()) throw ValidationError("config JSON must be an object");
  for (const auto& [k, v] : j.items()) {
    if (v.is_string()) base.set(k, v.get<std::string>());
    else if (v.is_boolean()) base.set(k, v.get<bool>() ? "true" : "false");
    else if (v.is_number_unsigned()) base.set(k, std::to_string(v.get<std::uint64_t>()));
    else if (v.is_number_integer()) base.set(k, std::to_string(v.get<std::int64_t>()));
    else if (v.is_number()) base.set(k, fmt_double(v.get<double>()));
    else throw ValidationError(k + ": unsupported value type");
  }
  return base;
}

std::string TrainingConfig::fingerprint() const { return hex64(fnv1a(to_json().dump())); }

std::string TrainingConfig::shape_fingerprint() const {
  const nlohmann::json j{{"hidden", hidden},       {"d_a", d_a},         {"d_w", d_w},
                         {"attention_d", attention_d}, {"char_kernel", char_kernel}, {"noise_dim", noise_dim}};
  return hex64(fnv1a(j.dump()));
}

TrainingConfig load_config(const std::filesystem::path& path, TrainingConfig base) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string first = trim(text);
  if (!first.empty() && first[0] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what(), e.byte);
    }
    // run.json files keep the resolved config under "config"
    if (j.contains("config") && j["config"].is_object()) j = j["config"];
    return TrainingConfig::from_json(j, base);
  }
  std::istringstream lines(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(lines, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string() + ": expected 'key = value'", number);
    base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

void save_config(const TrainingConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  for (const auto& [k, v] : config.to_map()) out << k << " = " << v << '\n';
}

}  // namespace iog
