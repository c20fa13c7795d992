#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

namespace iog {

/// Every hyperparameter of the pipeline. Defaults follow the published
/// setup; desk_scale() shrinks the expensive dimensions.
struct TrainingConfig {
  // optimisation
  double learning_rate = 0.001;
  std::size_t epochs = 30;
  std::size_t batch_size = 512;
  double clip_norm = 5.0;
  std::size_t early_stop_patience = 5;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  std::size_t teacher_epochs = 10;

  // model dimensions
  std::size_t hidden = 1024;
  std::size_t d_a = 100;
  std::size_t d_w = 300;
  std::size_t attention_d = 64;
  std::size_t char_kernel = 3;
  std::size_t noise_dim = 2048;
  std::string word_vectors;  // optional pretrained word-vector file

  // loss weights
  double alpha1 = 0.5;
  double alpha2 = 0.3;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  double distill_v = 0.5;
  double distill_q = 0.5;

  // inference
  double beta = 0.7;

  // ablation flags
  bool enable_gan = true;
  bool enable_distill = true;

  static TrainingConfig paper_scale() { return {}; }
  static TrainingConfig desk_scale();

  /// Throws ValidationError naming the offending key.
  void validate() const;

  /// Set one flat dotted key from its textual value (e.g. "train.learning_rate", "0.01").
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j, TrainingConfig base = desk_scale());

  /// Hash of every field.
  std::string fingerprint() const;
  /// Hash of the fields that determine parameter shapes.
  std::string shape_fingerprint() const;

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

/// Reads a flat `key = value` document ('#' comments) or a JSON object with
/// flat dotted keys, applying each entry on top of `base`.
TrainingConfig load_config(const std::filesystem::path& path, TrainingConfig base = TrainingConfig::desk_scale());
void save_config(const TrainingConfig& config, const std::filesystem::path& path);

}  // namespace iog
