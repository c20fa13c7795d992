#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "iogvqa/config.hpp"
#include "iogvqa/errors.hpp"

using namespace iog;
namespace fs = std::filesystem;

namespace {

fs::path scratch_file(const std::string& name, const std::string& content) {
  const fs::path dir = fs::temp_directory_path() / "iogvqa_test_config";
  fs::create_directories(dir);
  std::ofstream(dir / name, std::ios::binary) << content;
  return dir / name;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("published defaults") {
  const TrainingConfig p = TrainingConfig::paper_scale();
  CHECK(p.learning_rate == 0.001);
  CHECK(p.epochs == 30);
  CHECK(p.batch_size == 512);
  CHECK(p.hidden == 1024);
  CHECK(p.d_a == 100);
  CHECK(p.d_w == 300);
  CHECK(p.noise_dim == 2048);
  CHECK(p.attention_d == 64);
  CHECK(p.beta == 0.7);
  CHECK(p.alpha1 == 0.5);
  CHECK(p.alpha2 == 0.3);
  CHECK(p.enable_gan);
  CHECK(p.enable_distill);
  CHECK_NOTHROW(p.validate());

  const TrainingConfig d = TrainingConfig::desk_scale();
  CHECK(d.batch_size == 64);
  CHECK(d.hidden == 128);
  CHECK(d.noise_dim == 256);
  CHECK(d.learning_rate == p.learning_rate);
  CHECK(d.beta == p.beta);
}

TEST_CASE("set parses and validates each value kind") {
  TrainingConfig c;
  c.set("train.learning_rate", " 0.01 ");
  CHECK(c.learning_rate == 0.01);
  c.set("train.epochs", "7");
  CHECK(c.epochs == 7);
  c.set("ablation.enable_gan", "false");
  CHECK_FALSE(c.enable_gan);
  c.set("ablation.enable_gan", "1");
  CHECK(c.enable_gan);
  c.set("infer.beta", "0.25");
  CHECK(c.beta == 0.25);

  CHECK_THROWS_AS(c.set("train.learning_rat", "0.1"), ValidationError);
  CHECK_THROWS_AS(c.set("train.epochs", "-3"), ValidationError);
  CHECK_THROWS_AS(c.set("train.epochs", "3.5"), ValidationError);
  CHECK_THROWS_AS(c.set("train.learning_rate", "fast"), ValidationError);
  CHECK_THROWS_AS(c.set("ablation.enable_gan", "maybe"), ValidationError);
  CHECK(error_of([&] { c.set("model.hidden", "x"); }).find("model.hidden") != std::string::npos);
}

TEST_CASE("validation names the offending key") {
  auto broken = [](const std::function<void(TrainingConfig&)>& edit) {
    TrainingConfig c;
    edit(c);
    return error_of([&] { c.validate(); });
  };
  CHECK(broken([](auto& c) { c.learning_rate = 0; }).find("train.learning_rate") != std::string::npos);
  CHECK(broken([](auto& c) { c.batch_size = 0; }).find("train.batch_size") != std::string::npos);
  CHECK(broken([](auto& c) { c.clip_norm = -1; }).find("train.clip_norm") != std::string::npos);
  CHECK(broken([](auto& c) { c.val_fraction = 1.0; }).find("train.val_fraction") != std::string::npos);
  CHECK(broken([](auto& c) { c.hidden = 0; }).find("model.hidden") != std::string::npos);
  CHECK(broken([](auto& c) { c.alpha2 = -0.1; }).find("loss.alpha2") != std::string::npos);
  CHECK(broken([](auto& c) { c.lambda1 = std::nan(""); }).find("gan.lambda1") != std::string::npos);
  CHECK(broken([](auto& c) { c.beta = 1.01; }).find("infer.beta") != std::string::npos);
  CHECK(broken([](auto& c) { c.noise_dim = 0; }).find("gan.noise_dim") != std::string::npos);
  TrainingConfig inf;
  inf.clip_norm = INFINITY;
  CHECK_NOTHROW(inf.validate());
}

TEST_CASE("text and JSON round trips") {
  TrainingConfig c = TrainingConfig::desk_scale();
  c.learning_rate = 0.0123456789012345;
  c.seed = 1234567890123ULL;
  c.enable_distill = false;
  c.word_vectors = "vectors.txt";
  c.clip_norm = INFINITY;

  const fs::path saved = scratch_file("saved.cfg", "");
  save_config(c, saved);
  CHECK(load_config(saved) == c);
  CHECK(TrainingConfig::from_json(c.to_json()) == c);
  CHECK(TrainingConfig::from_json(nlohmann::json::parse(c.to_json().dump())) == c);

  CHECK(c.fingerprint() == TrainingConfig(c).fingerprint());
  TrainingConfig d = c;
  d.beta = 0.6;
  CHECK(d.fingerprint() != c.fingerprint());
  CHECK(d.shape_fingerprint() == c.shape_fingerprint());
  d.hidden = 64;
  CHECK(d.shape_fingerprint() != c.shape_fingerprint());
}

TEST_CASE("config files") {
  const auto text = scratch_file("a.cfg",
                                 "# comment line\n"
                                 "train.epochs = 4   # trailing comment\n"
                                 "\n"
                                 "model.hidden=32\n"
                                 "ablation.enable_gan = false\n");
  const TrainingConfig c = load_config(text);
  CHECK(c.epochs == 4);
  CHECK(c.hidden == 32);
  CHECK_FALSE(c.enable_gan);
  CHECK(c.batch_size == TrainingConfig::desk_scale().batch_size);

  const auto json = scratch_file("b.json", R"({"train.epochs": 6, "infer.beta": 0.5, "ablation.enable_distill": false})");
  const TrainingConfig j = load_config(json);
  CHECK(j.epochs == 6);
  CHECK(j.beta == 0.5);
  CHECK_FALSE(j.enable_distill);

  const auto run = scratch_file("run.json", R"({"command": "train", "config": {"model.d_w": "16"}})");
  CHECK(load_config(run).d_w == 16);

  try {
    load_config(scratch_file("bad.cfg", "train.epochs = 3\nthis line has no equals\n"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.location() == 2);
  }
  try {
    load_config(scratch_file("bad.json", "{\"train.epochs\": }"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.location() > 0);
  }
  CHECK_THROWS_AS(load_config(scratch_file("unknown.cfg", "train.speed = 3\n")), ValidationError);
  CHECK_THROWS_AS(load_config(scratch_file("array.json", R"({"train.epochs": [1]})")), ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent/iogvqa.cfg"), ValidationError);
}
