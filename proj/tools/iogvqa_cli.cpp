// iogvqa: synthesize data, train, evaluate, run ablations and sweeps, plot.
//
// Exit codes: 0 success, 1 invalid input (bad flag, config or data), 2 runtime failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "iogvqa/checkpoint.hpp"
#include "iogvqa/config.hpp"
#include "iogvqa/dataset.hpp"
#include "iogvqa/errors.hpp"
#include "iogvqa/evaluation.hpp"
#include "iogvqa/trainer.hpp"
#include "iogvqa/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace iog;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta, alpha1, alpha2, lambda1, lambda2;
  bool no_gan = false, no_distill = false, paper_scale = false, desk_scale = false;
  std::vector<std::string> sets;  // key=value

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "flat key = value config file (or a run.json)");
    app->add_option("--seed", seed, "training seed");
    app->add_option("--beta", beta, "destination weight in the fused prediction");
    app->add_option("--alpha1", alpha1, "WCE weight");
    app->add_option("--alpha2", alpha2, "distillation weight");
    app->add_option("--lambda1", lambda1, "q->v transformer loss weight");
    app->add_option("--lambda2", lambda2, "v->q transformer loss weight");
    app->add_flag("--no-gan", no_gan, "disable adversarial training");
    app->add_flag("--no-distill", no_distill, "disable teacher distillation");
    auto* p = app->add_flag("--paper-scale", paper_scale, "published dimensions (hidden 1024, batch 512)");
    auto* d = app->add_flag("--desk-scale", desk_scale, "reduced dimensions (default)");
    p->excludes(d);
    app->add_option("--set", sets, "override any config key, e.g. --set train.epochs=5");
  }

  TrainingConfig resolve() const {
    TrainingConfig c = paper_scale ? TrainingConfig::paper_scale() : TrainingConfig::desk_scale();
    if (!config_path.empty()) c = load_config(config_path, c);
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
      c.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) c.seed = *seed;
    if (beta) c.beta = *beta;
    if (alpha1) c.alpha1 = *alpha1;
    if (alpha2) c.alpha2 = *alpha2;
    if (lambda1) c.lambda1 = *lambda1;
    if (lambda2) c.lambda2 = *lambda2;
    if (no_gan) c.enable_gan = false;
    if (no_distill) c.enable_distill = false;
    c.validate();
    return c;
  }
};

struct Split3 {
  Dataset train, val, test;
};

Split3 load_splits(const fs::path& data, const TrainingConfig& c) {
  Dataset full = read_dataset(data / "train");
  Dataset test = read_dataset(data / "test");
  auto [train, val] = split_holdout(full, c.val_fraction, c.seed);
  return {std::move(train), std::move(val), std::move(test)};
}

std::string data_fingerprint(const fs::path& data) {
  std::uint64_t h = fnv1a("data");
  for (const char* split : {"train", "test"}) {
    std::ifstream f(data / split / "meta.json", std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    h = fnv1a(s.str(), h);
  }
  return hex64(h);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

class RunLog {
 public:
  RunLog(std::string command, int argc, char** argv) : command_(std::move(command)), start_(clock::now()) {
    for (int i = 0; i < argc; ++i) argv_.push_back(argv[i]);
  }
  void write(const fs::path& out_dir, const json& config, std::uint64_t seed, const std::string& inputs) const {
    const double wall = std::chrono::duration<double>(clock::now() - start_).count();
    const std::string fp = hex64(fnv1a(config.dump() + "|" + inputs + "|" + command_));
    write_json(out_dir / "run.json", json{{"command", command_},
                                          {"argv", argv_},
                                          {"config", config},
                                          {"seed", seed},
                                          {"fingerprint", fp},
                                          {"wall_time_seconds", wall}});
  }

 private:
  using clock = std::chrono::steady_clock;
  std::string command_;
  std::vector<std::string> argv_;
  clock::time_point start_;
};

std::vector<std::uint64_t> seed_list(std::size_t n) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 1; i <= n; ++i) s.push_back(i);
  return s;
}

std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, ','))
    if (!cell.empty()) out.push_back(cell);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Debiased visual question answering on synthetic data"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic train/test corpus");
  std::string spec_path, out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--spec", spec_path, "JSON generator spec (defaults otherwise)");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "generator seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  ConfigFlags train_flags;
  std::string data;
  train_flags.add_to(train_cmd);
  train_cmd->add_option("--data", data, "dataset directory from synth")->required();
  train_cmd->add_option("--out", out, "run directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt_path, split = "test";
  std::optional<double> eval_beta;
  eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval_cmd->add_option("--data", data, "dataset directory")->required();
  eval_cmd->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--beta", eval_beta, "fusion weight (default: the checkpoint's)");
  eval_cmd->add_option("--out", out, "directory for the JSON report (default: next to the checkpoint)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train all four loss combinations");
  ConfigFlags ablate_flags;
  std::size_t seeds = 5;
  ablate_flags.add_to(ablate);
  ablate->add_option("--data", data, "dataset directory")->required();
  ablate->add_option("--seeds", seeds, "training seeds 1..N")->check(CLI::PositiveNumber);
  ablate->add_option("--out", out, "output directory")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "sweep one hyperparameter");
  ConfigFlags sweep_flags;
  std::string param, values;
  sweep_flags.add_to(sweep);
  sweep->add_option("--data", data, "dataset directory")->required();
  sweep->add_option("--param", param, "beta, alpha1, alpha2, d_w, noise_dim, hidden or attention_d")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--seeds", seeds, "training seeds 1..N")->check(CLI::PositiveNumber);
  sweep->add_option("--out", out, "output directory")->required();

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "render an ablation or sweep CSV as SVG");
  std::string csv;
  plot_cmd->add_option("--csv", csv, "input CSV")->required();
  plot_cmd->add_option("--out", out, "output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) {
      RunLog log("synth", argc, argv);
      SyntheticSpec spec;
      if (!spec_path.empty()) {
        std::ifstream f(spec_path);
        if (!f) throw ValidationError("cannot open spec " + spec_path);
        std::stringstream s;
        s << f.rdbuf();
        spec = SyntheticSpec::from_json_text(s.str());
      }
      if (synth_seed) spec.seed = *synth_seed;
      spec.validate();
      auto [tr, te] = generate(spec);
      write_dataset(tr, fs::path(out) / "train");
      write_dataset(te, fs::path(out) / "test");
      std::ofstream(fs::path(out) / "spec.json") << spec.to_json_text() << "\n";
      log.write(out, json::parse(spec.to_json_text()), spec.seed, spec.fingerprint());
      std::printf("wrote %zu train / %zu test instances to %s\n", tr.instances.size(), te.instances.size(),
                  out.c_str());
    } else if (train_cmd->parsed()) {
      RunLog log("train", argc, argv);
      const TrainingConfig c = train_flags.resolve();
      const Split3 d = load_splits(data, c);
      TrainOptions opt;
      opt.on_epoch = [](std::size_t e, double acc) { std::printf("epoch %zu  val %.4f\n", e, acc); };
      const TrainResult res = train(d.train, d.val, c, opt);
      fs::create_directories(out);
      save_checkpoint(res.best, fs::path(out) / "best.ckpt");
      write_metrics_csv(res.metrics, fs::path(out) / "metrics.csv");
      save_config(c, fs::path(out) / "config.txt");
      log.write(out, c.to_json(), c.seed, data_fingerprint(data));
      std::printf("best epoch %zu  val %.4f  -> %s\n", res.best_epoch, res.best_score,
                  (fs::path(out) / "best.ckpt").c_str());
    } else if (eval_cmd->parsed()) {
      RunLog log("eval", argc, argv);
      const Checkpoint ck = load_checkpoint(ckpt_path);
      const Dataset ds = read_dataset(fs::path(data) / split);
      const double beta = eval_beta ? *eval_beta : ck.config.beta;
      const EvalReport r = evaluate(ck, ds, beta);
      std::printf("%s", r.to_text().c_str());
      const fs::path dir = out.empty() ? fs::path(ckpt_path).parent_path() : fs::path(out);
      json j = r.to_json();
      j["beta"] = beta;
      j["split"] = split;
      write_json(dir / ("eval_" + split + ".json"), j);
      TrainingConfig c = ck.config;
      c.beta = beta;
      log.write(dir, c.to_json(), c.seed, data_fingerprint(data));
    } else if (ablate->parsed()) {
      RunLog log("ablate", argc, argv);
      const TrainingConfig c = ablate_flags.resolve();
      const Split3 d = load_splits(data, c);
      const auto s = seed_list(seeds);
      const AblationGrid grid = run_ablation(d.train, d.val, d.test, c, s);
      write_ablation_csv(grid, fs::path(out) / "ablation.csv");
      plot(fs::path(out) / "ablation.csv", fs::path(out) / "ablation.svg");
      log.write(out, c.to_json(), c.seed, data_fingerprint(data));
      for (const auto& [k, v] : median_overall(grid))
        std::printf("gan=%d distill=%d  median overall %.4f\n", k.first, k.second, v);
      if (!grid.complete()) {
        for (const AblationRow& r : grid.rows)
          if (!r.ok) std::fprintf(stderr, "row gan=%d distill=%d seed=%llu failed: %s\n", r.gan, r.distill,
                                  static_cast<unsigned long long>(r.seed), r.error.c_str());
        return 2;
      }
    } else if (sweep->parsed()) {
      RunLog log("sweep", argc, argv);
      const TrainingConfig c = sweep_flags.resolve();
      const Split3 d = load_splits(data, c);
      const auto vals = split_values(values);
      const auto s = seed_list(seeds);
      const auto rows = run_sweep(param, vals, d.train, d.val, d.test, c, s);
      write_sweep_csv(rows, fs::path(out) / "sweep.csv");
      plot(fs::path(out) / "sweep.csv", fs::path(out) / "sweep.svg");
      log.write(out, c.to_json(), c.seed, data_fingerprint(data));
      for (const SweepRow& r : rows)
        std::printf("%s=%s seed %llu  overall %.4f\n", r.param.c_str(), r.value.c_str(),
                    static_cast<unsigned long long>(r.seed), r.report.overall);
    } else if (plot_cmd->parsed()) {
      RunLog log("plot", argc, argv);
      plot(csv, out);
      // the SVG usually lands next to another command's run.json
      const fs::path dir = fs::path(out).parent_path();
      log.write(dir / (fs::path(out).stem().string() + ".plot"), json::object(), 0, csv);
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failed: %s\n", e.what());
    return 2;
  }
  return 0;
}
