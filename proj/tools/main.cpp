#include <CLI11.hpp>

#include <iostream>

#include "hiertask/cli.hpp"

using namespace hiertask;

namespace {

struct Flags {
  std::string config;
  std::optional<uint64_t> seed;
  int jobs = 1;
  bool gOnly = false;
  std::optional<std::string> oracle;
  std::optional<int> maxBt;
  std::optional<std::string> noise;
  std::optional<double> fraction;
  std::optional<std::string> input;
  std::optional<std::string> split;
  std::string resume;
  std::string trace;
};

void add_common(CLI::App* c, Flags& f) {
  c->add_option("--config", f.config, "key = value configuration file");
  c->add_option("--seed", f.seed, "global seed");
  c->add_option("--jobs", f.jobs, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
}

Context make_context(const Flags& f) {
  Context ctx;
  ctx.cfg = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
  if (f.config.empty())
    if (const char* o = std::getenv("HIERTASK_OUT_DIR"); o && *o) ctx.cfg.outDir = o;
  if (f.seed) ctx.cfg.seed = *f.seed;
  if (f.gOnly) ctx.cfg.exec.instructionsAvailable = false;
  if (f.oracle) ctx.cfg.set("exec.oracle", *f.oracle);
  if (f.maxBt) ctx.cfg.exec.maxBacktracks = *f.maxBt;
  if (f.noise) ctx.cfg.exec.noise = noise_profile(*f.noise);
  if (f.input) {
    const auto c = input_config_from_name(*f.input);
    if (!c) throw ConfigError("unknown input configuration '" + *f.input + "'");
    ctx.cfg.exec.inputConfig = *c;
  }
  if (f.split) ctx.cfg.set("eval.splits", *f.split);
  ctx.cfg.validate();
  ctx.jobs = f.jobs;
  ctx.log = &std::cout;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical task learning in a grid kitchen"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "generate demonstrations, dataset and manifest");
  auto* train = app.add_subcommand("train", "train the unified model");
  auto* eval = app.add_subcommand("eval", "closed-loop and sub-goal evaluation");
  auto* ablate = app.add_subcommand("ablate", "oracle ladder and grounding bound");
  auto* sweep = app.add_subcommand("sweep-bt", "success versus backtracking budget");
  auto* curves = app.add_subcommand("curves", "step-wise learning curves");
  auto* replay = app.add_subcommand("replay", "re-execute a trace file and report divergences");

  for (auto* c : {gen, train, eval, ablate, sweep, curves}) add_common(c, f);
  for (auto* c : {train, curves}) {
    c->add_option("--fraction", f.fraction, "training data fraction")->check(CLI::Range(0.0, 1.0));
    c->add_option("--input-config", f.input, "full, noVision, noLanguage or noHistory");
  }
  train->add_option("--resume", f.resume, "continue from an epoch checkpoint");
  for (auto* c : {eval, ablate, sweep}) {
    c->add_flag("--g-only", f.gOnly, "goal directive only, no sub-goal instructions");
    c->add_option("--noise", f.noise, "detector noise profile: none, standard, high");
    c->add_option("--input-config", f.input, "full, noVision, noLanguage or noHistory");
    c->add_option("--split", f.split, "comma list of evaluation splits");
  }
  eval->add_option("--oracle", f.oracle, "oracle set, e.g. SG,N,GR");
  ablate->add_option("--oracle", f.oracle, "base oracle set");
  eval->add_option("--max-bt", f.maxBt, "backtracking budget")->check(CLI::NonNegativeNumber);
  sweep->add_option("--max-bt", f.maxBt, "largest budget in the sweep")->check(CLI::NonNegativeNumber);
  replay->add_option("trace", f.trace, "trace file (.jsonl)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (replay->parsed()) {
      const auto v = cmd_replay(f.trace, &std::cout);
      int bad = 0;
      for (const auto& r : v) bad += r.divergence.has_value();
      std::cout << v.size() - static_cast<size_t>(bad) << " of " << v.size() << " traces reproduce\n";
      return bad ? 1 : 0;
    }
    Context ctx = make_context(f);
    if (gen->parsed()) {
      cmd_gen_data(ctx);
    } else if (train->parsed()) {
      const auto input = f.input ? ctx.cfg.exec.inputConfig : InputConfig::Full;
      const auto s = cmd_train(ctx, TrainArgs{f.fraction.value_or(1.0), input, false, f.resume});
      std::cout << "best epoch " << s.bestEpoch << " (seen navigation accuracy " << fmt(s.bestNavAccuracy) << ") -> "
                << s.checkpoint << "\n";
    } else if (eval->parsed()) {
      cmd_eval(ctx);
    } else if (ablate->parsed()) {
      cmd_ablate(ctx);
    } else if (sweep->parsed()) {
      cmd_sweep_bt(ctx, f.maxBt.value_or(-1));
    } else if (curves->parsed()) {
      std::vector<double> fs;
      if (f.fraction) fs.push_back(*f.fraction);
      std::vector<InputConfig> is;
      if (f.input) is.push_back(ctx.cfg.exec.inputConfig);
      cmd_curves(ctx, fs, is);
    }
  } catch (const FingerprintMismatch& e) {
    std::cerr << "fingerprint mismatch: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
