#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hiertask/evalbench.hpp"

namespace hiertask {

// ============================================================================
// Run configuration
// ============================================================================

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FingerprintMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fingerprints cover nested subsets of the configuration: data ⊂ model ⊂ run.
enum class Stage : uint8_t { Data, Model, Run };

struct RunConfig {
  uint64_t seed = 1;
  std::string outDir = "runs/default";  // not fingerprinted

  DatasetSpec data;  // data.seed and data.jobs are derived, not configured
  Hyperparams hp;
  ExecConfig exec;

  std::vector<std::string> evalSplits = {"seen", "unseen"};
  std::vector<int> sweepBudgets = {0, 2, 4, 6, 8};
  std::vector<int> gotoRetries = {0, 1, 2, 4, 8};
  std::vector<double> groundingMiss = {0.0, 0.2, 0.5};
  std::vector<double> curveFractions = {kCurveFractions.begin(), kCurveFractions.end()};
  std::vector<InputConfig> curveInputs = {InputConfig::Full, InputConfig::NoLanguage};

  struct Field {
    std::string key;
    Stage stage;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
  };
  static const std::vector<Field>& fields();

  /// Parses `key = value` lines; '#' starts a comment. Unknown keys are errors.
  static RunConfig parse(const std::string& text);
  /// Reads a config file and applies HIERTASK_OUT_DIR when set.
  static RunConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// Canonical text listing every field; parse(to_text()) round-trips.
  std::string to_text() const;

  std::string fingerprint(Stage stage = Stage::Run) const;
  /// Model fingerprint of a training variant.
  std::string model_fingerprint(double fraction, InputConfig input) const;

  DatasetSpec dataset_spec() const;
  Hyperparams train_hyperparams() const;
  uint64_t eval_seed() const { return derive_seed(seed, 0x6576616cull); }
  void validate() const;
};

NoiseConfig noise_profile(const std::string& name);

// ============================================================================
// Commands
// ============================================================================

struct Context {
  RunConfig cfg;
  int jobs = 1;
  std::ostream* log = nullptr;  // progress messages; null for silence
};

struct Paths {
  std::string root;
  std::string dataset() const { return root + "/data/dataset.jsonl"; }
  std::string manifest() const { return root + "/data/manifest.jsonl"; }
  std::string data_dir() const { return root + "/data"; }
  std::string reports() const { return root + "/reports"; }
  std::string traces() const { return root + "/traces"; }
  std::string model_dir(double fraction, InputConfig input) const;
  std::string checkpoint(double fraction, InputConfig input) const { return model_dir(fraction, input) + "/best.ckpt"; }
};

struct SplitStats {
  std::string split;
  int episodes = 0;
  int64_t subGoals = 0;
  int64_t navActions = 0;
  int64_t manipActions = 0;
};

struct GenDataResult {
  std::vector<SplitStats> stats;
  int resampled = 0;
};
GenDataResult cmd_gen_data(const Context& ctx);

struct TrainArgs {
  double fraction = 1.0;
  InputConfig input = InputConfig::Full;
  bool reuse = false;  // skip training when a matching checkpoint exists
  std::string resumeFrom;
};
struct TrainSummary {
  std::string checkpoint;
  int bestEpoch = -1;
  double bestNavAccuracy = 0;
  int instances = 0;
  bool reused = false;
};
TrainSummary cmd_train(const Context& ctx, const TrainArgs& args = {});

struct SplitEval {
  std::string split;
  MetricsReport metrics;
  SubgoalTable subgoals;
};
struct EvalArgs {
  bool subgoals = true;
  std::string tag;  // appended to report names
};
/// Uses ctx.cfg.exec as given (oracle, G-only, noise, budget).
std::vector<SplitEval> cmd_eval(const Context& ctx, const EvalArgs& args = {});

struct AblateResult {
  std::string split;
  std::vector<LadderRow> ladder;
  std::vector<std::pair<double, MetricsReport>> grounding;  // oracle SG+N+M under rising pMiss
};
std::vector<AblateResult> cmd_ablate(const Context& ctx);

struct SweepResult {
  std::string split;
  std::vector<SweepRow> rows;
};
std::vector<SweepResult> cmd_sweep_bt(const Context& ctx, int maxBudget = -1);

/// Trains any missing curve model, then evaluates teacher-forced accuracy on
/// the unseen split. Empty selections mean the configured grid.
std::vector<CurvePoint> cmd_curves(const Context& ctx, const std::vector<double>& fractions = {},
                                   const std::vector<InputConfig>& inputs = {});

struct ReplayVerdict {
  int episode = 0;
  std::optional<int> divergence;
};
std::vector<ReplayVerdict> cmd_replay(const std::string& traceFile, std::ostream* log = nullptr);

/// Loads episodes of one split from the manifest, checking its fingerprint.
std::vector<Episode> load_split(const Context& ctx, const std::string& split);

}  // namespace hiertask
