#pragma once

#include <array>
#include <string>
#include <vector>

#include "hiertask/executor.hpp"
#include "hiertask/io.hpp"

namespace hiertask {

// ============================================================================
// Episode metrics
// ============================================================================

struct RateSums {
  int episodes = 0;
  double success = 0;
  double goalCondition = 0;
  double weightedSuccess = 0;
  double weightedGoalCondition = 0;

  double rate(double sum) const { return episodes ? sum / episodes : 0.0; }
};

struct MetricsReport {
  int episodes = 0;
  double successRate = 0;
  double goalConditionRate = 0;
  double pathWeightedSuccess = 0;
  double pathWeightedGoalCondition = 0;
  std::array<RateSums, kNumTaskTypes> perType{};
  double meanAgentLength = 0;
  double meanExpertLength = 0;
  double meanBacktracks = 0;
  std::string fingerprint;

  /// Throws std::logic_error when a rate leaves [0, 1] or a weighted rate
  /// exceeds its unweighted counterpart.
  void check() const;
  json to_json() const;
};

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Traces and episodes are matched by episode id; every trace needs a demo.
MetricsReport compute_metrics(const std::vector<ExecTrace>& traces, const std::vector<Episode>& episodes);

/// Per-episode seed; independent of worker scheduling.
inline uint64_t episode_seed(uint64_t runSeed, int episode) {
  return derive_seed(runSeed, static_cast<uint64_t>(episode), 0x657069736f6465ull);
}

std::vector<ExecTrace> run_episodes(const ModelParams<float>* model, const std::vector<Episode>& episodes,
                                    const ExecConfig& cfg, uint64_t runSeed, int jobs = 1);

std::vector<ExecTrace> expert_traces(const std::vector<Episode>& episodes);

// ============================================================================
// Ablations and sweeps
// ============================================================================

struct LadderRow {
  OracleMode mode;
  MetricsReport report;
};

/// {none, SG, N, SG+N, SG+N+M, SG+N+GR}
std::vector<OracleMode> default_ladder();

std::vector<LadderRow> run_oracle_ladder(const ModelParams<float>* model, const std::vector<Episode>& episodes,
                                         const ExecConfig& cfg, const std::vector<OracleMode>& modes,
                                         uint64_t runSeed, int jobs = 1);

struct SweepRow {
  int budget = 0;
  MetricsReport report;
  double gap() const { return report.successRate - report.pathWeightedSuccess; }
};

/// One report per backtrack budget on the same seeds. With
/// `removeInteractionLimit` the failed-interaction cap is lifted.
std::vector<SweepRow> sweep_backtracking(const ModelParams<float>* model, const std::vector<Episode>& episodes,
                                         const ExecConfig& cfg, const std::vector<int>& budgets, uint64_t runSeed,
                                         int jobs = 1, bool removeInteractionLimit = true);

// ============================================================================
// Sub-goal evaluation
// ============================================================================

struct SubgoalTable {
  std::array<int64_t, kNumSubGoalTypes> total{};
  std::array<int64_t, kNumSubGoalTypes> success{};  // Goto entry counts the zero-retry result
  std::vector<int> retries;
  std::vector<int64_t> gotoSuccess;  // per entry of `retries`

  double rate(SubGoalType t) const;
  double goto_rate(size_t i) const;
};

/// Whether the state change from `before` to `after` realizes a manipulation sub-goal.
bool subgoal_effect(const WorldState& before, const WorldState& after, const SubGoal& sg);

/// Positions the agent at each sub-goal by replaying the expert prefix and
/// lets the model execute that sub-goal alone. Goto success is judged by
/// the next expert manipulation action from the reached pose, allowing up
/// to `retries[i]` backtracks.
SubgoalTable eval_subgoals(const ModelParams<float>* model, const std::vector<Episode>& episodes,
                           const ExecConfig& cfg, const std::vector<int>& retries, uint64_t runSeed, int jobs = 1);

// ============================================================================
// Step-wise learning curves
// ============================================================================

struct CurvePoint {
  SubProblem subProblem;
  int head = 0;  // HeadAccuracy::Head
  InputConfig inputConfig = InputConfig::Full;
  double dataFraction = 1.0;
  double accuracy = 0;
  int64_t count = 0;
};

inline constexpr std::array<double, 5> kCurveFractions = {0.05, 0.1, 0.2, 0.5, 1.0};

/// Training episodes kept at a data fraction: a prefix of one fixed shuffle,
/// so smaller fractions are subsets of larger ones.
std::vector<int> fraction_episodes(const std::vector<Episode>& episodes, double fraction, uint64_t seed);
std::vector<TrainInstance> fraction_subset(const std::vector<TrainInstance>& train,
                                           const std::vector<Episode>& episodes, double fraction, uint64_t seed);

/// Teacher-forced next-step accuracy per head.
std::vector<CurvePoint> eval_stepwise(const ModelParams<float>& model, const std::vector<TrainInstance>& data,
                                      InputConfig cfg, double fraction, int jobs = 1);

// ============================================================================
// Reports
// ============================================================================

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::string csv() const;
  std::string text() const;
};

std::string fmt(double v, int precision = 4);

Table metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows, const std::string& label);
Table task_type_table(const MetricsReport& r);
Table subgoal_table(const SubgoalTable& t);
Table curve_table(const std::vector<CurvePoint>& points);

/// Writes <dir>/<name>.csv, .json and .txt. Every file carries the fingerprint.
void write_report(const std::string& dir, const std::string& name, const Table& table, const json& body,
                  const std::string& fingerprint);

}  // namespace hiertask
