#pragma once

#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hiertask/unimodel.hpp"

namespace hiertask {

// ============================================================================
// Configuration
// ============================================================================

/// Which decisions are taken from the expert instead of the model.
struct OracleMode {
  bool subGoals = false;      // SG
  bool navigation = false;    // N
  bool manipulation = false;  // M: action type and argument
  bool grounding = false;     // GR: target instance

  bool empty() const { return !subGoals && !navigation && !manipulation && !grounding; }
  bool covers(const OracleMode& o) const;
  /// "none", or a comma list in SG,N,M,GR order.
  std::string name() const;
  /// Accepts "", "none" and comma lists such as "SG,N,GR" (any order, case-insensitive).
  static OracleMode parse(std::string_view s);
  bool operator==(const OracleMode&) const = default;
};

struct ExecConfig {
  int maxBacktracks = 8;
  int maxFailedInteractions = 10;
  bool interactionLimit = true;  // off when sweeping backtrack budgets
  int maxSteps = 200;
  int navStepCap = 50;     // per navigation sub-goal
  int manipStepCap = 16;   // predicted actions per manipulation attempt
  int maxSubGoals = 32;
  double retryTemperature = 1.0;
  int retryPrefixLen = 8;
  double blacklistPenalty = 2.0;  // subtracted from the StopNav logit at blacklisted poses during a retry
  OracleMode oracle;
  bool instructionsAvailable = true;
  InputConfig inputConfig = InputConfig::Full;
  NoiseConfig noise = NoiseConfig::standard();

  void validate() const;
  bool operator==(const ExecConfig&) const = default;
};

// ============================================================================
// Trace
// ============================================================================

enum class EventKind : uint8_t { SubGoal, Nav, Manip, Reject, Backtrack, BlacklistHit };
std::string_view event_kind_name(EventKind k);

struct ExecEvent {
  EventKind kind = EventKind::SubGoal;
  int sgIndex = 0;
  SubGoal sg;                     // SubGoal, Backtrack
  NavType nav = NavType::StopNav;  // Nav
  ManipAction manip;               // Manip, Reject
  int target = -1;                 // Manip
  ActionResult result;             // Nav, Manip
  bool operator==(const ExecEvent&) const = default;
};

enum class TerminalReason : uint8_t { PredictedEnd, BacktrackBudget, StepLimit, FailureLimit };
std::string_view terminal_name(TerminalReason r);
std::optional<TerminalReason> terminal_from_name(std::string_view s);

struct ExecTrace {
  int episode = 0;
  SceneSeed seed;
  TaskSpec task;
  std::vector<ExecEvent> events;
  int agentLength = 0;  // simulator calls plus rejected manipulation attempts
  int backtracks = 0;
  int failedInteractions = 0;
  TerminalReason terminal = TerminalReason::PredictedEnd;
  GoalConditionReport goal;
};

/// One JSON record per line: a header, the events, and a closing record.
void write_trace(std::ostream& os, const ExecTrace& t);
/// Reads every trace in a line-delimited stream.
std::vector<ExecTrace> read_traces(std::istream& is);

/// Re-executes the primitive actions of a trace from a fresh reset. Returns
/// the index of the first action whose result differs from the recorded
/// one, or nullopt if the trace reproduces (including the final goal report).
std::optional<int> replay_trace(const ExecTrace& t);

/// Trace of the expert executing a demonstration.
ExecTrace expert_trace(const Demonstration& demo, int episode);

// ============================================================================
// Execution
// ============================================================================

/// Pose key used by the terminal-pose blacklist.
struct PoseKey {
  int x, y, rot;
  auto operator<=>(const PoseKey&) const = default;
};

enum class NavOutcome : uint8_t { Stopped, CapReached, Terminated };
enum class ManipOutcome : uint8_t { Completed, Failed, Terminated };

/// State of one running episode. The loops below are exposed so sub-goal
/// evaluation can drive single sub-goals.
class EpisodeRunner {
 public:
  EpisodeRunner(const ModelParams<float>* model, const Demonstration& demo, const ExecConfig& cfg, uint64_t seed,
                int episode = 0);

  /// Runs the full hierarchical loop from the reset state.
  ExecTrace run();

  /// Navigation sub-goal; retry mode samples the first retryPrefixLen actions
  /// and continues the action history of the previous attempt.
  NavOutcome navigation_loop(const SubGoal& sg, const std::string& instruction, bool retry);

  /// One attempt at a manipulation sub-goal. `history` holds the actions of
  /// earlier attempts that executed successfully and is extended in place.
  ManipOutcome manipulation_loop(const SubGoal& sg, const std::string& instruction,
                                 std::vector<ManipAction>& history);

  WorldState& state() { return state_; }
  ExecTrace& trace() { return trace_; }
  bool terminated() const { return terminated_; }
  std::set<PoseKey>& blacklist() { return blacklist_; }
  PoseKey pose_key() const;

 private:
  VisualObs look();
  bool count_step();
  void count_failure();
  void terminate(TerminalReason r);
  std::string instruction_for(int sgIndex) const;
  std::optional<int> ground_target(const ManipAction& a, int maskIndex, const VisualObs& obs);

  const ModelParams<float>* model_;
  const Demonstration& demo_;
  ExecConfig cfg_;
  WorldState state_;
  ExecTrace trace_;
  Rng obsRng_;
  Rng sampleRng_;
  std::set<PoseKey> blacklist_;
  std::vector<NavType> navHistory_;
  int sgIndex_ = 0;
  bool terminated_ = false;
};

/// One full episode with the given model and oracle settings.
/// `model` may be null only when the oracle covers every decision.
ExecTrace run_episode(const ModelParams<float>* model, const Demonstration& demo, const ExecConfig& cfg,
                      uint64_t seed, int episode = 0);

}  // namespace hiertask
