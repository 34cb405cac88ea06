#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hiertask/detector.hpp"
#include "hiertask/gridkitchen.hpp"
#include "hiertask/taskschema.hpp"

namespace hiertask {

class Unreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PlanFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManipStep {
  ManipAction action;
  int target = -1;  // -1 for StopManip
  bool operator==(const ManipStep&) const = default;
};

struct Demonstration {
  SceneSeed sceneSeed;
  TaskSpec task;
  std::vector<SubGoal> subGoals;
  std::vector<std::vector<NavType>> navPlans;      // per sub-goal; empty unless Goto
  std::vector<std::vector<ManipStep>> manipPlans;  // per sub-goal; empty unless manipulation
  InstructionSet instructions;
  int expertLength = 0;
};

struct NavPlan {
  std::vector<NavType> actions;  // ends with StopNav
  int targetId = -1;
};

/// Instances of `label` an expert would consider for a task: not hidden,
/// and for PickTwo not already sitting in the destination receptacle.
std::vector<int> candidate_instances(const WorldState& s, const TaskSpec& task, Obj label);

/// Shortest (cell, rotation) path to a pose facing the nearest candidate;
/// ties broken by lowest object id. Throws Unreachable.
NavPlan plan_navigation_to(const WorldState& s, const TaskSpec& task, Obj label);
std::vector<NavType> plan_navigation(const WorldState& s, Obj label);

/// The object an expert would act on for `a` from the current pose.
std::optional<int> resolve_manip_target(const WorldState& s, const TaskSpec& task, const ManipAction& a);

/// Throws PlanFailure (wrapping Unreachable / PlacementInfeasible).
Demonstration generate_demo(SceneSeed seed, const TaskSpec& task);

/// Replays a demonstration from its seed. Returns the index of the first
/// primitive action whose result differs from success, or nullopt if the
/// whole demo executes and satisfies the goal.
std::optional<int> replay_demo(const Demonstration& demo);

/// Primitive action count excluding StopNav / StopManip.
int count_expert_length(const Demonstration& demo);

// ============================================================================
// Training instances
// ============================================================================

enum class SubProblem : uint8_t { SubGoalPlanning, Navigation, Manipulation };
inline constexpr int kNumSubProblems = 3;
std::string_view subproblem_name(SubProblem p);

enum class Split : uint8_t { Train, SeenEval, UnseenEval };
std::string_view split_name(Split s);
std::optional<Split> split_from_name(std::string_view s);

struct TrainInstance {
  SubProblem subProblem = SubProblem::SubGoalPlanning;
  Split split = Split::Train;
  int episode = 0;  // index into the manifest

  std::string goal;
  std::string instruction;
  std::vector<SubGoal> sgHistory;
  SubGoal current;
  std::vector<NavType> navHistory;
  std::vector<ManipAction> manipHistory;
  VisualObs obs;
  Rot rot = Rot::N;
  int horizon = 0;

  // labels; -1 where the head is inactive for the sub-problem
  int sgType = -1;
  int sgArg = -1;
  int actType = -1;
  int actArg = -1;
  int mask = -1;
};

/// Unrolls one demonstration into per-step instances, observing every step
/// with the given detector noise.
std::vector<TrainInstance> unroll_demo(const Demonstration& demo, int episode, Split split,
                                       const NoiseConfig& noise, Rng& rng);

struct Episode {
  int index = 0;
  Split split = Split::Train;
  Demonstration demo;
};

struct DatasetSpec {
  int nTrain = 1500;
  int nSeenEval = 150;
  int nUnseenEval = 150;
  int nTrainLayouts = 40;
  int nUnseenLayouts = 10;
  std::array<double, kNumTaskTypes> taskMix{1, 1, 1, 1, 1, 1, 1};
  double pSliced = 0.3;
  uint64_t seed = 1;
  NoiseConfig noise = NoiseConfig::standard();
  int jobs = 1;
};

struct Dataset {
  std::vector<Episode> episodes;
  std::vector<TrainInstance> instances;
  int resampled = 0;  // demos skipped because planning failed
};

inline constexpr uint32_t kUnseenLayoutBase = 10000;
inline constexpr uint32_t kSeenEvalPlacementBase = 1u << 30;

Dataset make_dataset(const DatasetSpec& spec);

}  // namespace hiertask
