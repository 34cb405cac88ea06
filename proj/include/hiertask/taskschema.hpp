#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hiertask/common.hpp"

namespace hiertask {

// ============================================================================
// Object labels
// ============================================================================

/// Object class symbols. The first kNumBaseClasses entries are physical
/// classes; the *Sliced entries are display labels of sliced instances.
/// `None` closes the argument space of the prediction heads.
enum class Obj : uint8_t {
  Mug,
  Cup,
  Apple,
  Potato,
  Tomato,
  Bread,
  Egg,
  Knife,
  Bowl,
  Plate,
  Book,
  Pencil,
  CounterTop,
  DiningTable,
  Fridge,
  Microwave,
  Sink,
  Faucet,
  CoffeeMachine,
  Cabinet,
  Shelf,
  DeskLamp,
  AppleSliced,
  PotatoSliced,
  TomatoSliced,
  BreadSliced,
  None,
};

inline constexpr int kNumBaseClasses = 22;
inline constexpr int kNumLabels = 26;   // base classes + sliced variants
inline constexpr int kNumArgs = 27;     // labels + None
inline constexpr int kNumMovable = 12;  // Mug .. Pencil

inline int index(Obj o) { return static_cast<int>(o); }
inline Obj obj_from_index(int i) { return static_cast<Obj>(i); }

struct Affordances {
  bool pickupable = false;
  bool receptacle = false;
  bool openable = false;
  bool toggleable = false;
  bool sliceable = false;
  int capacity = 0;
};

Affordances affordances(Obj cls);
bool is_movable(Obj cls);
bool is_sliceable(Obj cls);
/// AppleSliced -> Apple; base classes map to themselves.
Obj base_class(Obj label);
/// Apple -> AppleSliced; throws for classes that cannot be sliced.
Obj sliced_label(Obj cls);

std::string_view obj_name(Obj o);
std::optional<Obj> obj_from_name(std::string_view name);
/// Lower-case surface form used in generated language ("coffee machine").
std::string obj_text(Obj o);

// ============================================================================
// Predicates
// ============================================================================

enum class SubGoalType : uint8_t { Goto, Pickup, Put, Cool, Heat, Clean, Slice, Toggle, End };
inline constexpr int kNumSubGoalTypes = 9;

enum class NavType : uint8_t { RotateLeft, RotateRight, MoveAhead, LookUp, LookDown, StopNav };
inline constexpr int kNumNavTypes = 6;

enum class ManipType : uint8_t { Pickup, Put, Open, Close, ToggleOn, ToggleOff, Slice, StopManip };
inline constexpr int kNumManipTypes = 8;

/// Joint action-type head index space: navigation types first, then manipulation types.
inline constexpr int kNumActTypes = kNumNavTypes + kNumManipTypes;
inline int act_index(NavType t) { return static_cast<int>(t); }
inline int act_index(ManipType t) { return kNumNavTypes + static_cast<int>(t); }

struct SubGoal {
  SubGoalType type = SubGoalType::End;
  Obj arg = Obj::None;
  bool operator==(const SubGoal&) const = default;
};

struct ManipAction {
  ManipType type = ManipType::StopManip;
  Obj arg = Obj::None;
  bool operator==(const ManipAction&) const = default;
};

bool is_manipulation(SubGoalType t);

std::string_view subgoal_type_name(SubGoalType t);
std::string_view nav_name(NavType t);
std::string_view manip_name(ManipType t);
std::optional<SubGoalType> subgoal_type_from_name(std::string_view s);
std::optional<NavType> nav_from_name(std::string_view s);
std::optional<ManipType> manip_from_name(std::string_view s);

/// "Goto(Mug)", "Put(CoffeeMachine)", "End".
std::string to_string(const SubGoal& sg);
std::string to_string(const ManipAction& a);
SubGoal parse_subgoal(std::string_view s);
ManipAction parse_manip(std::string_view s);

// ============================================================================
// Tasks
// ============================================================================

enum class TaskType : uint8_t {
  PickAndPlace,
  PickTwoAndPlace,
  CleanAndPlace,
  HeatAndPlace,
  CoolAndPlace,
  StackAndPlace,
  ExamineInLight,
};
inline constexpr int kNumTaskTypes = 7;

std::string_view task_type_name(TaskType t);
std::optional<TaskType> task_type_from_name(std::string_view s);

/// `receptacle` is the destination (None for ExamineInLight); `aux` is the
/// container for StackAndPlace and the lamp for ExamineInLight. `sliced`
/// asks for the target to be sliced first (PickAndPlace / Heat / Cool only).
struct TaskSpec {
  TaskType type = TaskType::PickAndPlace;
  Obj target = Obj::Mug;
  Obj receptacle = Obj::CounterTop;
  Obj aux = Obj::None;
  bool sliced = false;
  std::string goalDirective;

  bool operator==(const TaskSpec&) const = default;
};

class InvalidTask : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws InvalidTask when params do not fit the task type's arity and class constraints.
void validate(const TaskSpec& task);

/// Uniform draw of valid parameters for a task type; sliced variants with probability pSliced.
TaskSpec sample_task(TaskType type, Rng& rng, double pSliced = 0.3);

/// Class label the agent handles after any slicing step (AppleSliced for sliced tasks).
Obj handled_label(const TaskSpec& task);

std::vector<SubGoal> decompose(const TaskSpec& task);

class InvalidSubGoal : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Canonical primitive expansion of a manipulation sub-goal, ending in StopManip.
std::vector<ManipAction> macro_actions(const SubGoal& sg);

enum class ConditionKind : uint8_t { InReceptacle, IsClean, IsHot, IsCold, IsSliced, LampOn, Held };

struct GoalCondition {
  ConditionKind kind;
  Obj subject = Obj::None;  // base class of the object the condition is about
  Obj object = Obj::None;   // receptacle / lamp class where relevant
  int instance = 0;         // distinct-instance slot (PickTwo uses 0 and 1)
};

std::vector<GoalCondition> goal_conditions(const TaskSpec& task);

/// Every object class a task touches (targets, receptacles and macro tools).
std::vector<Obj> required_classes(const TaskSpec& task);

// ============================================================================
// Language
// ============================================================================

class UnknownSymbol : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Natural-language phrase of a predicate symbol ("AppleSliced" -> a sliced apple).
std::vector<std::string> predicate_phrase(std::string_view symbol);

/// Every symbol any prediction head can emit.
std::vector<std::string> predicate_symbols();

struct InstructionSet {
  std::vector<std::string> perSubGoal;  // empty string for End
};

struct Verbalization {
  std::string goalDirective;
  InstructionSet instructions;
};

/// Template language for a task. `navPlans[i]` holds the expert path of a
/// Goto sub-goal (used to describe the route); other entries may be empty.
Verbalization verbalize(const TaskSpec& task, const std::vector<SubGoal>& sgs,
                        const std::vector<std::vector<NavType>>& navPlans, Rng& rng);

/// Closed word list covering every template and predicate phrase.
const std::vector<std::string>& vocabulary_words();

/// Lower-case, whitespace/punctuation split.
std::vector<std::string> tokenize_text(std::string_view text);

/// Human-readable table of symbols, phrases and templates.
void write_schema_table(std::ostream& os);

}  // namespace hiertask
