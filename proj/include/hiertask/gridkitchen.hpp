#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hiertask/taskschema.hpp"

namespace hiertask {

inline constexpr int kGridSize = 12;
inline constexpr int kViewRange = 3;
inline constexpr int kMinHorizon = -30;
inline constexpr int kMaxHorizon = 60;
inline constexpr int kHorizonStep = 15;
inline constexpr int kNumHorizons = 7;

enum class Rot : uint8_t { N, E, S, W };

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

struct Pose {
  int x = 1;
  int y = 1;
  Rot rot = Rot::N;
  int horizon = 0;

  bool operator==(const Pose&) const = default;
  Cell cell() const { return {x, y}; }
};

Cell facing_cell(const Pose& p);
Rot rotate_left(Rot r);
Rot rotate_right(Rot r);
/// Horizon index in [0, kNumHorizons) used by the posture embedding.
int horizon_index(int horizon);

enum class CellKind : uint8_t { Free, Wall, Furniture };

struct Grid {
  std::array<CellKind, kGridSize * kGridSize> cells{};

  CellKind at(Cell c) const { return cells[c.y * kGridSize + c.x]; }
  CellKind& at(Cell c) { return cells[c.y * kGridSize + c.x]; }
  bool inside(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < kGridSize && c.y < kGridSize; }
  bool walkable(Cell c) const { return inside(c) && at(c) == CellKind::Free; }
  bool operator==(const Grid&) const = default;
};

struct ObjectFlags {
  bool isOpen = false;
  bool isToggledOn = false;
  bool isClean = false;
  bool isHot = false;
  bool isCold = false;
  bool isSliced = false;
  bool isPickedUp = false;
  bool operator==(const ObjectFlags&) const = default;
};

struct ObjectInstance {
  int id = 0;
  Obj cls = Obj::None;  // base class
  Cell cell;
  ObjectFlags flags;
  std::optional<int> parent;

  /// Class label as a detector would report it (AppleSliced after slicing).
  Obj label() const { return flags.isSliced ? sliced_label(cls) : cls; }
  bool operator==(const ObjectInstance&) const = default;
};

/// Layout id selects walls and furniture; placement seed selects movable
/// objects and the agent's start pose.
struct SceneSeed {
  uint32_t layout = 0;
  uint32_t placement = 0;
  bool operator==(const SceneSeed&) const = default;
};

struct WorldState {
  Grid grid;
  std::vector<ObjectInstance> objects;  // objects[i].id == i
  Pose agent;
  std::optional<int> holding;
  SceneSeed seed;

  bool operator==(const WorldState&) const = default;
  const ObjectInstance& object(int id) const { return objects.at(static_cast<size_t>(id)); }
};

enum class FailureReason : uint8_t {
  None,
  Blocked,
  NotVisible,
  NotReachable,
  PreconditionUnmet,
  HorizonLimit,
  InvalidArgument,
};

std::string_view failure_name(FailureReason r);
std::optional<FailureReason> failure_from_name(std::string_view s);

struct ActionResult {
  bool success = true;
  FailureReason failureReason = FailureReason::None;

  static ActionResult ok() { return {}; }
  static ActionResult fail(FailureReason r) { return {false, r}; }
  bool operator==(const ActionResult&) const = default;
};

class PlacementInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Walls and furniture of a layout id. Pure function of the id.
struct Layout {
  Grid grid;
  std::vector<std::pair<Obj, Cell>> furniture;
};
Layout make_layout(uint32_t layoutId);

WorldState reset(SceneSeed seed, const TaskSpec& task);

/// In-place variants; on failure the state is left untouched.
ActionResult apply_nav(WorldState& s, NavType a);
ActionResult apply_manip(WorldState& s, ManipType a, int target);

std::pair<WorldState, ActionResult> step_nav(WorldState s, NavType a);
std::pair<WorldState, ActionResult> step_manip(WorldState s, ManipType a, int target);

/// Objects in the 3-cell-wide forward cone within kViewRange, excluding the
/// held object and anything inside a closed receptacle. Sorted by id.
std::vector<int> visible_objects(const WorldState& s);
bool is_visible(const WorldState& s, int id);
/// Held, inside a held object, or inside a closed receptacle.
bool is_hidden(const WorldState& s, int id);
bool is_reachable(const WorldState& s, int id);

struct GoalConditionReport {
  int satisfiedCount = 0;
  int totalCount = 0;
  bool success = false;
};

GoalConditionReport check_goal(const WorldState& s, const TaskSpec& task);

/// Number of objects whose parent is `id`.
int occupancy(const WorldState& s, int id);

}  // namespace hiertask
