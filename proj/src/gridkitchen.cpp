#include "hiertask/gridkitchen.hpp"

#include <algorithm>
#include <array>
#include <deque>

namespace hiertask {

namespace {
constexpr std::array<Cell, 4> kDirs = {{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};  // N E S W
constexpr std::array<const char*, 7> kFailureNames = {
    "None", "Blocked", "NotVisible", "NotReachable", "PreconditionUnmet", "HorizonLimit", "InvalidArgument"};

Cell offset(Cell c, Cell d, int k = 1) { return {c.x + d.x * k, c.y + d.y * k}; }
Cell dir(Rot r) { return kDirs[static_cast<int>(r)]; }
}  // namespace

std::string_view failure_name(FailureReason r) { return kFailureNames[static_cast<int>(r)]; }

std::optional<FailureReason> failure_from_name(std::string_view s) {
  for (size_t i = 0; i < kFailureNames.size(); ++i)
    if (s == kFailureNames[i]) return static_cast<FailureReason>(i);
  return std::nullopt;
}

Cell facing_cell(const Pose& p) { return offset(p.cell(), dir(p.rot)); }
Rot rotate_left(Rot r) { return static_cast<Rot>((static_cast<int>(r) + 3) % 4); }
Rot rotate_right(Rot r) { return static_cast<Rot>((static_cast<int>(r) + 1) % 4); }
int horizon_index(int horizon) { return (horizon - kMinHorizon) / kHorizonStep; }

// ============================================================================
// Layout generation
// ============================================================================

namespace {

const std::array<Obj, 10> kFurniture = {Obj::CounterTop, Obj::CounterTop, Obj::DiningTable, Obj::Fridge,
                                        Obj::Microwave,  Obj::Sink,       Obj::CoffeeMachine, Obj::Cabinet,
                                        Obj::Shelf,      Obj::DeskLamp};

int count_reachable_free(const Grid& g, Cell start) {
  std::array<bool, kGridSize * kGridSize> seen{};
  std::deque<Cell> q{start};
  seen[start.y * kGridSize + start.x] = true;
  int n = 0;
  while (!q.empty()) {
    Cell c = q.front();
    q.pop_front();
    ++n;
    for (Cell d : kDirs) {
      Cell nb = offset(c, d);
      if (!g.walkable(nb) || seen[nb.y * kGridSize + nb.x]) continue;
      seen[nb.y * kGridSize + nb.x] = true;
      q.push_back(nb);
    }
  }
  return n;
}

bool touches_wall(const Grid& g, Cell c) {
  for (Cell d : kDirs)
    if (g.inside(offset(c, d)) && g.at(offset(c, d)) == CellKind::Wall) return true;
  return false;
}

bool has_free_neighbour(const Grid& g, Cell c) {
  for (Cell d : kDirs)
    if (g.walkable(offset(c, d))) return true;
  return false;
}

std::optional<Layout> try_layout(Rng& rng) {
  Layout out;
  Grid& g = out.grid;
  for (int y = 0; y < kGridSize; ++y)
    for (int x = 0; x < kGridSize; ++x)
      g.at({x, y}) = (x == 0 || y == 0 || x == kGridSize - 1 || y == kGridSize - 1) ? CellKind::Wall
                                                                                    : CellKind::Free;
  const int segments = 1 + static_cast<int>(rng.uniform_int(2));
  for (int s = 0; s < segments; ++s) {
    const bool horizontal = rng.bernoulli(0.5);
    const int len = 2 + static_cast<int>(rng.uniform_int(3));
    Cell c{3 + static_cast<int>(rng.uniform_int(6)), 3 + static_cast<int>(rng.uniform_int(6))};
    for (int k = 0; k < len; ++k) {
      Cell w = horizontal ? Cell{c.x + k, c.y} : Cell{c.x, c.y + k};
      if (w.x < kGridSize - 2 && w.y < kGridSize - 2) g.at(w) = CellKind::Wall;
    }
  }
  for (Obj f : kFurniture) {
    std::vector<Cell> candidates;
    for (int y = 1; y < kGridSize - 1; ++y)
      for (int x = 1; x < kGridSize - 1; ++x) {
        Cell c{x, y};
        if (g.at(c) == CellKind::Free && (f == Obj::DiningTable || touches_wall(g, c))) candidates.push_back(c);
      }
    if (candidates.empty()) return std::nullopt;
    Cell c = candidates[rng.uniform_int(candidates.size())];
    g.at(c) = CellKind::Furniture;
    out.furniture.emplace_back(f, c);
  }
  int free = 0;
  Cell any{};
  for (int y = 0; y < kGridSize; ++y)
    for (int x = 0; x < kGridSize; ++x)
      if (g.at({x, y}) == CellKind::Free) ++free, any = {x, y};
  if (free < 40 || count_reachable_free(g, any) != free) return std::nullopt;
  for (const auto& [f, c] : out.furniture)
    if (!has_free_neighbour(g, c)) return std::nullopt;
  return out;
}

}  // namespace

Layout make_layout(uint32_t layoutId) {
  Rng rng(derive_seed(0x6c61796f7574ull, layoutId));
  for (int attempt = 0; attempt < 500; ++attempt)
    if (auto l = try_layout(rng)) return *l;
  throw PlacementInfeasible("no valid layout for id " + std::to_string(layoutId));
}

// ============================================================================
// Scene reset
// ============================================================================

namespace {

uint64_t task_hash(const TaskSpec& t) {
  std::string key = std::string(task_type_name(t.type)) + "|" + std::string(obj_name(t.target)) + "|" +
                    std::string(obj_name(t.receptacle)) + "|" + std::string(obj_name(t.aux)) + "|" +
                    (t.sliced ? "1" : "0");
  return fnv1a64(key);
}

void set_cell_recursive(WorldState& s, int id, Cell c) {
  s.objects[id].cell = c;
  for (auto& o : s.objects)
    if (o.parent == id) set_cell_recursive(s, o.id, c);
}

int add_object(WorldState& s, Obj cls, Cell c, std::optional<int> parent) {
  ObjectInstance o;
  o.id = static_cast<int>(s.objects.size());
  o.cls = cls;
  o.cell = c;
  o.parent = parent;
  s.objects.push_back(o);
  return o.id;
}

bool place_in(WorldState& s, Rng& rng, Obj cls, const std::vector<Obj>& receptacles) {
  std::vector<int> slots;
  for (const auto& o : s.objects)
    if (std::find(receptacles.begin(), receptacles.end(), o.cls) != receptacles.end() &&
        !is_movable(o.cls) && occupancy(s, o.id) < affordances(o.cls).capacity)
      slots.push_back(o.id);
  if (slots.empty()) return false;
  const int r = slots[rng.uniform_int(slots.size())];
  add_object(s, cls, s.objects[r].cell, r);
  return true;
}

std::optional<WorldState> try_reset(const Layout& layout, SceneSeed seed, const TaskSpec& task, Rng& rng) {
  WorldState s;
  s.grid = layout.grid;
  s.seed = seed;
  for (const auto& [cls, c] : layout.furniture) add_object(s, cls, c, std::nullopt);
  for (const auto& [cls, c] : layout.furniture)
    if (cls == Obj::Sink) add_object(s, Obj::Faucet, c, std::nullopt);

  const std::vector<Obj> surfaces = {Obj::CounterTop, Obj::DiningTable, Obj::Shelf};
  auto without = [](std::vector<Obj> v, Obj o) {
    v.erase(std::remove(v.begin(), v.end(), o), v.end());
    return v;
  };
  const std::vector<Obj> targetSurfaces = task.sliced ? std::vector<Obj>{Obj::CounterTop}
                                                      : without(surfaces, task.receptacle);
  const int nTargets = task.type == TaskType::PickTwoAndPlace ? 2 : 1;
  for (int i = 0; i < nTargets; ++i)
    if (!place_in(s, rng, task.target, targetSurfaces)) return std::nullopt;
  if (task.sliced && !place_in(s, rng, Obj::Knife, surfaces)) return std::nullopt;
  if (task.type == TaskType::StackAndPlace && !place_in(s, rng, task.aux, without(surfaces, task.receptacle)))
    return std::nullopt;

  std::vector<Obj> pool;
  const auto required = required_classes(task);
  for (int i = 0; i < kNumMovable; ++i) {
    const Obj c = obj_from_index(i);
    if (std::find(required.begin(), required.end(), c) == required.end()) pool.push_back(c);
  }
  const int distractors = 2 + static_cast<int>(rng.uniform_int(3));
  const std::vector<Obj> distractorSpots = {Obj::CounterTop, Obj::DiningTable, Obj::Shelf, Obj::Fridge,
                                            Obj::Cabinet};
  for (int i = 0; i < distractors && !pool.empty(); ++i) {
    const size_t k = rng.uniform_int(pool.size());
    const Obj cls = pool[k];
    pool.erase(pool.begin() + static_cast<long>(k));
    place_in(s, rng, cls, distractorSpots);
  }

  std::vector<Cell> free;
  for (int y = 0; y < kGridSize; ++y)
    for (int x = 0; x < kGridSize; ++x)
      if (s.grid.walkable({x, y})) free.push_back({x, y});
  const Cell start = free[rng.uniform_int(free.size())];
  s.agent = Pose{start.x, start.y, static_cast<Rot>(rng.uniform_int(4)), 0};

  if (check_goal(s, task).success) return std::nullopt;
  return s;
}

}  // namespace

WorldState reset(SceneSeed seed, const TaskSpec& task) {
  validate(task);
  const Layout layout = make_layout(seed.layout);
  Rng rng(derive_seed(seed.layout, seed.placement, task_hash(task)));
  for (int attempt = 0; attempt < 50; ++attempt)
    if (auto s = try_reset(layout, seed, task, rng)) return *s;
  throw PlacementInfeasible("could not place task objects");
}

int occupancy(const WorldState& s, int id) {
  int n = 0;
  for (const auto& o : s.objects)
    if (o.parent == id) ++n;
  return n;
}

// ============================================================================
// Perception rules
// ============================================================================

namespace {

bool hidden(const WorldState& s, const ObjectInstance& o) {
  if (o.flags.isPickedUp) return true;
  std::optional<int> p = o.parent;
  while (p) {
    const ObjectInstance& parent = s.objects[*p];
    if (parent.flags.isPickedUp) return true;
    if (affordances(parent.cls).openable && !parent.flags.isOpen) return true;
    p = parent.parent;
  }
  return false;
}

bool in_view(const Pose& p, Cell c) {
  if (c == p.cell()) return true;
  const Cell fwd = dir(p.rot);
  const Cell right = dir(rotate_right(p.rot));
  for (int f = 1; f <= kViewRange; ++f)
    for (int l = -1; l <= 1; ++l)
      if (offset(offset(p.cell(), fwd, f), right, l) == c) return true;
  return false;
}

}  // namespace

bool is_hidden(const WorldState& s, int id) { return hidden(s, s.objects.at(static_cast<size_t>(id))); }

bool is_visible(const WorldState& s, int id) {
  if (id < 0 || id >= static_cast<int>(s.objects.size())) return false;
  const ObjectInstance& o = s.objects[id];
  return !hidden(s, o) && in_view(s.agent, o.cell);
}

bool is_reachable(const WorldState& s, int id) {
  if (id < 0 || id >= static_cast<int>(s.objects.size())) return false;
  const Cell c = s.objects[id].cell;
  return c == facing_cell(s.agent) || c == s.agent.cell();
}

std::vector<int> visible_objects(const WorldState& s) {
  std::vector<int> out;
  for (const auto& o : s.objects)
    if (is_visible(s, o.id)) out.push_back(o.id);
  return out;
}

// ============================================================================
// Actions
// ============================================================================

ActionResult apply_nav(WorldState& s, NavType a) {
  Pose& p = s.agent;
  switch (a) {
    case NavType::RotateLeft:
      p.rot = rotate_left(p.rot);
      return ActionResult::ok();
    case NavType::RotateRight:
      p.rot = rotate_right(p.rot);
      return ActionResult::ok();
    case NavType::MoveAhead: {
      const Cell next = facing_cell(p);
      if (!s.grid.walkable(next)) return ActionResult::fail(FailureReason::Blocked);
      p.x = next.x;
      p.y = next.y;
      if (s.holding) set_cell_recursive(s, *s.holding, next);
      return ActionResult::ok();
    }
    case NavType::LookUp:
      if (p.horizon - kHorizonStep < kMinHorizon) return ActionResult::fail(FailureReason::HorizonLimit);
      p.horizon -= kHorizonStep;
      return ActionResult::ok();
    case NavType::LookDown:
      if (p.horizon + kHorizonStep > kMaxHorizon) return ActionResult::fail(FailureReason::HorizonLimit);
      p.horizon += kHorizonStep;
      return ActionResult::ok();
    case NavType::StopNav:
      break;
  }
  return ActionResult::fail(FailureReason::InvalidArgument);
}

namespace {

void apply_effects(WorldState& s) {
  for (auto& o : s.objects) {
    if (!o.parent || !affordances(o.cls).pickupable) continue;
    const ObjectInstance& p = s.objects[*o.parent];
    if (p.cls == Obj::Microwave && p.flags.isToggledOn) o.flags.isHot = true;
    if (p.cls == Obj::Fridge) o.flags.isCold = true;
    if (p.cls == Obj::Sink) {
      for (const auto& f : s.objects)
        if (f.cls == Obj::Faucet && f.cell == p.cell && f.flags.isToggledOn) o.flags.isClean = true;
    }
  }
}

bool contains_recursive(const WorldState& s, int container, int id) {
  std::optional<int> p = s.objects[id].parent;
  while (p) {
    if (*p == container) return true;
    p = s.objects[*p].parent;
  }
  return false;
}

ActionResult check_manip(const WorldState& s, ManipType a, int target) {
  if (a == ManipType::StopManip || target < 0 || target >= static_cast<int>(s.objects.size()))
    return ActionResult::fail(FailureReason::InvalidArgument);
  if (!is_visible(s, target)) return ActionResult::fail(FailureReason::NotVisible);
  if (!is_reachable(s, target)) return ActionResult::fail(FailureReason::NotReachable);
  const ObjectInstance& o = s.objects[target];
  const Affordances aff = affordances(o.cls);
  bool ok = false;
  switch (a) {
    case ManipType::Pickup:
      ok = !s.holding && aff.pickupable;
      break;
    case ManipType::Put:
      ok = s.holding && *s.holding != target && aff.receptacle && (!aff.openable || o.flags.isOpen) &&
           occupancy(s, target) < aff.capacity && !contains_recursive(s, *s.holding, target);
      break;
    case ManipType::Open:
      ok = aff.openable && !o.flags.isOpen;
      break;
    case ManipType::Close:
      ok = aff.openable && o.flags.isOpen;
      break;
    case ManipType::ToggleOn:
      ok = aff.toggleable && !o.flags.isToggledOn && !(aff.openable && o.flags.isOpen);
      break;
    case ManipType::ToggleOff:
      ok = aff.toggleable && o.flags.isToggledOn;
      break;
    case ManipType::Slice:
      ok = s.holding && s.objects[*s.holding].cls == Obj::Knife && aff.sliceable && !o.flags.isSliced;
      break;
    case ManipType::StopManip:
      break;
  }
  return ok ? ActionResult::ok() : ActionResult::fail(FailureReason::PreconditionUnmet);
}

}  // namespace

ActionResult apply_manip(WorldState& s, ManipType a, int target) {
  const ActionResult r = check_manip(s, a, target);
  if (!r.success) return r;
  ObjectInstance& o = s.objects[target];
  switch (a) {
    case ManipType::Pickup:
      o.parent.reset();
      o.flags.isPickedUp = true;
      s.holding = target;
      break;
    case ManipType::Put: {
      ObjectInstance& h = s.objects[*s.holding];
      h.flags.isPickedUp = false;
      h.parent = target;
      set_cell_recursive(s, h.id, o.cell);
      s.holding.reset();
      break;
    }
    case ManipType::Open: o.flags.isOpen = true; break;
    case ManipType::Close: o.flags.isOpen = false; break;
    case ManipType::ToggleOn: o.flags.isToggledOn = true; break;
    case ManipType::ToggleOff: o.flags.isToggledOn = false; break;
    case ManipType::Slice: o.flags.isSliced = true; break;
    case ManipType::StopManip: break;
  }
  apply_effects(s);
  return r;
}

std::pair<WorldState, ActionResult> step_nav(WorldState s, NavType a) {
  ActionResult r = apply_nav(s, a);
  return {std::move(s), r};
}

std::pair<WorldState, ActionResult> step_manip(WorldState s, ManipType a, int target) {
  ActionResult r = apply_manip(s, a, target);
  return {std::move(s), r};
}

// ============================================================================
// Goal checking
// ============================================================================

namespace {

bool in_class(const WorldState& s, const ObjectInstance& o, Obj receptacle) {
  return o.parent && s.objects[*o.parent].cls == receptacle;
}

bool flag_for(const ObjectInstance& o, ConditionKind k) {
  switch (k) {
    case ConditionKind::IsClean: return o.flags.isClean;
    case ConditionKind::IsHot: return o.flags.isHot;
    case ConditionKind::IsCold: return o.flags.isCold;
    case ConditionKind::IsSliced: return o.flags.isSliced;
    default: return false;
  }
}

}  // namespace

GoalConditionReport check_goal(const WorldState& s, const TaskSpec& task) {
  const auto conds = goal_conditions(task);
  GoalConditionReport rep;
  rep.totalCount = static_cast<int>(conds.size());
  int best = 0;
  switch (task.type) {
    case TaskType::PickTwoAndPlace: {
      int n = 0;
      for (const auto& o : s.objects)
        if (o.cls == task.target && in_class(s, o, task.receptacle)) ++n;
      best = std::min(n, 2);
      break;
    }
    case TaskType::StackAndPlace: {
      for (const auto& c : s.objects) {
        if (c.cls != task.aux) continue;
        int sat = in_class(s, c, task.receptacle) ? 1 : 0;
        for (const auto& o : s.objects)
          if (o.cls == task.target && o.parent == c.id) {
            ++sat;
            break;
          }
        best = std::max(best, sat);
      }
      break;
    }
    case TaskType::ExamineInLight: {
      for (const auto& o : s.objects)
        if (o.cls == task.aux && o.flags.isToggledOn) {
          ++best;
          break;
        }
      if (s.holding && s.objects[*s.holding].cls == task.target) ++best;
      break;
    }
    default: {
      for (const auto& o : s.objects) {
        if (o.cls != task.target) continue;
        int sat = 0;
        for (const auto& c : conds)
          sat += c.kind == ConditionKind::InReceptacle ? in_class(s, o, c.object) : flag_for(o, c.kind);
        best = std::max(best, sat);
      }
      break;
    }
  }
  rep.satisfiedCount = best;
  rep.success = best == rep.totalCount;
  return rep;
}

}  // namespace hiertask
