#include "hiertask/taskschema.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace hiertask {

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

// ============================================================================
// Object labels
// ============================================================================

namespace {

struct ObjInfo {
  const char* name;
  const char* text;
  Affordances aff;
};

// name, text, {pickupable, receptacle, openable, toggleable, sliceable, capacity}
const std::array<ObjInfo, kNumArgs> kObjTable = {{
    {"Mug", "mug", {true, false, false, false, false, 0}},
    {"Cup", "cup", {true, false, false, false, false, 0}},
    {"Apple", "apple", {true, false, false, false, true, 0}},
    {"Potato", "potato", {true, false, false, false, true, 0}},
    {"Tomato", "tomato", {true, false, false, false, true, 0}},
    {"Bread", "bread", {true, false, false, false, true, 0}},
    {"Egg", "egg", {true, false, false, false, false, 0}},
    {"Knife", "knife", {true, false, false, false, false, 0}},
    {"Bowl", "bowl", {true, true, false, false, false, 1}},
    {"Plate", "plate", {true, true, false, false, false, 1}},
    {"Book", "book", {true, false, false, false, false, 0}},
    {"Pencil", "pencil", {true, false, false, false, false, 0}},
    {"CounterTop", "counter top", {false, true, false, false, false, 6}},
    {"DiningTable", "dining table", {false, true, false, false, false, 6}},
    {"Fridge", "fridge", {false, true, true, false, false, 6}},
    {"Microwave", "microwave", {false, true, true, true, false, 2}},
    {"Sink", "sink", {false, true, false, false, false, 3}},
    {"Faucet", "faucet", {false, false, false, true, false, 0}},
    {"CoffeeMachine", "coffee machine", {false, true, false, false, false, 1}},
    {"Cabinet", "cabinet", {false, true, true, false, false, 6}},
    {"Shelf", "shelf", {false, true, false, false, false, 6}},
    {"DeskLamp", "desk lamp", {false, false, false, true, false, 0}},
    {"AppleSliced", "sliced apple", {true, false, false, false, false, 0}},
    {"PotatoSliced", "sliced potato", {true, false, false, false, false, 0}},
    {"TomatoSliced", "sliced tomato", {true, false, false, false, false, 0}},
    {"BreadSliced", "sliced bread", {true, false, false, false, false, 0}},
    {"None", "none", {}},
}};

}  // namespace

Affordances affordances(Obj cls) { return kObjTable[index(base_class(cls))].aff; }

bool is_movable(Obj cls) { return index(base_class(cls)) < kNumMovable; }

bool is_sliceable(Obj cls) { return affordances(cls).sliceable; }

Obj base_class(Obj label) {
  switch (label) {
    case Obj::AppleSliced: return Obj::Apple;
    case Obj::PotatoSliced: return Obj::Potato;
    case Obj::TomatoSliced: return Obj::Tomato;
    case Obj::BreadSliced: return Obj::Bread;
    default: return label;
  }
}

Obj sliced_label(Obj cls) {
  switch (cls) {
    case Obj::Apple: return Obj::AppleSliced;
    case Obj::Potato: return Obj::PotatoSliced;
    case Obj::Tomato: return Obj::TomatoSliced;
    case Obj::Bread: return Obj::BreadSliced;
    default: throw InvalidTask("class cannot be sliced: " + std::string(obj_name(cls)));
  }
}

std::string_view obj_name(Obj o) { return kObjTable[index(o)].name; }

std::optional<Obj> obj_from_name(std::string_view name) {
  for (int i = 0; i < kNumArgs; ++i)
    if (name == kObjTable[i].name) return obj_from_index(i);
  return std::nullopt;
}

std::string obj_text(Obj o) { return kObjTable[index(o)].text; }

// ============================================================================
// Predicates
// ============================================================================

namespace {
constexpr std::array<const char*, kNumSubGoalTypes> kSubGoalNames = {
    "Goto", "Pickup", "Put", "Cool", "Heat", "Clean", "Slice", "Toggle", "End"};
constexpr std::array<const char*, kNumNavTypes> kNavNames = {
    "RotateLeft", "RotateRight", "MoveAhead", "LookUp", "LookDown", "StopNav"};
constexpr std::array<const char*, kNumManipTypes> kManipNames = {
    "Pickup", "Put", "Open", "Close", "ToggleOn", "ToggleOff", "Slice", "StopManip"};
constexpr std::array<const char*, kNumTaskTypes> kTaskNames = {
    "PickAndPlace", "PickTwoAndPlace", "CleanAndPlace", "HeatAndPlace",
    "CoolAndPlace", "StackAndPlace",   "ExamineInLight"};

template <typename E, size_t N>
std::optional<E> lookup(const std::array<const char*, N>& names, std::string_view s) {
  for (size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<E>(i);
  return std::nullopt;
}
}  // namespace

bool is_manipulation(SubGoalType t) { return t != SubGoalType::Goto && t != SubGoalType::End; }

std::string_view subgoal_type_name(SubGoalType t) { return kSubGoalNames[static_cast<int>(t)]; }
std::string_view nav_name(NavType t) { return kNavNames[static_cast<int>(t)]; }
std::string_view manip_name(ManipType t) { return kManipNames[static_cast<int>(t)]; }
std::string_view task_type_name(TaskType t) { return kTaskNames[static_cast<int>(t)]; }

std::optional<SubGoalType> subgoal_type_from_name(std::string_view s) {
  return lookup<SubGoalType>(kSubGoalNames, s);
}
std::optional<NavType> nav_from_name(std::string_view s) { return lookup<NavType>(kNavNames, s); }
std::optional<ManipType> manip_from_name(std::string_view s) {
  return lookup<ManipType>(kManipNames, s);
}
std::optional<TaskType> task_type_from_name(std::string_view s) {
  return lookup<TaskType>(kTaskNames, s);
}

std::string to_string(const SubGoal& sg) {
  if (sg.type == SubGoalType::End) return "End";
  return std::string(subgoal_type_name(sg.type)) + "(" + std::string(obj_name(sg.arg)) + ")";
}

std::string to_string(const ManipAction& a) {
  if (a.type == ManipType::StopManip) return "StopManip";
  return std::string(manip_name(a.type)) + "(" + std::string(obj_name(a.arg)) + ")";
}

namespace {
std::pair<std::string_view, std::string_view> split_call(std::string_view s) {
  const auto open = s.find('(');
  if (open == std::string_view::npos) return {s, "None"};
  if (s.back() != ')') throw UnknownSymbol("malformed predicate: " + std::string(s));
  return {s.substr(0, open), s.substr(open + 1, s.size() - open - 2)};
}
}  // namespace

SubGoal parse_subgoal(std::string_view s) {
  auto [head, arg] = split_call(s);
  auto t = subgoal_type_from_name(head);
  auto a = obj_from_name(arg);
  if (!t || !a) throw UnknownSymbol("unknown sub-goal: " + std::string(s));
  return {*t, *a};
}

ManipAction parse_manip(std::string_view s) {
  auto [head, arg] = split_call(s);
  auto t = manip_from_name(head);
  auto a = obj_from_name(arg);
  if (!t || !a) throw UnknownSymbol("unknown manipulation action: " + std::string(s));
  return {*t, *a};
}

// ============================================================================
// Tasks
// ============================================================================

namespace {

using ObjSet = std::vector<Obj>;

bool contains(const ObjSet& s, Obj o) { return std::find(s.begin(), s.end(), o) != s.end(); }

const ObjSet kFood = {Obj::Apple, Obj::Potato, Obj::Tomato, Obj::Bread, Obj::Egg, Obj::Mug, Obj::Cup};

struct TaskRule {
  ObjSet targets;
  ObjSet receptacles;
  ObjSet aux;
  bool sliceAllowed;
};

const TaskRule& rule(TaskType t) {
  static const std::array<TaskRule, kNumTaskTypes> rules = {{
      // PickAndPlace
      {{Obj::Mug, Obj::Cup, Obj::Apple, Obj::Potato, Obj::Tomato, Obj::Bread, Obj::Egg, Obj::Knife,
        Obj::Bowl, Obj::Plate, Obj::Book, Obj::Pencil},
       {Obj::CounterTop, Obj::DiningTable, Obj::Fridge, Obj::Microwave, Obj::Sink,
        Obj::CoffeeMachine, Obj::Cabinet, Obj::Shelf},
       {Obj::None},
       true},
      // PickTwoAndPlace
      {{Obj::Mug, Obj::Cup, Obj::Apple, Obj::Potato, Obj::Tomato, Obj::Egg, Obj::Book, Obj::Pencil},
       {Obj::CounterTop, Obj::DiningTable, Obj::Fridge, Obj::Sink, Obj::Cabinet, Obj::Shelf},
       {Obj::None},
       false},
      // CleanAndPlace
      {{Obj::Mug, Obj::Cup, Obj::Apple, Obj::Potato, Obj::Tomato, Obj::Bowl, Obj::Plate, Obj::Knife},
       {Obj::CounterTop, Obj::DiningTable, Obj::CoffeeMachine, Obj::Fridge, Obj::Cabinet, Obj::Shelf},
       {Obj::None},
       false},
      // HeatAndPlace
      {kFood,
       {Obj::CounterTop, Obj::DiningTable, Obj::Fridge, Obj::Cabinet, Obj::Shelf},
       {Obj::None},
       true},
      // CoolAndPlace
      {kFood,
       {Obj::CounterTop, Obj::DiningTable, Obj::Microwave, Obj::Cabinet, Obj::Shelf},
       {Obj::None},
       true},
      // StackAndPlace
      {{Obj::Apple, Obj::Potato, Obj::Tomato, Obj::Egg, Obj::Pencil, Obj::Mug},
       {Obj::CounterTop, Obj::DiningTable, Obj::Fridge, Obj::Cabinet, Obj::Shelf},
       {Obj::Bowl, Obj::Plate},
       false},
      // ExamineInLight
      {{Obj::Book, Obj::Pencil, Obj::Mug, Obj::Cup, Obj::Bowl, Obj::Plate, Obj::Apple},
       {Obj::None},
       {Obj::DeskLamp},
       false},
  }};
  return rules[static_cast<int>(t)];
}

}  // namespace

void validate(const TaskSpec& task) {
  const TaskRule& r = rule(task.type);
  const std::string name(task_type_name(task.type));
  if (!contains(r.targets, task.target))
    throw InvalidTask(name + ": target not allowed: " + std::string(obj_name(task.target)));
  if (!contains(r.receptacles, task.receptacle))
    throw InvalidTask(name + ": receptacle not allowed: " + std::string(obj_name(task.receptacle)));
  if (!contains(r.aux, task.aux))
    throw InvalidTask(name + ": auxiliary class not allowed: " + std::string(obj_name(task.aux)));
  if (task.receptacle == Obj::CoffeeMachine && task.target != Obj::Mug && task.target != Obj::Cup)
    throw InvalidTask(name + ": only cups and mugs go in the coffee machine");
  if (task.sliced && !(r.sliceAllowed && is_sliceable(task.target)))
    throw InvalidTask(name + ": slicing not allowed for this task");
}

TaskSpec sample_task(TaskType type, Rng& rng, double pSliced) {
  const TaskRule& r = rule(type);
  for (;;) {
    TaskSpec t;
    t.type = type;
    t.target = r.targets[rng.uniform_int(r.targets.size())];
    t.receptacle = r.receptacles[rng.uniform_int(r.receptacles.size())];
    t.aux = r.aux[rng.uniform_int(r.aux.size())];
    t.sliced = r.sliceAllowed && is_sliceable(t.target) && rng.bernoulli(pSliced);
    try {
      validate(t);
      return t;
    } catch (const InvalidTask&) {
    }
  }
}

Obj handled_label(const TaskSpec& task) {
  return task.sliced ? sliced_label(task.target) : task.target;
}

std::vector<SubGoal> decompose(const TaskSpec& task) {
  validate(task);
  using T = SubGoalType;
  const Obj t = task.target;
  const Obj h = handled_label(task);
  const Obj r = task.receptacle;
  std::vector<SubGoal> out;
  auto acquire = [&] {
    if (task.sliced) {
      out.insert(out.end(), {{T::Goto, Obj::Knife},
                             {T::Pickup, Obj::Knife},
                             {T::Goto, t},
                             {T::Slice, t},
                             {T::Put, Obj::CounterTop},
                             {T::Pickup, h}});
    } else {
      out.insert(out.end(), {{T::Goto, t}, {T::Pickup, t}});
    }
  };
  auto place = [&] { out.insert(out.end(), {{T::Goto, r}, {T::Put, r}}); };

  switch (task.type) {
    case TaskType::PickAndPlace:
      acquire();
      place();
      break;
    case TaskType::PickTwoAndPlace:
      acquire();
      place();
      acquire();
      place();
      break;
    case TaskType::CleanAndPlace:
      acquire();
      out.insert(out.end(), {{T::Goto, Obj::Sink}, {T::Clean, h}});
      place();
      break;
    case TaskType::HeatAndPlace:
      acquire();
      out.insert(out.end(), {{T::Goto, Obj::Microwave}, {T::Heat, h}});
      place();
      break;
    case TaskType::CoolAndPlace:
      acquire();
      out.insert(out.end(), {{T::Goto, Obj::Fridge}, {T::Cool, h}});
      place();
      break;
    case TaskType::StackAndPlace:
      acquire();
      out.insert(out.end(), {{T::Goto, task.aux}, {T::Put, task.aux}, {T::Pickup, task.aux}});
      place();
      break;
    case TaskType::ExamineInLight:
      acquire();
      out.insert(out.end(), {{T::Goto, task.aux}, {T::Toggle, task.aux}});
      break;
  }
  out.push_back({T::End, Obj::None});
  return out;
}

std::vector<ManipAction> macro_actions(const SubGoal& sg) {
  using M = ManipType;
  const Obj x = sg.arg;
  if (!is_manipulation(sg.type))
    throw InvalidSubGoal("not a manipulation sub-goal: " + to_string(sg));
  if (x == Obj::None) throw InvalidSubGoal("manipulation sub-goal without argument");
  std::vector<ManipAction> out;
  switch (sg.type) {
    case SubGoalType::Pickup:
      if (!affordances(x).pickupable) throw InvalidSubGoal("cannot pick up " + to_string(sg));
      out = {{M::Pickup, x}};
      break;
    case SubGoalType::Put:
      if (!affordances(x).receptacle) throw InvalidSubGoal("not a receptacle: " + to_string(sg));
      if (affordances(x).openable)
        out = {{M::Open, x}, {M::Put, x}, {M::Close, x}};
      else
        out = {{M::Put, x}};
      break;
    case SubGoalType::Clean:
      if (!is_movable(x)) throw InvalidSubGoal("cannot clean " + to_string(sg));
      out = {{M::Put, Obj::Sink}, {M::ToggleOn, Obj::Faucet}, {M::ToggleOff, Obj::Faucet}, {M::Pickup, x}};
      break;
    case SubGoalType::Heat:
      if (!is_movable(x)) throw InvalidSubGoal("cannot heat " + to_string(sg));
      out = {{M::Open, Obj::Microwave},     {M::Put, Obj::Microwave},    {M::Close, Obj::Microwave},
             {M::ToggleOn, Obj::Microwave}, {M::ToggleOff, Obj::Microwave}, {M::Open, Obj::Microwave},
             {M::Pickup, x},                {M::Close, Obj::Microwave}};
      break;
    case SubGoalType::Cool:
      if (!is_movable(x)) throw InvalidSubGoal("cannot cool " + to_string(sg));
      out = {{M::Open, Obj::Fridge}, {M::Put, Obj::Fridge},  {M::Close, Obj::Fridge},
             {M::Open, Obj::Fridge}, {M::Pickup, x},         {M::Close, Obj::Fridge}};
      break;
    case SubGoalType::Slice:
      if (!is_sliceable(x) || x != base_class(x)) throw InvalidSubGoal("cannot slice " + to_string(sg));
      out = {{M::Slice, x}};
      break;
    case SubGoalType::Toggle:
      if (!affordances(x).toggleable) throw InvalidSubGoal("cannot toggle " + to_string(sg));
      out = {{M::ToggleOn, x}};
      break;
    default:
      break;
  }
  out.push_back({M::StopManip, Obj::None});
  return out;
}

std::vector<GoalCondition> goal_conditions(const TaskSpec& task) {
  validate(task);
  using K = ConditionKind;
  const Obj t = task.target;
  const Obj r = task.receptacle;
  std::vector<GoalCondition> out;
  auto add_sliced = [&] {
    if (task.sliced) out.push_back({K::IsSliced, t, Obj::None, 0});
  };
  switch (task.type) {
    case TaskType::PickAndPlace:
      out.push_back({K::InReceptacle, t, r, 0});
      add_sliced();
      break;
    case TaskType::PickTwoAndPlace:
      out.push_back({K::InReceptacle, t, r, 0});
      out.push_back({K::InReceptacle, t, r, 1});
      break;
    case TaskType::CleanAndPlace:
      out.push_back({K::InReceptacle, t, r, 0});
      out.push_back({K::IsClean, t, Obj::None, 0});
      break;
    case TaskType::HeatAndPlace:
      out.push_back({K::InReceptacle, t, r, 0});
      out.push_back({K::IsHot, t, Obj::None, 0});
      add_sliced();
      break;
    case TaskType::CoolAndPlace:
      out.push_back({K::InReceptacle, t, r, 0});
      out.push_back({K::IsCold, t, Obj::None, 0});
      add_sliced();
      break;
    case TaskType::StackAndPlace:
      out.push_back({K::InReceptacle, t, task.aux, 0});
      out.push_back({K::InReceptacle, task.aux, r, 0});
      break;
    case TaskType::ExamineInLight:
      out.push_back({K::LampOn, task.aux, Obj::None, 0});
      out.push_back({K::Held, t, Obj::None, 0});
      break;
  }
  return out;
}

std::vector<Obj> required_classes(const TaskSpec& task) {
  std::set<int> ids;
  for (const SubGoal& sg : decompose(task)) {
    if (sg.arg != Obj::None) ids.insert(index(base_class(sg.arg)));
    if (is_manipulation(sg.type))
      for (const ManipAction& a : macro_actions(sg))
        if (a.arg != Obj::None) ids.insert(index(base_class(a.arg)));
  }
  std::vector<Obj> out;
  for (int i : ids) out.push_back(obj_from_index(i));
  return out;
}

// ============================================================================
// Language
// ============================================================================

namespace {

const std::map<std::string, std::vector<std::string>>& phrase_table() {
  static const std::map<std::string, std::vector<std::string>> table = [] {
    std::map<std::string, std::vector<std::string>> t = {
        {"Goto", {"go", "to"}},
        {"Pickup", {"pick", "up"}},
        {"Put", {"put"}},
        {"Cool", {"cool"}},
        {"Heat", {"heat"}},
        {"Clean", {"clean"}},
        {"Slice", {"slice"}},
        {"Toggle", {"toggle"}},
        {"End", {"end"}},
        {"RotateLeft", {"rotate", "left"}},
        {"RotateRight", {"rotate", "right"}},
        {"MoveAhead", {"move", "ahead"}},
        {"LookUp", {"look", "up"}},
        {"LookDown", {"look", "down"}},
        {"StopNav", {"stop"}},
        {"Open", {"open"}},
        {"Close", {"close"}},
        {"ToggleOn", {"turn", "on"}},
        {"ToggleOff", {"turn", "off"}},
        {"StopManip", {"stop"}},
    };
    for (int i = 0; i < kNumArgs; ++i) {
      const Obj o = obj_from_index(i);
      std::vector<std::string> words = tokenize_text(obj_text(o));
      if (base_class(o) != o) words.insert(words.begin(), "a");
      t[std::string(obj_name(o))] = words;
    }
    return t;
  }();
  return table;
}

const std::array<std::vector<std::string>, kNumTaskTypes>& goal_templates() {
  static const std::array<std::vector<std::string>, kNumTaskTypes> t = {{
      {"put a {t} in the {r}", "place a {t} on the {r}", "move a {t} to the {r}"},
      {"place two of the {t} in the {r}", "put two {t} items on the {r}", "move both {t} items to the {r}"},
      {"place a clean {t} in the {r}", "rinse a {t} and put it in the {r}", "put a washed {t} on the {r}"},
      {"put a heated {t} in the {r}", "warm up a {t} and place it on the {r}", "cook a {t} then put it in the {r}"},
      {"put a cold {t} in the {r}", "chill a {t} and place it on the {r}", "cool a {t} then put it in the {r}"},
      {"put a {t} in a {c} on the {r}", "place a {c} with a {t} in it on the {r}", "move a {t} inside a {c} to the {r}"},
      {"examine a {t} under the {c}", "look at a {t} in the light of the {c}", "hold a {t} and turn on the {c}"},
  }};
  return t;
}

const std::array<std::vector<std::string>, kNumSubGoalTypes>& manip_templates() {
  static const std::array<std::vector<std::string>, kNumSubGoalTypes> t = {{
      {},
      {"pick up the {x}", "grab the {x}", "take the {x}"},
      {"put it in the {x}", "place it on the {x}", "drop it in the {x}"},
      {"chill the {x} in the fridge", "cool the {x} in the fridge", "put the {x} in the fridge to cool it"},
      {"heat the {x} in the microwave", "warm the {x} in the microwave", "cook the {x} in the microwave"},
      {"rinse the {x} in the sink", "wash the {x} in the sink", "clean the {x} with water"},
      {"slice the {x} with the knife", "cut the {x}", "cut the {x} into slices"},
      {"turn on the {x}", "switch on the {x}", "turn the {x} on"},
      {},
  }};
  return t;
}

const std::vector<std::string> kMoveVerbs = {"walk forward", "go straight", "move ahead"};
const std::vector<std::string> kArrive = {"then face the {x}", "then stop at the {x}", "and go to the {x}"};
const std::vector<std::string> kHere = {"the {x} is right in front of you", "face the {x}", "stay at the {x}"};
const std::vector<std::string> kNumberWords = {"zero", "one", "two",  "three",  "four",   "five",  "six",
                                               "seven", "eight", "nine", "ten", "eleven", "twelve", "many"};

std::string pick(const std::vector<std::string>& v, Rng& rng) { return v[rng.uniform_int(v.size())]; }

std::string substitute(std::string s, const std::string& key, const std::string& value) {
  for (size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
    s.replace(pos, key.size(), value);
  return s;
}

std::string number_word(size_t n) { return kNumberWords[std::min<size_t>(n, kNumberWords.size() - 1)]; }

std::string describe_route(const std::vector<NavType>& plan, Obj target, Rng& rng) {
  const std::string x = obj_text(target);
  std::vector<std::string> clauses;
  size_t i = 0;
  while (i < plan.size()) {
    const NavType a = plan[i];
    if (a == NavType::StopNav) break;
    if (a == NavType::MoveAhead) {
      size_t n = 0;
      while (i < plan.size() && plan[i] == NavType::MoveAhead) ++n, ++i;
      clauses.push_back(pick(kMoveVerbs, rng) + " " + number_word(n) + (n == 1 ? " step" : " steps"));
    } else if (a == NavType::RotateLeft || a == NavType::RotateRight) {
      int net = 0;
      while (i < plan.size() && (plan[i] == NavType::RotateLeft || plan[i] == NavType::RotateRight))
        net += plan[i] == NavType::RotateRight ? 1 : -1, ++i;
      net = ((net % 4) + 4) % 4;
      if (net == 1) clauses.push_back("turn right");
      if (net == 2) clauses.push_back("turn around");
      if (net == 3) clauses.push_back("turn left");
    } else {
      clauses.push_back(a == NavType::LookUp ? "look up" : "look down");
      ++i;
    }
  }
  if (clauses.empty()) return substitute(pick(kHere, rng), "{x}", x);
  std::string out;
  for (const std::string& c : clauses) out += c + ", ";
  return out + substitute(pick(kArrive, rng), "{x}", x);
}

}  // namespace

std::vector<std::string> predicate_phrase(std::string_view symbol) {
  const auto& t = phrase_table();
  auto it = t.find(std::string(symbol));
  if (it == t.end()) throw UnknownSymbol("no phrase for symbol: " + std::string(symbol));
  return it->second;
}

std::vector<std::string> predicate_symbols() {
  std::vector<std::string> out;
  for (const auto& [k, v] : phrase_table()) out.push_back(k);
  return out;
}

std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Verbalization verbalize(const TaskSpec& task, const std::vector<SubGoal>& sgs,
                        const std::vector<std::vector<NavType>>& navPlans, Rng& rng) {
  Verbalization out;
  std::string t = obj_text(task.target);
  if (task.sliced) t = "sliced " + t;
  std::string g = pick(goal_templates()[static_cast<int>(task.type)], rng);
  g = substitute(g, "{t}", t);
  g = substitute(g, "{r}", obj_text(task.receptacle));
  g = substitute(g, "{c}", obj_text(task.aux));
  out.goalDirective = g;

  for (size_t i = 0; i < sgs.size(); ++i) {
    const SubGoal& sg = sgs[i];
    std::string text;
    if (sg.type == SubGoalType::Goto) {
      static const std::vector<NavType> kEmpty;
      text = describe_route(i < navPlans.size() ? navPlans[i] : kEmpty, sg.arg, rng);
    } else if (sg.type != SubGoalType::End) {
      text = substitute(pick(manip_templates()[static_cast<int>(sg.type)], rng), "{x}", obj_text(sg.arg));
    }
    out.instructions.perSubGoal.push_back(text);
  }
  return out;
}

const std::vector<std::string>& vocabulary_words() {
  static const std::vector<std::string> words = [] {
    std::set<std::string> w;
    auto add_text = [&](const std::string& s) {
      for (auto& tok : tokenize_text(s)) w.insert(tok);
    };
    for (const auto& group : goal_templates())
      for (const auto& s : group) add_text(s);
    for (const auto& group : manip_templates())
      for (const auto& s : group) add_text(s);
    for (const auto* group : {&kMoveVerbs, &kArrive, &kHere, &kNumberWords})
      for (const auto& s : *group) add_text(s);
    for (const auto& s : {"turn right", "turn around", "turn left", "look up", "look down", "step steps sliced"})
      add_text(s);
    for (const auto& [k, v] : phrase_table())
      for (const auto& tok : v) w.insert(tok);
    // template placeholders are tokenized as bare letters
    for (const char* p : {"t", "r", "c", "x"}) w.erase(p);
    return std::vector<std::string>(w.begin(), w.end());
  }();
  return words;
}

void write_schema_table(std::ostream& os) {
  os << "# symbol\tphrase\n";
  for (const auto& [k, v] : phrase_table()) {
    os << "phrase\t" << k << "\t";
    for (size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    os << "\n";
  }
  os << "# task type\tgoal templates\n";
  for (int i = 0; i < kNumTaskTypes; ++i)
    for (const auto& s : goal_templates()[i])
      os << "goal\t" << task_type_name(static_cast<TaskType>(i)) << "\t" << s << "\n";
  os << "# sub-goal type\tinstruction templates\n";
  for (int i = 0; i < kNumSubGoalTypes; ++i)
    for (const auto& s : manip_templates()[i])
      os << "instruction\t" << subgoal_type_name(static_cast<SubGoalType>(i)) << "\t" << s << "\n";
  for (const auto& s : kMoveVerbs) os << "route\tmove\t" << s << "\n";
  for (const auto& s : kArrive) os << "route\tarrive\t" << s << "\n";
  for (const auto& s : kHere) os << "route\there\t" << s << "\n";
  os << "# macro expansions\n";
  for (int t = 1; t < kNumSubGoalTypes - 1; ++t) {
    const auto type = static_cast<SubGoalType>(t);
    const Obj x = type == SubGoalType::Put      ? Obj::Fridge
                  : type == SubGoalType::Toggle ? Obj::DeskLamp
                  : type == SubGoalType::Slice  ? Obj::Apple
                                                : Obj::Mug;
    os << "macro\t" << to_string(SubGoal{type, x}) << "\t";
    auto m = macro_actions({type, x});
    for (size_t i = 0; i < m.size(); ++i) os << (i ? " " : "") << to_string(m[i]);
    os << "\n";
  }
  os << "# vocabulary\n";
  for (const auto& w : vocabulary_words()) os << "word\t" << w << "\n";
}

}  // namespace hiertask
