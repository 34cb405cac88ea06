#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "hiertask/expert.hpp"

using namespace hiertask;

namespace {

// Walls everywhere except a 5x5 open block with top-left (3,3).
WorldState small_map() {
  WorldState s;
  for (int y = 0; y < kGridSize; ++y)
    for (int x = 0; x < kGridSize; ++x)
      s.grid.at({x, y}) = (x >= 3 && x < 8 && y >= 3 && y < 8) ? CellKind::Free : CellKind::Wall;
  s.agent = Pose{5, 5, Rot::N, 0};
  return s;
}

int add(WorldState& s, Obj cls, Cell c, std::optional<int> parent = std::nullopt) {
  ObjectInstance o;
  o.id = static_cast<int>(s.objects.size());
  o.cls = cls;
  o.cell = c;
  o.parent = parent;
  if (!is_movable(cls)) s.grid.at(c) = CellKind::Furniture;
  s.objects.push_back(o);
  return o.id;
}

TaskSpec task(TaskType type, Obj target, Obj receptacle, Obj aux = Obj::None) {
  TaskSpec t;
  t.type = type;
  t.target = target;
  t.receptacle = receptacle;
  t.aux = aux;
  return t;
}

// Exhaustive iterative-deepening search over {MoveAhead, RotateLeft, RotateRight}
// for the shortest sequence that ends facing an instance of `label`.
int exhaustive_shortest(const WorldState& s, Obj label, int maxDepth) {
  auto goal = [&](const WorldState& w) {
    for (const auto& o : w.objects)
      if (o.label() == label && (o.cell == facing_cell(w.agent) || o.cell == w.agent.cell())) return true;
    return false;
  };
  std::function<bool(const WorldState&, int)> dfs = [&](const WorldState& w, int depth) {
    if (goal(w)) return true;
    if (depth == 0) return false;
    for (NavType a : {NavType::MoveAhead, NavType::RotateLeft, NavType::RotateRight}) {
      auto [next, r] = step_nav(w, a);
      if (r.success && dfs(next, depth - 1)) return true;
    }
    return false;
  };
  for (int d = 0; d <= maxDepth; ++d)
    if (dfs(s, d)) return d;
  return -1;
}

}  // namespace

TEST(PlanNavigation, AlreadyFacing) {
  WorldState s = small_map();
  add(s, Obj::Fridge, {5, 4});
  EXPECT_EQ(plan_navigation(s, Obj::Fridge), (std::vector<NavType>{NavType::StopNav}));
}

TEST(PlanNavigation, TwoCellsAhead) {
  WorldState s = small_map();
  add(s, Obj::Fridge, {5, 3});
  EXPECT_EQ(plan_navigation(s, Obj::Fridge), (std::vector<NavType>{NavType::MoveAhead, NavType::StopNav}));
}

TEST(PlanNavigation, WalledOffIsUnreachable) {
  WorldState s = small_map();
  s.grid.at({9, 9}) = CellKind::Free;
  add(s, Obj::Fridge, {10, 9});
  EXPECT_THROW(plan_navigation(s, Obj::Fridge), Unreachable);
  EXPECT_THROW(plan_navigation(s, Obj::Microwave), Unreachable);
}

TEST(PlanNavigation, TieBreaksToLowestId) {
  WorldState s = small_map();
  const int a = add(s, Obj::CounterTop, {5, 3});
  const int b = add(s, Obj::CounterTop, {5, 7});
  (void)b;
  TaskSpec t;
  s.agent.rot = Rot::E;  // both one rotation + one move away
  const NavPlan p = plan_navigation_to(s, t, Obj::CounterTop);
  EXPECT_EQ(p.targetId, a);
}

TEST(PlanNavigation, MinimalAgainstExhaustiveSearch) {
  Rng rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    WorldState s = small_map();
    // a couple of obstacles and one target in the 5x5 block
    for (int k = 0; k < 3; ++k) {
      const Cell c{3 + static_cast<int>(rng.uniform_int(5)), 3 + static_cast<int>(rng.uniform_int(5))};
      if (s.grid.at(c) == CellKind::Free) add(s, Obj::Shelf, c);
    }
    const Cell t{3 + static_cast<int>(rng.uniform_int(5)), 3 + static_cast<int>(rng.uniform_int(5))};
    if (s.grid.at(t) != CellKind::Free) continue;
    add(s, Obj::Sink, t);
    std::vector<Cell> free;
    for (int y = 3; y < 8; ++y)
      for (int x = 3; x < 8; ++x)
        if (s.grid.at({x, y}) == CellKind::Free) free.push_back({x, y});
    if (free.empty()) continue;
    const Cell start = free[rng.uniform_int(free.size())];
    s.agent = Pose{start.x, start.y, static_cast<Rot>(rng.uniform_int(4)), 0};
    const int best = exhaustive_shortest(s, Obj::Sink, 12);
    if (best < 0) {
      EXPECT_THROW(plan_navigation(s, Obj::Sink), Unreachable);
      continue;
    }
    const auto plan = plan_navigation(s, Obj::Sink);
    EXPECT_EQ(static_cast<int>(plan.size()) - 1, best);
    WorldState w = s;
    for (NavType a : plan)
      if (a != NavType::StopNav) ASSERT_TRUE(apply_nav(w, a).success);
    bool facing = false;
    for (const auto& o : w.objects)
      if (o.cls == Obj::Sink && o.cell == facing_cell(w.agent)) facing = true;
    EXPECT_TRUE(facing);
  }
}

TEST(GenerateDemo, CleanSkeletonAndReplay) {
  const auto t = task(TaskType::CleanAndPlace, Obj::Mug, Obj::CoffeeMachine);
  Demonstration d;
  uint32_t placement = 0;
  for (;; ++placement) {
    try {
      d = generate_demo({1, placement}, t);
      break;
    } catch (const PlanFailure&) {
    }
  }
  std::vector<SubGoal> skeleton;
  for (const char* s : {"Goto(Mug)", "Pickup(Mug)", "Goto(Sink)", "Clean(Mug)", "Goto(CoffeeMachine)",
                        "Put(CoffeeMachine)", "End"})
    skeleton.push_back(parse_subgoal(s));
  EXPECT_EQ(d.subGoals, skeleton);
  EXPECT_FALSE(replay_demo(d).has_value());
  EXPECT_FALSE(d.task.goalDirective.empty());
  EXPECT_EQ(d.instructions.perSubGoal.size(), skeleton.size());
  int nav = 0, manip = 0;
  for (const auto& p : d.navPlans) nav += static_cast<int>(p.size()) - (p.empty() ? 0 : 1);
  for (const auto& p : d.manipPlans) manip += static_cast<int>(p.size()) - (p.empty() ? 0 : 1);
  EXPECT_EQ(d.expertLength, nav + manip);
  EXPECT_EQ(d.manipPlans[3].size(), 5u);
}

TEST(GenerateDemo, Deterministic) {
  const auto t = task(TaskType::HeatAndPlace, Obj::Egg, Obj::DiningTable);
  for (uint32_t p = 0; p < 5; ++p) {
    try {
      const Demonstration a = generate_demo({2, p}, t);
      const Demonstration b = generate_demo({2, p}, t);
      EXPECT_EQ(a.subGoals, b.subGoals);
      EXPECT_EQ(a.navPlans, b.navPlans);
      EXPECT_EQ(a.manipPlans, b.manipPlans);
      EXPECT_EQ(a.instructions.perSubGoal, b.instructions.perSubGoal);
      EXPECT_EQ(a.task, b.task);
    } catch (const PlanFailure&) {
    }
  }
}

TEST(GenerateDemo, ReplayDetectsCorruption) {
  const auto t = task(TaskType::PickAndPlace, Obj::Apple, Obj::Fridge);
  Demonstration d = generate_demo({4, 4}, t);
  ASSERT_FALSE(replay_demo(d).has_value());
  // Replace the Pickup target with an object that cannot be picked up.
  for (auto& plan : d.manipPlans)
    for (auto& m : plan)
      if (m.action.type == ManipType::Pickup) m.target = 0;
  const auto at = replay_demo(d);
  ASSERT_TRUE(at.has_value());
  EXPECT_EQ(*at, static_cast<int>(d.navPlans[0].size()) - 1);
}

// Every task type across 50 seeds: planning either fails cleanly or yields a
// demo that replays to success.
TEST(GenerateDemo, SoundAcrossTaskTypes) {
  Rng rng(21);
  for (int type = 0; type < kNumTaskTypes; ++type) {
    int ok = 0;
    for (uint32_t seed = 0; seed < 50; ++seed) {
      const TaskSpec t = sample_task(static_cast<TaskType>(type), rng, 0.4);
      try {
        const Demonstration d = generate_demo({seed % 40, seed * 7919u}, t);
        EXPECT_FALSE(replay_demo(d).has_value());
        EXPECT_EQ(d.expertLength, count_expert_length(d));
        for (size_t i = 0; i < d.subGoals.size(); ++i) {
          if (is_manipulation(d.subGoals[i].type)) {
            EXPECT_EQ(d.manipPlans[i].back().action.type, ManipType::StopManip);
            EXPECT_TRUE(d.navPlans[i].empty());
          } else if (d.subGoals[i].type == SubGoalType::Goto) {
            EXPECT_EQ(d.navPlans[i].back(), NavType::StopNav);
            EXPECT_TRUE(d.manipPlans[i].empty());
          }
        }
        ++ok;
      } catch (const PlanFailure&) {
      }
    }
    EXPECT_GE(ok, 45) << task_type_name(static_cast<TaskType>(type));
  }
}

TEST(Unroll, InstanceCountsAndLabels) {
  const auto t = task(TaskType::CleanAndPlace, Obj::Mug, Obj::CoffeeMachine);
  Demonstration d;
  for (uint32_t p = 0;; ++p) {
    try {
      d = generate_demo({5, p}, t);
      break;
    } catch (const PlanFailure&) {
    }
  }
  Rng rng(1);
  const auto inst = unroll_demo(d, 0, Split::Train, NoiseConfig::none(), rng);
  int sg = 0, nav = 0, cleanManip = 0;
  for (const auto& x : inst) {
    if (x.subProblem == SubProblem::SubGoalPlanning) {
      EXPECT_EQ(x.sgHistory.size(), static_cast<size_t>(sg));
      EXPECT_EQ(x.sgType, static_cast<int>(d.subGoals[sg].type));
      EXPECT_EQ(x.actType, -1);
      EXPECT_EQ(x.mask, -1);
      ++sg;
    }
    if (x.subProblem == SubProblem::Navigation) {
      ++nav;
      EXPECT_EQ(x.current.type, SubGoalType::Goto);
      EXPECT_LT(x.actType, kNumNavTypes);
      EXPECT_EQ(x.actArg, -1);
    }
    if (x.subProblem == SubProblem::Manipulation) {
      EXPECT_GE(x.actType, kNumNavTypes);
      if (x.current.type == SubGoalType::Clean) ++cleanManip;
      // noiseless: the target is always detected unless it is the StopManip step
      if (x.actType == act_index(ManipType::StopManip))
        EXPECT_EQ(x.mask, 0);
      else
        EXPECT_GT(x.mask, 0);
    }
  }
  EXPECT_EQ(sg, 7);
  EXPECT_EQ(cleanManip, 5);
  int navExpected = 0;
  for (const auto& p : d.navPlans) navExpected += static_cast<int>(p.size());
  EXPECT_EQ(nav, navExpected);
}

TEST(Dataset, SplitsDisjointAndDeterministic) {
  DatasetSpec spec;
  spec.nTrain = 30;
  spec.nSeenEval = 6;
  spec.nUnseenEval = 6;
  spec.nTrainLayouts = 5;
  spec.nUnseenLayouts = 3;
  spec.seed = 99;
  const Dataset a = make_dataset(spec);
  spec.jobs = 3;
  const Dataset b = make_dataset(spec);
  ASSERT_EQ(a.episodes.size(), 42u);
  std::set<uint32_t> trainLayouts, unseenLayouts;
  std::set<std::pair<uint32_t, uint32_t>> trainSeeds;
  for (const auto& e : a.episodes) {
    if (e.split == Split::Train) {
      trainLayouts.insert(e.demo.sceneSeed.layout);
      trainSeeds.insert({e.demo.sceneSeed.layout, e.demo.sceneSeed.placement});
    }
    if (e.split == Split::UnseenEval) unseenLayouts.insert(e.demo.sceneSeed.layout);
    if (e.split == Split::SeenEval) {
      EXPECT_LT(e.demo.sceneSeed.layout, 5u);
      EXPECT_FALSE(trainSeeds.count({e.demo.sceneSeed.layout, e.demo.sceneSeed.placement}));
    }
    EXPECT_FALSE(replay_demo(e.demo).has_value());
  }
  for (uint32_t l : unseenLayouts) EXPECT_FALSE(trainLayouts.count(l));
  ASSERT_EQ(a.instances.size(), b.instances.size());
  for (size_t i = 0; i < a.instances.size(); ++i) {
    EXPECT_EQ(a.instances[i].obs, b.instances[i].obs);
    EXPECT_EQ(a.instances[i].actType, b.instances[i].actType);
    EXPECT_EQ(a.instances[i].instruction, b.instances[i].instruction);
  }
}

TEST(Dataset, PickAndPlaceSubGoalCount) {
  DatasetSpec spec;
  spec.nTrain = 100;
  spec.nSeenEval = 1;
  spec.nUnseenEval = 1;
  spec.taskMix = {1, 0, 0, 0, 0, 0, 0};
  spec.pSliced = 0.0;
  const Dataset ds = make_dataset(spec);
  int sg = 0;
  for (const auto& x : ds.instances)
    if (x.split == Split::Train && x.subProblem == SubProblem::SubGoalPlanning) ++sg;
  EXPECT_EQ(sg, 100 * 5);
}
