#include "hiertask/expert.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <iostream>

namespace hiertask {

namespace {

constexpr std::array<const char*, 3> kSubProblemNames = {"SubGoalPlanning", "Navigation", "Manipulation"};
constexpr std::array<const char*, 3> kSplitNames = {"train", "seen", "unseen"};

// BFS node: cell and rotation. Horizon never matters for visibility, so the
// expert never emits LookUp/LookDown.
int node_of(const Pose& p) { return (p.y * kGridSize + p.x) * 4 + static_cast<int>(p.rot); }

Pose pose_of(int node, int horizon) {
  const int rot = node % 4;
  const int cell = node / 4;
  return Pose{cell % kGridSize, cell / kGridSize, static_cast<Rot>(rot), horizon};
}

std::optional<int> goal_target(const Pose& p, const std::vector<int>& candidates, const WorldState& s) {
  std::optional<int> best;
  for (int id : candidates) {
    const Cell c = s.object(id).cell;
    if ((c == facing_cell(p) || c == p.cell()) && (!best || id < *best)) best = id;
  }
  return best;
}

NavPlan bfs_to(const WorldState& s, const std::vector<int>& candidates, std::string_view what) {
  if (candidates.empty()) throw Unreachable("no instance of " + std::string(what));
  constexpr int kNodes = kGridSize * kGridSize * 4;
  constexpr std::array<NavType, 3> kMoves = {NavType::MoveAhead, NavType::RotateLeft, NavType::RotateRight};
  std::array<int, kNodes> parent;
  std::array<NavType, kNodes> via{};
  parent.fill(-2);
  const int start = node_of(s.agent);
  parent[start] = -1;
  std::vector<int> frontier{start};
  while (!frontier.empty()) {
    // Among all goal poses at the current depth take the lowest target id;
    // the first such pose in BFS order fixes the path.
    int bestNode = -1;
    int bestId = -1;
    for (int n : frontier) {
      if (auto id = goal_target(pose_of(n, s.agent.horizon), candidates, s); id && (bestId < 0 || *id < bestId)) {
        bestId = *id;
        bestNode = n;
      }
    }
    if (bestNode >= 0) {
      NavPlan plan;
      plan.targetId = bestId;
      for (int n = bestNode; parent[n] >= 0; n = parent[n]) plan.actions.push_back(via[n]);
      std::reverse(plan.actions.begin(), plan.actions.end());
      plan.actions.push_back(NavType::StopNav);
      return plan;
    }
    std::vector<int> next;
    for (int n : frontier) {
      for (NavType m : kMoves) {
        Pose p = pose_of(n, s.agent.horizon);
        if (m == NavType::MoveAhead) {
          const Cell c = facing_cell(p);
          if (!s.grid.walkable(c)) continue;
          p.x = c.x;
          p.y = c.y;
        } else {
          p.rot = m == NavType::RotateLeft ? rotate_left(p.rot) : rotate_right(p.rot);
        }
        const int k = node_of(p);
        if (parent[k] != -2) continue;
        parent[k] = n;
        via[k] = m;
        next.push_back(k);
      }
    }
    frontier = std::move(next);
  }
  throw Unreachable("no pose faces an instance of " + std::string(what));
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

void quantize(VisualObs& obs) {
  for (auto& d : obs.detections) {
    d.box = {round4(d.box.x1), round4(d.box.y1), round4(d.box.x2), round4(d.box.y2)};
    d.confidence = round4(d.confidence);
  }
}

int mask_label(const VisualObs& obs, int target) {
  for (size_t k = 0; k < obs.detections.size(); ++k)
    if (obs.detections[k].groundTruthRef == target) return static_cast<int>(k) + 1;
  return 0;
}

}  // namespace

std::string_view subproblem_name(SubProblem p) { return kSubProblemNames[static_cast<int>(p)]; }
std::string_view split_name(Split s) { return kSplitNames[static_cast<int>(s)]; }
std::optional<Split> split_from_name(std::string_view s) {
  for (size_t i = 0; i < kSplitNames.size(); ++i)
    if (s == kSplitNames[i]) return static_cast<Split>(i);
  return std::nullopt;
}

std::vector<int> candidate_instances(const WorldState& s, const TaskSpec& task, Obj label) {
  std::vector<int> out;
  for (const auto& o : s.objects) {
    if (o.label() != label || is_hidden(s, o.id)) continue;
    if (task.type == TaskType::PickTwoAndPlace && o.cls == task.target && o.parent &&
        s.object(*o.parent).cls == task.receptacle)
      continue;
    out.push_back(o.id);
  }
  return out;
}

NavPlan plan_navigation_to(const WorldState& s, const TaskSpec& task, Obj label) {
  return bfs_to(s, candidate_instances(s, task, label), obj_name(label));
}

std::vector<NavType> plan_navigation(const WorldState& s, Obj label) {
  std::vector<int> candidates;
  for (const auto& o : s.objects)
    if (o.label() == label && !is_hidden(s, o.id)) candidates.push_back(o.id);
  return bfs_to(s, candidates, obj_name(label)).actions;
}

std::optional<int> resolve_manip_target(const WorldState& s, const TaskSpec& task, const ManipAction& a) {
  if (a.type == ManipType::StopManip) return std::nullopt;
  for (int id : candidate_instances(s, task, a.arg)) {
    if (!is_visible(s, id) || !is_reachable(s, id)) continue;
    if (a.type == ManipType::Put) {
      if (s.holding == id || occupancy(s, id) >= affordances(s.object(id).cls).capacity) continue;
    }
    return id;  // ids ascend
  }
  return std::nullopt;
}

Demonstration generate_demo(SceneSeed seed, const TaskSpec& task) {
  Demonstration demo;
  demo.sceneSeed = seed;
  demo.task = task;
  WorldState s;
  try {
    s = reset(seed, task);
  } catch (const PlacementInfeasible& e) {
    throw PlanFailure(e.what());
  }
  demo.subGoals = decompose(task);
  const size_t n = demo.subGoals.size();
  demo.navPlans.resize(n);
  demo.manipPlans.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const SubGoal& sg = demo.subGoals[i];
    if (sg.type == SubGoalType::Goto) {
      try {
        demo.navPlans[i] = plan_navigation_to(s, task, sg.arg).actions;
      } catch (const Unreachable& e) {
        throw PlanFailure(e.what());
      }
      for (NavType a : demo.navPlans[i])
        if (a != NavType::StopNav && !apply_nav(s, a).success) throw PlanFailure("navigation plan blocked");
    } else if (is_manipulation(sg.type)) {
      for (const ManipAction& a : macro_actions(sg)) {
        if (a.type == ManipType::StopManip) {
          demo.manipPlans[i].push_back({a, -1});
          continue;
        }
        const auto target = resolve_manip_target(s, task, a);
        if (!target) throw PlanFailure("no target for " + to_string(a) + " at sub-goal " + to_string(sg));
        if (!apply_manip(s, a.type, *target).success) throw PlanFailure("expert action failed: " + to_string(a));
        demo.manipPlans[i].push_back({a, *target});
      }
    }
  }
  if (!check_goal(s, task).success) throw PlanFailure("expert plan does not satisfy the goal");

  Rng lang(derive_seed(seed.layout, seed.placement, 0x6c616e67ull));
  Verbalization v = verbalize(task, demo.subGoals, demo.navPlans, lang);
  demo.task.goalDirective = v.goalDirective;
  demo.instructions = v.instructions;
  demo.expertLength = count_expert_length(demo);
  if (replay_demo(demo)) throw PlanFailure("demonstration does not replay");
  return demo;
}

std::optional<int> replay_demo(const Demonstration& demo) {
  WorldState s = reset(demo.sceneSeed, demo.task);
  int step = 0;
  for (size_t i = 0; i < demo.subGoals.size(); ++i) {
    for (NavType a : demo.navPlans[i]) {
      if (a == NavType::StopNav) continue;
      if (!apply_nav(s, a).success) return step;
      ++step;
    }
    for (const ManipStep& m : demo.manipPlans[i]) {
      if (m.action.type == ManipType::StopManip) continue;
      if (!apply_manip(s, m.action.type, m.target).success) return step;
      ++step;
    }
  }
  if (!check_goal(s, demo.task).success) return step;
  return std::nullopt;
}

int count_expert_length(const Demonstration& demo) {
  int n = 0;
  for (const auto& plan : demo.navPlans)
    n += static_cast<int>(std::count_if(plan.begin(), plan.end(), [](NavType a) { return a != NavType::StopNav; }));
  for (const auto& plan : demo.manipPlans)
    n += static_cast<int>(std::count_if(plan.begin(), plan.end(),
                                        [](const ManipStep& m) { return m.action.type != ManipType::StopManip; }));
  return n;
}

std::vector<TrainInstance> unroll_demo(const Demonstration& demo, int episode, Split split, const NoiseConfig& noise,
                                       Rng& rng) {
  std::vector<TrainInstance> out;
  WorldState s = reset(demo.sceneSeed, demo.task);
  auto base = [&](SubProblem p) {
    TrainInstance t;
    t.subProblem = p;
    t.split = split;
    t.episode = episode;
    t.goal = demo.task.goalDirective;
    t.obs = observe(s, noise, rng);
    quantize(t.obs);
    t.rot = s.agent.rot;
    t.horizon = s.agent.horizon;
    return t;
  };
  for (size_t i = 0; i < demo.subGoals.size(); ++i) {
    const SubGoal& sg = demo.subGoals[i];
    TrainInstance t = base(SubProblem::SubGoalPlanning);
    t.sgHistory.assign(demo.subGoals.begin(), demo.subGoals.begin() + static_cast<long>(i));
    t.sgType = static_cast<int>(sg.type);
    t.sgArg = index(sg.arg);
    out.push_back(std::move(t));

    const std::string& instr = demo.instructions.perSubGoal.at(i);
    for (size_t j = 0; j < demo.navPlans[i].size(); ++j) {
      const NavType a = demo.navPlans[i][j];
      TrainInstance n = base(SubProblem::Navigation);
      n.instruction = instr;
      n.current = sg;
      n.navHistory.assign(demo.navPlans[i].begin(), demo.navPlans[i].begin() + static_cast<long>(j));
      n.actType = act_index(a);
      out.push_back(std::move(n));
      if (a != NavType::StopNav) apply_nav(s, a);
    }
    for (size_t j = 0; j < demo.manipPlans[i].size(); ++j) {
      const ManipStep& m = demo.manipPlans[i][j];
      TrainInstance n = base(SubProblem::Manipulation);
      n.instruction = instr;
      n.current = sg;
      for (size_t k = 0; k < j; ++k) n.manipHistory.push_back(demo.manipPlans[i][k].action);
      n.actType = act_index(m.action.type);
      n.actArg = index(m.action.arg);
      n.mask = m.action.type == ManipType::StopManip ? 0 : mask_label(n.obs, m.target);
      out.push_back(std::move(n));
      if (m.action.type != ManipType::StopManip) apply_manip(s, m.action.type, m.target);
    }
  }
  return out;
}

Dataset make_dataset(const DatasetSpec& spec) {
  if (spec.nTrain < 1 || spec.nSeenEval < 1 || spec.nUnseenEval < 1)
    throw std::invalid_argument("dataset split sizes must be >= 1");
  if (spec.nTrainLayouts < 1 || spec.nUnseenLayouts < 1) throw std::invalid_argument("layout counts must be >= 1");
  spec.noise.validate();
  double mixTotal = 0;
  for (double w : spec.taskMix) {
    if (w < 0) throw std::invalid_argument("task mix weights must be non-negative");
    mixTotal += w;
  }
  if (mixTotal <= 0) throw std::invalid_argument("task mix is empty");

  struct Slot {
    Split split;
    int indexInSplit;
  };
  std::vector<Slot> slots;
  for (int i = 0; i < spec.nTrain; ++i) slots.push_back({Split::Train, i});
  for (int i = 0; i < spec.nSeenEval; ++i) slots.push_back({Split::SeenEval, i});
  for (int i = 0; i < spec.nUnseenEval; ++i) slots.push_back({Split::UnseenEval, i});
  const int total = static_cast<int>(slots.size());

  std::vector<Episode> episodes(static_cast<size_t>(total));
  std::vector<std::vector<TrainInstance>> instances(static_cast<size_t>(total));
  std::vector<int> retries(static_cast<size_t>(total), 0);

  parallel_for(total, spec.jobs, [&](int e) {
    const Slot slot = slots[static_cast<size_t>(e)];
    const uint64_t splitSeed = derive_seed(spec.seed, static_cast<uint64_t>(slot.split) + 1);
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000) throw std::runtime_error("could not generate a demonstration after 1000 attempts");
      Rng rng(derive_seed(splitSeed, static_cast<uint64_t>(slot.indexInSplit), static_cast<uint64_t>(attempt)));
      double u = rng.uniform01() * mixTotal;
      int type = 0;
      while (type < kNumTaskTypes - 1 && (u -= spec.taskMix[type]) >= 0) ++type;
      while (spec.taskMix[type] <= 0) --type;
      const TaskSpec task = sample_task(static_cast<TaskType>(type), rng, spec.pSliced);
      SceneSeed seed;
      const uint32_t placement = static_cast<uint32_t>(rng.next() & 0x3fffffffu);
      switch (slot.split) {
        case Split::Train:
          seed = {static_cast<uint32_t>(rng.uniform_int(static_cast<uint64_t>(spec.nTrainLayouts))), placement};
          break;
        case Split::SeenEval:
          seed = {static_cast<uint32_t>(rng.uniform_int(static_cast<uint64_t>(spec.nTrainLayouts))),
                  kSeenEvalPlacementBase | placement};
          break;
        case Split::UnseenEval:
          seed = {kUnseenLayoutBase + static_cast<uint32_t>(rng.uniform_int(static_cast<uint64_t>(spec.nUnseenLayouts))),
                  placement};
          break;
      }
      try {
        Episode ep{e, slot.split, generate_demo(seed, task)};
        Rng obsRng(derive_seed(splitSeed, static_cast<uint64_t>(slot.indexInSplit), 0x6f6273ull));
        instances[static_cast<size_t>(e)] = unroll_demo(ep.demo, e, slot.split, spec.noise, obsRng);
        episodes[static_cast<size_t>(e)] = std::move(ep);
        retries[static_cast<size_t>(e)] = attempt;
        return;
      } catch (const PlanFailure&) {
      }
    }
  });

  Dataset ds;
  ds.episodes = std::move(episodes);
  for (int e = 0; e < total; ++e) {
    auto& v = instances[static_cast<size_t>(e)];
    ds.instances.insert(ds.instances.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
    ds.resampled += retries[static_cast<size_t>(e)];
  }
  for (const auto& ep : ds.episodes) {
    const bool unseenLayout = ep.demo.sceneSeed.layout >= kUnseenLayoutBase;
    if (unseenLayout != (ep.split == Split::UnseenEval)) throw std::logic_error("layout split leakage");
  }
  return ds;
}

}  // namespace hiertask
