#include "hiertask/evalbench.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace hiertask {

// ============================================================================
// Metrics
// ============================================================================

void MetricsReport::check() const {
  const std::array<double, 4> rates{successRate, goalConditionRate, pathWeightedSuccess, pathWeightedGoalCondition};
  for (double r : rates)
    if (!(r >= 0 && r <= 1)) throw std::logic_error("rate outside [0, 1]");
  if (pathWeightedSuccess > successRate || pathWeightedGoalCondition > goalConditionRate)
    throw std::logic_error("path-weighted rate exceeds the unweighted rate");
}

json MetricsReport::to_json() const {
  json j = {{"episodes", episodes},
            {"success_rate", successRate},
            {"goal_condition_rate", goalConditionRate},
            {"path_weighted_success", pathWeightedSuccess},
            {"path_weighted_goal_condition", pathWeightedGoalCondition},
            {"mean_agent_length", meanAgentLength},
            {"mean_expert_length", meanExpertLength},
            {"mean_backtracks", meanBacktracks}};
  json per = json::object();
  for (int t = 0; t < kNumTaskTypes; ++t) {
    const RateSums& s = perType[static_cast<size_t>(t)];
    if (!s.episodes) continue;
    per[std::string(task_type_name(static_cast<TaskType>(t)))] = {
        {"episodes", s.episodes},
        {"success_rate", s.rate(s.success)},
        {"goal_condition_rate", s.rate(s.goalCondition)},
        {"path_weighted_success", s.rate(s.weightedSuccess)},
        {"path_weighted_goal_condition", s.rate(s.weightedGoalCondition)}};
  }
  j["per_task_type"] = per;
  return j;
}

MetricsReport compute_metrics(const std::vector<ExecTrace>& traces, const std::vector<Episode>& episodes) {
  std::map<int, const Episode*> byId;
  for (const auto& e : episodes) byId[e.index] = &e;
  RateSums all;
  MetricsReport r;
  double agentLen = 0, expertLen = 0, backtracks = 0;
  for (const ExecTrace& t : traces) {
    const auto it = byId.find(t.episode);
    if (it == byId.end()) throw MetricsError("no demonstration for episode " + std::to_string(t.episode));
    const Demonstration& d = it->second->demo;
    if (!(d.sceneSeed == t.seed) || d.task.type != t.task.type)
      throw MetricsError("trace and demonstration disagree for episode " + std::to_string(t.episode));
    const double lStar = d.expertLength;
    const double lHat = t.agentLength;
    const double w = lStar / std::max(lStar, lHat);
    const double sr = t.goal.success ? 1.0 : 0.0;
    const double gc = t.goal.totalCount ? static_cast<double>(t.goal.satisfiedCount) / t.goal.totalCount : 0.0;
    for (RateSums* s : {&all, &r.perType[static_cast<size_t>(t.task.type)]}) {
      ++s->episodes;
      s->success += sr;
      s->goalCondition += gc;
      s->weightedSuccess += sr * w;
      s->weightedGoalCondition += gc * w;
    }
    agentLen += lHat;
    expertLen += lStar;
    backtracks += t.backtracks;
  }
  r.episodes = all.episodes;
  r.successRate = all.rate(all.success);
  r.goalConditionRate = all.rate(all.goalCondition);
  r.pathWeightedSuccess = all.rate(all.weightedSuccess);
  r.pathWeightedGoalCondition = all.rate(all.weightedGoalCondition);
  if (all.episodes) {
    r.meanAgentLength = agentLen / all.episodes;
    r.meanExpertLength = expertLen / all.episodes;
    r.meanBacktracks = backtracks / all.episodes;
  }
  r.check();
  return r;
}

std::vector<ExecTrace> run_episodes(const ModelParams<float>* model, const std::vector<Episode>& episodes,
                                    const ExecConfig& cfg, uint64_t runSeed, int jobs) {
  std::vector<ExecTrace> out(episodes.size());
  parallel_for(static_cast<int>(episodes.size()), jobs, [&](int i) {
    const Episode& e = episodes[static_cast<size_t>(i)];
    out[static_cast<size_t>(i)] = run_episode(model, e.demo, cfg, episode_seed(runSeed, e.index), e.index);
  });
  return out;
}

std::vector<ExecTrace> expert_traces(const std::vector<Episode>& episodes) {
  std::vector<ExecTrace> out;
  for (const auto& e : episodes) out.push_back(expert_trace(e.demo, e.index));
  return out;
}

// ============================================================================
// Ablations
// ============================================================================

std::vector<OracleMode> default_ladder() {
  return {OracleMode::parse(""),     OracleMode::parse("SG"),     OracleMode::parse("N"),
          OracleMode::parse("SG,N"), OracleMode::parse("SG,N,M"), OracleMode::parse("SG,N,GR")};
}

std::vector<LadderRow> run_oracle_ladder(const ModelParams<float>* model, const std::vector<Episode>& episodes,
                                         const ExecConfig& cfg, const std::vector<OracleMode>& modes,
                                         uint64_t runSeed, int jobs) {
  std::vector<LadderRow> out;
  for (const OracleMode& m : modes) {
    ExecConfig c = cfg;
    c.oracle = m;
    out.push_back({m, compute_metrics(run_episodes(model, episodes, c, runSeed, jobs), episodes)});
  }
  return out;
}

std::vector<SweepRow> sweep_backtracking(const ModelParams<float>* model, const std::vector<Episode>& episodes,
                                         const ExecConfig& cfg, const std::vector<int>& budgets, uint64_t runSeed,
                                         int jobs, bool removeInteractionLimit) {
  std::vector<SweepRow> out;
  for (int b : budgets) {
    ExecConfig c = cfg;
    c.maxBacktracks = b;
    if (removeInteractionLimit) c.interactionLimit = false;
    out.push_back({b, compute_metrics(run_episodes(model, episodes, c, runSeed, jobs), episodes)});
  }
  return out;
}

// ============================================================================
// Sub-goal evaluation
// ============================================================================

double SubgoalTable::rate(SubGoalType t) const {
  const auto i = static_cast<size_t>(t);
  return total[i] ? static_cast<double>(success[i]) / static_cast<double>(total[i]) : 0.0;
}

double SubgoalTable::goto_rate(size_t i) const {
  const auto n = total[static_cast<size_t>(SubGoalType::Goto)];
  return n ? static_cast<double>(gotoSuccess.at(i)) / static_cast<double>(n) : 0.0;
}

bool subgoal_effect(const WorldState& before, const WorldState& after, const SubGoal& sg) {
  auto held = [&](auto&& pred) {
    if (!after.holding) return false;
    const ObjectInstance& o = after.object(*after.holding);
    return o.label() == sg.arg && pred(o);
  };
  auto newly = [&](auto&& flag) {
    for (const auto& o : after.objects)
      if ((o.label() == sg.arg || o.cls == sg.arg) && flag(o) && !flag(before.object(o.id))) return true;
    return false;
  };
  switch (sg.type) {
    case SubGoalType::Pickup:
      return !before.holding && held([](const ObjectInstance&) { return true; });
    case SubGoalType::Put: {
      if (!before.holding || after.holding) return false;
      const auto parent = after.object(*before.holding).parent;
      return parent && after.object(*parent).cls == sg.arg;
    }
    case SubGoalType::Clean:
      return held([](const ObjectInstance& o) { return o.flags.isClean; });
    case SubGoalType::Heat:
      return held([](const ObjectInstance& o) { return o.flags.isHot; });
    case SubGoalType::Cool:
      return held([](const ObjectInstance& o) { return o.flags.isCold; });
    case SubGoalType::Slice:
      return newly([](const ObjectInstance& o) { return o.flags.isSliced; });
    case SubGoalType::Toggle:
      return newly([](const ObjectInstance& o) { return o.flags.isToggledOn; });
    default:
      return false;
  }
}

namespace {

// Executes the expert actions of sub-goals [0, upto).
void replay_prefix(WorldState& s, const Demonstration& d, size_t upto) {
  for (size_t i = 0; i < upto; ++i) {
    for (NavType a : d.navPlans[i])
      if (a != NavType::StopNav && !apply_nav(s, a).success) throw PlanFailure("expert prefix does not replay");
    for (const ManipStep& m : d.manipPlans[i])
      if (m.action.type != ManipType::StopManip && !apply_manip(s, m.action.type, m.target).success)
        throw PlanFailure("expert prefix does not replay");
  }
}

struct SubgoalCounts {
  std::array<int64_t, kNumSubGoalTypes> total{};
  std::array<int64_t, kNumSubGoalTypes> success{};
  std::vector<int64_t> gotoSuccess;
};

}  // namespace

SubgoalTable eval_subgoals(const ModelParams<float>* model, const std::vector<Episode>& episodes,
                           const ExecConfig& cfg, const std::vector<int>& retries, uint64_t runSeed, int jobs) {
  if (!std::is_sorted(retries.begin(), retries.end())) throw std::invalid_argument("retries must be ascending");
  const int maxRetries = retries.empty() ? 0 : retries.back();
  ExecConfig c = cfg;
  c.interactionLimit = false;
  c.maxSteps = std::max(c.maxSteps, 1000);

  std::vector<SubgoalCounts> parts(episodes.size());
  parallel_for(static_cast<int>(episodes.size()), jobs, [&](int ei) {
    const Episode& ep = episodes[static_cast<size_t>(ei)];
    const Demonstration& d = ep.demo;
    SubgoalCounts& out = parts[static_cast<size_t>(ei)];
    out.gotoSuccess.assign(retries.size(), 0);
    for (size_t i = 0; i < d.subGoals.size(); ++i) {
      const SubGoal& sg = d.subGoals[i];
      if (sg.type == SubGoalType::End) continue;
      if (sg.type == SubGoalType::Goto &&
          (i + 1 >= d.subGoals.size() || d.manipPlans[i + 1].empty() ||
           d.manipPlans[i + 1].front().action.type == ManipType::StopManip))
        continue;
      EpisodeRunner r(model, d, c, derive_seed(episode_seed(runSeed, ep.index), i), ep.index);
      replay_prefix(r.state(), d, i);
      const std::string instruction = c.instructionsAvailable && i < d.instructions.perSubGoal.size()
                                          ? d.instructions.perSubGoal[i]
                                          : d.task.goalDirective;
      ++out.total[static_cast<size_t>(sg.type)];
      if (sg.type == SubGoalType::Goto) {
        const ManipAction next = d.manipPlans[i + 1].front().action;
        auto reached = [&] {
          const auto target = resolve_manip_target(r.state(), d.task, next);
          return target && apply_manip(r.state(), next.type, *target).success;
        };
        r.navigation_loop(sg, instruction, false);
        int firstSuccess = -1;
        if (reached()) firstSuccess = 0;
        for (int attempt = 1; firstSuccess < 0 && attempt <= maxRetries && !r.terminated(); ++attempt) {
          r.blacklist().insert(r.pose_key());
          if (r.navigation_loop(sg, instruction, true) == NavOutcome::Terminated) break;
          if (reached()) firstSuccess = attempt;
        }
        for (size_t k = 0; k < retries.size(); ++k)
          if (firstSuccess >= 0 && firstSuccess <= retries[k]) ++out.gotoSuccess[k];
        if (firstSuccess == 0) ++out.success[static_cast<size_t>(sg.type)];
      } else {
        const WorldState before = r.state();
        std::vector<ManipAction> history;
        const ManipOutcome o = r.manipulation_loop(sg, instruction, history);
        if (o == ManipOutcome::Completed && subgoal_effect(before, r.state(), sg))
          ++out.success[static_cast<size_t>(sg.type)];
      }
    }
  });
  SubgoalTable t;
  t.retries = retries;
  t.gotoSuccess.assign(retries.size(), 0);
  for (const auto& p : parts) {
    for (size_t k = 0; k < t.total.size(); ++k) {
      t.total[k] += p.total[k];
      t.success[k] += p.success[k];
    }
    for (size_t k = 0; k < retries.size(); ++k) t.gotoSuccess[k] += p.gotoSuccess[k];
  }
  return t;
}

// ============================================================================
// Learning curves
// ============================================================================

std::vector<int> fraction_episodes(const std::vector<Episode>& episodes, double fraction, uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw std::invalid_argument("data fraction must lie in (0, 1]");
  std::vector<int> ids;
  for (const auto& e : episodes)
    if (e.split == Split::Train) ids.push_back(e.index);
  std::sort(ids.begin(), ids.end());
  Rng rng(derive_seed(seed, 0x6672616374696f6eull));
  rng.shuffle(ids.begin(), ids.end());
  const auto keep = std::max<size_t>(1, static_cast<size_t>(std::llround(fraction * static_cast<double>(ids.size()))));
  ids.resize(std::min(keep, ids.size()));
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<TrainInstance> fraction_subset(const std::vector<TrainInstance>& train,
                                           const std::vector<Episode>& episodes, double fraction, uint64_t seed) {
  if (fraction >= 1.0) return train;
  const auto ids = fraction_episodes(episodes, fraction, seed);
  std::vector<TrainInstance> out;
  for (const auto& x : train)
    if (std::binary_search(ids.begin(), ids.end(), x.episode)) out.push_back(x);
  return out;
}

std::vector<CurvePoint> eval_stepwise(const ModelParams<float>& model, const std::vector<TrainInstance>& data,
                                      InputConfig cfg, double fraction, int jobs) {
  const HeadAccuracy acc = evaluate_accuracy(model, data, cfg, jobs);
  static constexpr std::array<SubProblem, 6> owner = {SubProblem::SubGoalPlanning, SubProblem::SubGoalPlanning,
                                                      SubProblem::Navigation,      SubProblem::Manipulation,
                                                      SubProblem::Manipulation,    SubProblem::Manipulation};
  std::vector<CurvePoint> out;
  for (int h = 0; h < 6; ++h)
    out.push_back({owner[static_cast<size_t>(h)], h, cfg, fraction, acc.acc(h), acc.total[static_cast<size_t>(h)]});
  return out;
}

// ============================================================================
// Reports
// ============================================================================

std::string fmt(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string Table::csv() const {
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  line(columns);
  for (const auto& r : rows) line(r);
  return os.str();
}

std::string Table::text() const {
  std::vector<size_t> width(columns.size());
  for (size_t i = 0; i < columns.size(); ++i) width[i] = columns[i].size();
  for (const auto& r : rows)
    for (size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      os << (i ? "  " : "");
      if (i == 0) {
        os << cells[i] << std::string(width[i] - cells[i].size(), ' ');
      } else {
        os << std::string(width[i] - cells[i].size(), ' ') << cells[i];
      }
    }
    os << '\n';
  };
  line(columns);
  size_t total = 0;
  for (size_t w : width) total += w + 2;
  os << std::string(total > 2 ? total - 2 : 0, '-') << '\n';
  for (const auto& r : rows) line(r);
  return os.str();
}

Table metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows, const std::string& label) {
  Table t;
  t.columns = {label, "episodes", "SR", "GC", "PLW_SR", "PLW_GC", "agent_len", "expert_len", "backtracks"};
  for (const auto& [name, r] : rows)
    t.rows.push_back({name, std::to_string(r.episodes), fmt(r.successRate), fmt(r.goalConditionRate),
                      fmt(r.pathWeightedSuccess), fmt(r.pathWeightedGoalCondition), fmt(r.meanAgentLength, 2),
                      fmt(r.meanExpertLength, 2), fmt(r.meanBacktracks, 2)});
  return t;
}

Table task_type_table(const MetricsReport& r) {
  Table t;
  t.columns = {"task_type", "episodes", "SR", "GC", "PLW_SR", "PLW_GC"};
  for (int k = 0; k < kNumTaskTypes; ++k) {
    const RateSums& s = r.perType[static_cast<size_t>(k)];
    if (!s.episodes) continue;
    t.rows.push_back({std::string(task_type_name(static_cast<TaskType>(k))), std::to_string(s.episodes),
                      fmt(s.rate(s.success)), fmt(s.rate(s.goalCondition)), fmt(s.rate(s.weightedSuccess)),
                      fmt(s.rate(s.weightedGoalCondition))});
  }
  return t;
}

Table subgoal_table(const SubgoalTable& s) {
  Table t;
  t.columns = {"sub_goal", "count", "success"};
  for (int k = 0; k < kNumSubGoalTypes; ++k) {
    const auto type = static_cast<SubGoalType>(k);
    if (type == SubGoalType::End) continue;
    if (type == SubGoalType::Goto) {
      for (size_t i = 0; i < s.retries.size(); ++i)
        t.rows.push_back({"Goto@" + std::to_string(s.retries[i]), std::to_string(s.total[static_cast<size_t>(k)]),
                          fmt(s.goto_rate(i))});
      continue;
    }
    t.rows.push_back({std::string(subgoal_type_name(type)), std::to_string(s.total[static_cast<size_t>(k)]),
                      fmt(s.rate(type))});
  }
  return t;
}

Table curve_table(const std::vector<CurvePoint>& points) {
  Table t;
  t.columns = {"input_config", "fraction", "sub_problem", "head", "count", "accuracy"};
  for (const auto& p : points)
    t.rows.push_back({std::string(input_config_name(p.inputConfig)), fmt(p.dataFraction, 2),
                      std::string(subproblem_name(p.subProblem)), std::string(HeadAccuracy::name(p.head)),
                      std::to_string(p.count), fmt(p.accuracy)});
  return t;
}

void write_report(const std::string& dir, const std::string& name, const Table& table, const json& body,
                  const std::string& fingerprint) {
  std::filesystem::create_directories(dir);
  const std::string base = dir + "/" + name;
  {
    std::ofstream out(base + ".csv", std::ios::binary);
    out << "# fingerprint " << fingerprint << '\n' << table.csv();
  }
  {
    json j = body;
    j["fingerprint"] = fingerprint;
    j["report"] = name;
    std::ofstream out(base + ".json", std::ios::binary);
    out << j.dump(2) << '\n';
  }
  {
    std::ofstream out(base + ".txt", std::ios::binary);
    out << name << " (fingerprint " << fingerprint << ")\n\n" << table.text();
  }
}

}  // namespace hiertask
