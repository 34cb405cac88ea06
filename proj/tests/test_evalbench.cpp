#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hiertask/evalbench.hpp"

using namespace hiertask;

namespace {

const Dataset& tiny_dataset() {
  static const Dataset ds = [] {
    DatasetSpec spec;
    spec.nTrain = 20;
    spec.nSeenEval = 4;
    spec.nUnseenEval = 4;
    spec.seed = 17;
    return make_dataset(spec);
  }();
  return ds;
}

ModelParams<float> random_model(uint64_t seed = 3) {
  Hyperparams hp;
  hp.d = 16;
  hp.heads = 2;
  hp.ffn = 32;
  hp.layers = 1;
  return init_params<float>(hp, Vocab::get().size(), seed);
}

ExecTrace synthetic(const Episode& e, int agentLength, int satisfied, int total) {
  ExecTrace t;
  t.episode = e.index;
  t.seed = e.demo.sceneSeed;
  t.task = e.demo.task;
  t.agentLength = agentLength;
  t.goal.satisfiedCount = satisfied;
  t.goal.totalCount = total;
  t.goal.success = satisfied == total;
  return t;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Metrics, ExpertReplayIsPerfect) {
  const auto& eps = tiny_dataset().episodes;
  const MetricsReport r = compute_metrics(expert_traces(eps), eps);
  EXPECT_EQ(r.episodes, static_cast<int>(eps.size()));
  EXPECT_EQ(r.successRate, 1.0);
  EXPECT_EQ(r.goalConditionRate, 1.0);
  EXPECT_EQ(r.pathWeightedSuccess, 1.0);
  EXPECT_EQ(r.pathWeightedGoalCondition, 1.0);
  EXPECT_EQ(r.meanAgentLength, r.meanExpertLength);
}

TEST(Metrics, PathWeighting) {
  const Episode& e = tiny_dataset().episodes.front();
  const int l = e.demo.expertLength;
  // twice the expert length halves the credit
  MetricsReport r = compute_metrics({synthetic(e, 2 * l, 2, 2)}, {e});
  EXPECT_DOUBLE_EQ(r.successRate, 1.0);
  EXPECT_DOUBLE_EQ(r.pathWeightedSuccess, 0.5);
  EXPECT_DOUBLE_EQ(r.pathWeightedGoalCondition, 0.5);
  // shorter than the expert is not rewarded beyond 1
  r = compute_metrics({synthetic(e, l / 2, 2, 2)}, {e});
  EXPECT_DOUBLE_EQ(r.pathWeightedSuccess, 1.0);
  // partial goal conditions
  r = compute_metrics({synthetic(e, 4 * l, 1, 4)}, {e});
  EXPECT_DOUBLE_EQ(r.successRate, 0.0);
  EXPECT_DOUBLE_EQ(r.goalConditionRate, 0.25);
  EXPECT_DOUBLE_EQ(r.pathWeightedGoalCondition, 0.0625);
  EXPECT_DOUBLE_EQ(r.pathWeightedSuccess, 0.0);
}

TEST(Metrics, AveragesOverEpisodesAndTypes) {
  const auto& eps = tiny_dataset().episodes;
  std::vector<ExecTrace> traces;
  for (size_t i = 0; i < eps.size(); ++i)
    traces.push_back(synthetic(eps[i], eps[i].demo.expertLength, i % 2 ? 0 : 1, 1));
  const MetricsReport r = compute_metrics(traces, eps);
  int succ = 0;
  for (size_t i = 0; i < eps.size(); i += 2) ++succ;
  EXPECT_DOUBLE_EQ(r.successRate, static_cast<double>(succ) / static_cast<double>(eps.size()));
  int typed = 0;
  for (const auto& s : r.perType) typed += s.episodes;
  EXPECT_EQ(typed, r.episodes);
  const json j = r.to_json();
  EXPECT_EQ(j.at("episodes"), r.episodes);
  EXPECT_TRUE(j.at("per_task_type").is_object());
}

TEST(Metrics, MismatchedEpisodeThrows) {
  const auto& eps = tiny_dataset().episodes;
  ExecTrace t = synthetic(eps[0], 5, 1, 1);
  t.episode = 999999;
  EXPECT_THROW(compute_metrics({t}, eps), MetricsError);
  t = synthetic(eps[0], 5, 1, 1);
  t.seed = eps[1].demo.sceneSeed;
  if (!(t.seed == eps[0].demo.sceneSeed)) EXPECT_THROW(compute_metrics({t}, eps), MetricsError);
}

TEST(Metrics, CheckRejectsInconsistentReport) {
  MetricsReport r;
  r.successRate = 0.4;
  r.pathWeightedSuccess = 0.5;
  EXPECT_THROW(r.check(), std::logic_error);
  r.pathWeightedSuccess = 0.3;
  EXPECT_NO_THROW(r.check());
  r.goalConditionRate = 1.5;
  EXPECT_THROW(r.check(), std::logic_error);
}

TEST(Metrics, EmptyIsZero) {
  const MetricsReport r = compute_metrics({}, {});
  EXPECT_EQ(r.episodes, 0);
  EXPECT_EQ(r.successRate, 0.0);
}

TEST(RunEpisodes, JobsDoNotChangeResults) {
  const ModelParams<float> m = random_model();
  const auto& eps = tiny_dataset().episodes;
  const ExecConfig c;
  const auto a = run_episodes(&m, eps, c, 42, 1);
  const auto b = run_episodes(&m, eps, c, 42, 3);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    std::ostringstream x, y;
    write_trace(x, a[i]);
    write_trace(y, b[i]);
    EXPECT_EQ(x.str(), y.str());
  }
  EXPECT_EQ(compute_metrics(a, eps).to_json().dump(), compute_metrics(b, eps).to_json().dump());
}

TEST(Ablations, LadderAndSweepShapes) {
  const ModelParams<float> m = random_model();
  const auto& eps = tiny_dataset().episodes;
  ExecConfig c;
  const auto ladder = run_oracle_ladder(&m, eps, c, default_ladder(), 1);
  ASSERT_EQ(ladder.size(), 6u);
  EXPECT_EQ(ladder.front().mode.name(), "none");
  EXPECT_EQ(ladder.back().mode.name(), "SG,N,GR");
  const auto sweep = sweep_backtracking(&m, eps, c, {0, 2}, 1);
  ASSERT_EQ(sweep.size(), 2u);
  for (const auto& s : sweep) EXPECT_GE(s.gap(), 0.0);
  // budget 0 equals a plain run with backtracking disabled
  ExecConfig off = c;
  off.maxBacktracks = 0;
  off.interactionLimit = false;
  EXPECT_EQ(sweep[0].report.to_json().dump(), compute_metrics(run_episodes(&m, eps, off, 1), eps).to_json().dump());
}

TEST(Subgoals, EffectsOfExpertSteps) {
  int checked = 0;
  for (const auto& e : tiny_dataset().episodes) {
    const Demonstration& d = e.demo;
    WorldState s = reset(d.sceneSeed, d.task);
    for (size_t i = 0; i < d.subGoals.size(); ++i) {
      for (NavType a : d.navPlans[i])
        if (a != NavType::StopNav) apply_nav(s, a);
      const WorldState before = s;
      for (const auto& m : d.manipPlans[i])
        if (m.action.type != ManipType::StopManip) apply_manip(s, m.action.type, m.target);
      const SubGoal& sg = d.subGoals[i];
      if (sg.type == SubGoalType::Goto || sg.type == SubGoalType::End) continue;
      EXPECT_TRUE(subgoal_effect(before, s, sg)) << to_string(sg);
      EXPECT_FALSE(subgoal_effect(before, before, sg)) << to_string(sg);
      ++checked;
    }
  }
  EXPECT_GT(checked, 20);
}

TEST(Subgoals, OracleExecutionSucceedsEverywhere) {
  ExecConfig c;
  c.oracle = OracleMode::parse("SG,N,M,GR");
  c.noise = NoiseConfig::none();
  const auto t = eval_subgoals(nullptr, tiny_dataset().episodes, c, {0, 1, 2, 4, 8}, 1);
  for (int k = 0; k < kNumSubGoalTypes; ++k) {
    const auto type = static_cast<SubGoalType>(k);
    if (type == SubGoalType::End || !t.total[static_cast<size_t>(k)]) continue;
    EXPECT_EQ(t.rate(type), 1.0) << subgoal_type_name(type);
  }
  for (size_t i = 0; i < t.retries.size(); ++i) EXPECT_EQ(t.goto_rate(i), 1.0);
  EXPECT_GT(t.total[static_cast<size_t>(SubGoalType::Goto)], 0);
}

TEST(Subgoals, GotoCurveIsMonotone) {
  const ModelParams<float> m = random_model(5);
  const auto t = eval_subgoals(&m, tiny_dataset().episodes, ExecConfig{}, {0, 1, 2, 4, 8}, 3, 2);
  for (size_t i = 1; i < t.retries.size(); ++i) EXPECT_GE(t.gotoSuccess[i], t.gotoSuccess[i - 1]);
  EXPECT_EQ(t.gotoSuccess[0], t.success[static_cast<size_t>(SubGoalType::Goto)]);
  EXPECT_THROW(eval_subgoals(&m, tiny_dataset().episodes, ExecConfig{}, {2, 1}, 3), std::invalid_argument);
}

TEST(Curves, FractionsAreNested) {
  const auto& eps = tiny_dataset().episodes;
  std::vector<int> prev;
  for (double f : kCurveFractions) {
    const auto ids = fraction_episodes(eps, f, 7);
    EXPECT_FALSE(ids.empty());
    for (int id : prev) EXPECT_TRUE(std::binary_search(ids.begin(), ids.end(), id));
    prev = ids;
  }
  EXPECT_EQ(prev.size(), 20u);
  EXPECT_EQ(fraction_episodes(eps, 0.5, 7).size(), 10u);
  EXPECT_EQ(fraction_episodes(eps, 0.5, 7), fraction_episodes(eps, 0.5, 7));
  EXPECT_THROW(fraction_episodes(eps, 0.0, 7), std::invalid_argument);
  EXPECT_THROW(fraction_episodes(eps, 1.5, 7), std::invalid_argument);
}

TEST(Curves, SubsetKeepsWholeEpisodes) {
  const auto& ds = tiny_dataset();
  std::vector<TrainInstance> train;
  for (const auto& x : ds.instances)
    if (x.split == Split::Train) train.push_back(x);
  const auto ids = fraction_episodes(ds.episodes, 0.2, 7);
  const auto sub = fraction_subset(train, ds.episodes, 0.2, 7);
  size_t expected = 0;
  for (const auto& x : train) expected += std::binary_search(ids.begin(), ids.end(), x.episode);
  EXPECT_EQ(sub.size(), expected);
  EXPECT_EQ(fraction_subset(train, ds.episodes, 1.0, 7).size(), train.size());
}

TEST(Curves, StepwisePointsPerHead) {
  const auto& ds = tiny_dataset();
  std::vector<TrainInstance> val;
  for (const auto& x : ds.instances)
    if (x.split == Split::SeenEval) val.push_back(x);
  const auto pts = eval_stepwise(random_model(), val, InputConfig::Full, 0.5);
  ASSERT_EQ(pts.size(), 6u);
  for (const auto& p : pts) {
    EXPECT_GE(p.accuracy, 0.0);
    EXPECT_LE(p.accuracy, 1.0);
    EXPECT_GT(p.count, 0);
    EXPECT_EQ(p.dataFraction, 0.5);
  }
  EXPECT_EQ(pts[HeadAccuracy::NavType_].subProblem, SubProblem::Navigation);
  EXPECT_EQ(pts[HeadAccuracy::ManipType_].subProblem, SubProblem::Manipulation);
}

TEST(Reports, TableFormats) {
  Table t;
  t.columns = {"name", "value"};
  t.rows = {{"a", "1"}, {"long", "22"}};
  EXPECT_EQ(t.csv(), "name,value\na,1\nlong,22\n");
  EXPECT_EQ(t.text(), "name  value\n-----------\na         1\nlong     22\n");
  EXPECT_EQ(fmt(0.5), "0.5000");
  EXPECT_EQ(fmt(1.0 / 3.0, 2), "0.33");
}

TEST(Reports, WriteCarriesFingerprint) {
  const auto& eps = tiny_dataset().episodes;
  const MetricsReport r = compute_metrics(expert_traces(eps), eps);
  const std::string dir = (std::filesystem::temp_directory_path() / "hiertask_reports").string();
  std::filesystem::remove_all(dir);
  write_report(dir, "expert", metrics_table({{"expert", r}}, "run"), r.to_json(), "abc123");
  for (const char* ext : {".csv", ".json", ".txt"}) {
    const std::string s = slurp(dir + "/expert" + ext);
    EXPECT_NE(s.find("abc123"), std::string::npos) << ext;
  }
  const json j = json::parse(slurp(dir + "/expert.json"));
  EXPECT_EQ(j.at("success_rate"), 1.0);
  EXPECT_EQ(task_type_table(r).rows.size() > 0, true);
}
