#include <gtest/gtest.h>

#include <sstream>

#include "hiertask/evalbench.hpp"

using namespace hiertask;

namespace {

const Dataset& tiny_dataset() {
  static const Dataset ds = [] {
    DatasetSpec spec;
    spec.nTrain = 8;
    spec.nSeenEval = 2;
    spec.nUnseenEval = 2;
    spec.seed = 5;
    return make_dataset(spec);
  }();
  return ds;
}

Hyperparams small_hp() {
  Hyperparams hp;
  hp.d = 16;
  hp.heads = 2;
  hp.ffn = 32;
  hp.layers = 1;
  return hp;
}

ModelParams<float> random_model(uint64_t seed = 3) {
  return init_params<float>(small_hp(), Vocab::get().size(), seed);
}

// Action-type logits equal `bias` regardless of the input.
ModelParams<float> biased_model(const std::vector<std::pair<int, float>>& bias, uint64_t seed = 3) {
  ModelParams<float> m = random_model(seed);
  m.block(m.layout.actTypeW).setZero();
  m.block(m.layout.actTypeB).setZero();
  for (auto [i, b] : bias) m.block(m.layout.actTypeB)(i, 0) = b;
  return m;
}

int count_events(const ExecTrace& t, EventKind k) {
  int n = 0;
  for (const auto& e : t.events) n += e.kind == k;
  return n;
}

const Episode& first_with_goto_then_manip() {
  for (const auto& e : tiny_dataset().episodes)
    if (e.demo.subGoals.size() >= 2 && e.demo.subGoals[0].type == SubGoalType::Goto &&
        !e.demo.navPlans[0].empty() && e.demo.navPlans[0].front() != NavType::StopNav)
      return e;
  throw std::logic_error("no suitable episode");
}

}  // namespace

TEST(OracleMode, ParseAndName) {
  EXPECT_EQ(OracleMode::parse("").name(), "none");
  EXPECT_EQ(OracleMode::parse("none").name(), "none");
  EXPECT_EQ(OracleMode::parse("gr+sg, n").name(), "SG,N,GR");
  const OracleMode all = OracleMode::parse("SG,N,M,GR");
  EXPECT_TRUE(all.covers(OracleMode::parse("N,GR")));
  EXPECT_FALSE(OracleMode::parse("N").covers(all));
  EXPECT_THROW(OracleMode::parse("SG,X"), std::invalid_argument);
}

TEST(ExecConfig, Validate) {
  ExecConfig c;
  EXPECT_NO_THROW(c.validate());
  c.retryTemperature = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ExecConfig{};
  c.maxSteps = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ExecConfig{};
  c.maxBacktracks = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Executor, ModelRequiredUnlessAllOracles) {
  const auto& d = tiny_dataset().episodes.front().demo;
  ExecConfig c;
  c.oracle = OracleMode::parse("SG,N");
  EXPECT_THROW(run_episode(nullptr, d, c, 1), std::invalid_argument);
  c.oracle = OracleMode::parse("SG,N,M,GR");
  EXPECT_NO_THROW(run_episode(nullptr, d, c, 1));
}

TEST(Executor, FullOracleNoiselessMatchesExpert) {
  ExecConfig c;
  c.oracle = OracleMode::parse("SG,N,M,GR");
  c.noise = NoiseConfig::none();
  for (const auto& e : tiny_dataset().episodes) {
    const ExecTrace t = run_episode(nullptr, e.demo, c, 9, e.index);
    EXPECT_TRUE(t.goal.success) << e.index;
    EXPECT_EQ(t.terminal, TerminalReason::PredictedEnd);
    EXPECT_EQ(t.backtracks, 0);
    EXPECT_EQ(t.agentLength, e.demo.expertLength);
    EXPECT_FALSE(replay_trace(t).has_value());
  }
}

TEST(Executor, BudgetZeroStopsAtFirstFailure) {
  const ModelParams<float> m = random_model();
  ExecConfig c;
  c.oracle = OracleMode::parse("SG,N");
  c.maxBacktracks = 0;
  int stopped = 0;
  for (const auto& e : tiny_dataset().episodes) {
    const ExecTrace t = run_episode(&m, e.demo, c, 2, e.index);
    EXPECT_EQ(t.backtracks, 0);
    EXPECT_EQ(count_events(t, EventKind::Backtrack), 0);
    if (t.terminal == TerminalReason::BacktrackBudget) {
      ++stopped;
      const ExecEvent& last = t.events.back();
      EXPECT_TRUE(last.kind == EventKind::Reject || (last.kind == EventKind::Manip && !last.result.success));
    }
  }
  EXPECT_GT(stopped, 0);
}

TEST(Executor, BudgetsAreRespected) {
  const ModelParams<float> m = random_model(8);
  for (int budget : {1, 3}) {
    for (int maxSteps : {20, 200}) {
      ExecConfig c;
      c.maxBacktracks = budget;
      c.maxSteps = maxSteps;
      for (const auto& e : tiny_dataset().episodes) {
        const ExecTrace t = run_episode(&m, e.demo, c, 4, e.index);
        EXPECT_LE(t.backtracks, budget);
        EXPECT_EQ(count_events(t, EventKind::Backtrack), t.backtracks);
        EXPECT_LE(t.agentLength, maxSteps);
        EXPECT_LE(t.failedInteractions, c.maxFailedInteractions);
        if (t.terminal == TerminalReason::BacktrackBudget) EXPECT_EQ(t.backtracks, budget);
        if (t.terminal == TerminalReason::FailureLimit) EXPECT_EQ(t.failedInteractions, c.maxFailedInteractions);
        if (t.terminal == TerminalReason::StepLimit && t.agentLength < maxSteps)
          EXPECT_GE(count_events(t, EventKind::SubGoal), c.maxSubGoals);
      }
    }
  }
}

TEST(Executor, StepLimitIsExact) {
  ExecConfig c;
  c.oracle = OracleMode::parse("SG,N,M,GR");
  c.noise = NoiseConfig::none();
  c.maxSteps = 3;
  const auto& e = tiny_dataset().episodes.front();
  ASSERT_GT(e.demo.expertLength, 3);
  const ExecTrace t = run_episode(nullptr, e.demo, c, 1, e.index);
  EXPECT_EQ(t.terminal, TerminalReason::StepLimit);
  EXPECT_EQ(t.agentLength, 3);
  EXPECT_FALSE(t.goal.success);
}

TEST(Executor, FailureLimitIsExact) {
  // always ToggleOn the task target: a pickupable object cannot be toggled
  const auto& e = tiny_dataset().episodes.front();
  ModelParams<float> m = biased_model({{act_index(ManipType::ToggleOn), 20.f}});
  m.block(m.layout.actArgW).setZero();
  m.block(m.layout.actArgB).setZero();
  m.block(m.layout.actArgB)(index(e.demo.task.target), 0) = 20.f;
  ExecConfig c;
  c.oracle = OracleMode::parse("SG,N,GR");
  c.maxFailedInteractions = 3;
  const ExecTrace t = run_episode(&m, e.demo, c, 1, e.index);
  EXPECT_EQ(t.terminal, TerminalReason::FailureLimit);
  EXPECT_EQ(t.failedInteractions, 3);
  EXPECT_EQ(t.backtracks, 2);

  c.interactionLimit = false;
  const ExecTrace u = run_episode(&m, e.demo, c, 1, e.index);
  EXPECT_EQ(u.terminal, TerminalReason::BacktrackBudget);
  EXPECT_EQ(u.backtracks, c.maxBacktracks);
}

TEST(Executor, ObstructionGuardMasksRepeatedBlockedMove) {
  const ModelParams<float> m =
      biased_model({{act_index(NavType::MoveAhead), 10.f}, {act_index(NavType::RotateLeft), 5.f}});
  ExecConfig c;
  c.oracle = OracleMode::parse("SG");
  c.noise = NoiseConfig::none();
  c.interactionLimit = false;
  int blocked = 0;
  for (const auto& e : tiny_dataset().episodes) {
    EpisodeRunner r(&m, e.demo, c, 1, e.index);
    r.navigation_loop(SubGoal{SubGoalType::Goto, e.demo.task.target}, e.demo.task.goalDirective, false);
    const auto& ev = r.trace().events;
    for (size_t i = 0; i < ev.size(); ++i) {
      if (ev[i].kind != EventKind::Nav || ev[i].result.failureReason != FailureReason::Blocked) continue;
      ++blocked;
      if (i + 1 == ev.size()) continue;  // step cap reached
      EXPECT_EQ(ev[i + 1].nav, NavType::RotateLeft);
    }
  }
  EXPECT_GT(blocked, 0);
}

TEST(Executor, RetryPrefixDiffersFromArgmax) {
  const ModelParams<float> m = random_model(21);
  ExecConfig c;
  c.oracle = OracleMode::parse("SG");
  c.noise = NoiseConfig::none();
  c.interactionLimit = false;
  const auto& e = first_with_goto_then_manip();
  const SubGoal sg = e.demo.subGoals[0];
  auto actions = [&](bool retry, uint64_t seed) {
    EpisodeRunner r(&m, e.demo, c, seed, e.index);
    r.navigation_loop(sg, e.demo.instructions.perSubGoal[0], retry);
    std::vector<NavType> out;
    for (const auto& ev : r.trace().events) out.push_back(ev.nav);
    return out;
  };
  const auto greedy = actions(false, 0);
  EXPECT_EQ(greedy, actions(false, 1));
  int differ = 0;
  const int n = 200;
  for (int s = 0; s < n; ++s) differ += actions(true, static_cast<uint64_t>(s) + 100) != greedy;
  EXPECT_GE(differ, static_cast<int>(0.9 * n));
}

TEST(Executor, ReattemptAfterBacktrack) {
  // Goto stops at once; the manipulation is always rejected by the
  // grounding check, so every attempt ends in a backtrack.
  ModelParams<float> m = biased_model({{act_index(NavType::StopNav), 30.f}, {act_index(ManipType::Pickup), 30.f}});
  m.block(m.layout.actArgW).setZero();
  m.block(m.layout.actArgB).setZero();
  m.block(m.layout.actArgB)(index(Obj::None), 0) = 30.f;
  ExecConfig c;
  c.oracle = OracleMode::parse("SG");
  c.maxBacktracks = 3;
  const auto& e = first_with_goto_then_manip();
  const ExecTrace t = run_episode(&m, e.demo, c, 1, e.index);
  EXPECT_EQ(t.terminal, TerminalReason::BacktrackBudget);
  EXPECT_EQ(t.backtracks, 3);
  // subgoal Goto, subgoal manip, reject, then (backtrack, blacklist, reject) per attempt
  std::vector<EventKind> kinds;
  for (const auto& ev : t.events) kinds.push_back(ev.kind);
  const std::vector<EventKind> want = {EventKind::SubGoal,      EventKind::SubGoal,   EventKind::Reject,
                                       EventKind::Backtrack,    EventKind::BlacklistHit, EventKind::Reject,
                                       EventKind::Backtrack,    EventKind::BlacklistHit, EventKind::Reject,
                                       EventKind::Backtrack,    EventKind::BlacklistHit, EventKind::Reject};
  EXPECT_EQ(kinds, want);
  EXPECT_EQ(t.events[3].sg, e.demo.subGoals[0]);
  EXPECT_EQ(t.agentLength, 4);
}

TEST(Executor, BlacklistPenaltyMovesTerminalPose) {
  // StopNav leads RotateLeft by less than the penalty: the retry leaves the
  // blacklisted pose and stops at the next one.
  ModelParams<float> m = biased_model({{act_index(NavType::StopNav), 1.f}, {act_index(NavType::RotateLeft), 0.5f}});
  ExecConfig c;
  c.oracle = OracleMode::parse("SG");
  c.retryPrefixLen = 0;
  c.noise = NoiseConfig::none();
  const auto& e = first_with_goto_then_manip();
  EpisodeRunner r(&m, e.demo, c, 1, e.index);
  const SubGoal sg = e.demo.subGoals[0];
  EXPECT_EQ(r.navigation_loop(sg, "", false), NavOutcome::Stopped);
  EXPECT_TRUE(r.trace().events.empty());
  const PoseKey first = r.pose_key();
  r.blacklist().insert(first);
  EXPECT_EQ(r.navigation_loop(sg, "", true), NavOutcome::Stopped);
  ASSERT_EQ(r.trace().events.size(), 1u);
  EXPECT_EQ(r.trace().events[0].nav, NavType::RotateLeft);
  EXPECT_NE(r.pose_key(), first);

  // a penalty below the margin keeps the agent in place
  c.blacklistPenalty = 0.25;
  EpisodeRunner q(&m, e.demo, c, 1, e.index);
  q.blacklist().insert(q.pose_key());
  EXPECT_EQ(q.navigation_loop(sg, "", true), NavOutcome::Stopped);
  EXPECT_TRUE(q.trace().events.empty());
}

TEST(Executor, GoalOnlyUsesDirective) {
  const auto& e = tiny_dataset().episodes.front();
  const ModelParams<float> m = random_model();
  ExecConfig c;
  c.instructionsAvailable = false;
  const ExecTrace t = run_episode(&m, e.demo, c, 3, e.index);
  EXPECT_GT(t.agentLength + count_events(t, EventKind::SubGoal), 0);
}

TEST(Executor, DeterministicPerSeed) {
  const ModelParams<float> m = random_model(12);
  ExecConfig c;
  for (const auto& e : tiny_dataset().episodes) {
    std::ostringstream a, b;
    write_trace(a, run_episode(&m, e.demo, c, 77, e.index));
    write_trace(b, run_episode(&m, e.demo, c, 77, e.index));
    EXPECT_EQ(a.str(), b.str());
  }
}

TEST(Trace, RoundTripAndReplay) {
  const ModelParams<float> m = random_model(4);
  ExecConfig c;
  std::ostringstream os;
  std::vector<ExecTrace> written;
  for (const auto& e : tiny_dataset().episodes) {
    written.push_back(run_episode(&m, e.demo, c, 5, e.index));
    write_trace(os, written.back());
  }
  std::istringstream is(os.str());
  const auto back = read_traces(is);
  ASSERT_EQ(back.size(), written.size());
  std::ostringstream again;
  for (const auto& t : back) write_trace(again, t);
  EXPECT_EQ(again.str(), os.str());
  for (const auto& t : back) EXPECT_FALSE(replay_trace(t).has_value()) << t.episode;
}

TEST(Trace, ReplayFindsCorruption) {
  const auto& e = first_with_goto_then_manip();
  const ExecTrace clean = expert_trace(e.demo, e.index);
  ASSERT_FALSE(replay_trace(clean).has_value());
  int primitives = 0;
  for (const auto& ev : clean.events) primitives += ev.kind == EventKind::Nav || ev.kind == EventKind::Manip;
  for (int target : {0, primitives / 2, primitives - 1}) {
    ExecTrace t = clean;
    int k = 0;
    for (auto& ev : t.events) {
      if (ev.kind != EventKind::Nav && ev.kind != EventKind::Manip) continue;
      if (k++ == target) ev.result = ActionResult::fail(FailureReason::Blocked);
    }
    EXPECT_EQ(replay_trace(t), target);
  }
  ExecTrace g = clean;
  g.goal.success = false;
  EXPECT_EQ(replay_trace(g), primitives);
}

TEST(Trace, MalformedInputThrows) {
  std::istringstream bad("{\"record\":\"event\"}\n");
  EXPECT_THROW(read_traces(bad), FormatError);
  std::istringstream junk("not json\n");
  EXPECT_THROW(read_traces(junk), FormatError);
}
