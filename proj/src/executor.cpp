#include "hiertask/executor.hpp"

#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>

#include "hiertask/io.hpp"

namespace hiertask {

// ============================================================================
// Configuration
// ============================================================================

bool OracleMode::covers(const OracleMode& o) const {
  return (subGoals || !o.subGoals) && (navigation || !o.navigation) && (manipulation || !o.manipulation) &&
         (grounding || !o.grounding);
}

std::string OracleMode::name() const {
  std::string out;
  auto add = [&](bool on, const char* s) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += s;
  };
  add(subGoals, "SG");
  add(navigation, "N");
  add(manipulation, "M");
  add(grounding, "GR");
  return out.empty() ? "none" : out;
}

OracleMode OracleMode::parse(std::string_view s) {
  OracleMode m;
  std::string item;
  auto flush = [&] {
    for (auto& c : item) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (item.empty() || item == "NONE") {
    } else if (item == "SG") {
      m.subGoals = true;
    } else if (item == "N") {
      m.navigation = true;
    } else if (item == "M") {
      m.manipulation = true;
    } else if (item == "GR") {
      m.grounding = true;
    } else {
      throw std::invalid_argument("unknown oracle component '" + item + "'");
    }
    item.clear();
  };
  for (char c : s) {
    if (c == ',' || c == '+') {
      flush();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      item += c;
    }
  }
  flush();
  return m;
}

void ExecConfig::validate() const {
  if (maxBacktracks < 0) throw std::invalid_argument("maxBacktracks must be non-negative");
  if (maxFailedInteractions <= 0 || maxSteps <= 0 || navStepCap <= 0 || manipStepCap <= 0 || maxSubGoals <= 0)
    throw std::invalid_argument("execution limits must be positive");
  if (!(retryTemperature > 0)) throw std::invalid_argument("retry temperature must be positive");
  if (retryPrefixLen < 0) throw std::invalid_argument("retry prefix length must be non-negative");
  noise.validate();
}

// ============================================================================
// Names
// ============================================================================

namespace {
constexpr std::array<const char*, 6> kEventNames = {"subgoal", "nav", "manip", "reject", "backtrack", "blacklist"};
constexpr std::array<const char*, 4> kTerminalNames = {"PredictedEnd", "BacktrackBudget", "StepLimit",
                                                       "FailureLimit"};
}  // namespace

std::string_view event_kind_name(EventKind k) { return kEventNames[static_cast<size_t>(k)]; }
std::string_view terminal_name(TerminalReason r) { return kTerminalNames[static_cast<size_t>(r)]; }

std::optional<TerminalReason> terminal_from_name(std::string_view s) {
  for (size_t i = 0; i < kTerminalNames.size(); ++i)
    if (s == kTerminalNames[i]) return static_cast<TerminalReason>(i);
  return std::nullopt;
}

namespace {

std::optional<EventKind> event_from_name(std::string_view s) {
  for (size_t i = 0; i < kEventNames.size(); ++i)
    if (s == kEventNames[i]) return static_cast<EventKind>(i);
  return std::nullopt;
}

}  // namespace

// ============================================================================
// Episode execution
// ============================================================================

EpisodeRunner::EpisodeRunner(const ModelParams<float>* model, const Demonstration& demo, const ExecConfig& cfg,
                             uint64_t seed, int episode)
    : model_(model),
      demo_(demo),
      cfg_(cfg),
      state_(reset(demo.sceneSeed, demo.task)),
      obsRng_(derive_seed(seed, 0x6f6273ull)),
      sampleRng_(derive_seed(seed, 0x7265747279ull)) {
  cfg_.validate();
  const OracleMode& o = cfg_.oracle;
  if (!model_ && !(o.subGoals && o.navigation && o.manipulation && o.grounding))
    throw std::invalid_argument("a model is required unless every decision is taken from the oracle");
  trace_.episode = episode;
  trace_.seed = demo.sceneSeed;
  trace_.task = demo.task;
}

PoseKey EpisodeRunner::pose_key() const {
  return {state_.agent.x, state_.agent.y, static_cast<int>(state_.agent.rot)};
}

VisualObs EpisodeRunner::look() { return observe(state_, cfg_.noise, obsRng_); }

bool EpisodeRunner::count_step() {
  if (trace_.agentLength >= cfg_.maxSteps) {
    terminate(TerminalReason::StepLimit);
    return false;
  }
  ++trace_.agentLength;
  return true;
}

void EpisodeRunner::count_failure() {
  ++trace_.failedInteractions;
  if (cfg_.interactionLimit && trace_.failedInteractions >= cfg_.maxFailedInteractions)
    terminate(TerminalReason::FailureLimit);
}

void EpisodeRunner::terminate(TerminalReason r) {
  if (terminated_) return;
  terminated_ = true;
  trace_.terminal = r;
}

std::string EpisodeRunner::instruction_for(int sgIndex) const {
  const auto& per = demo_.instructions.perSubGoal;
  if (cfg_.instructionsAvailable && sgIndex >= 0 && static_cast<size_t>(sgIndex) < per.size() &&
      !per[static_cast<size_t>(sgIndex)].empty())
    return per[static_cast<size_t>(sgIndex)];
  return demo_.task.goalDirective;
}

std::optional<int> EpisodeRunner::ground_target(const ManipAction& a, int maskIndex, const VisualObs& obs) {
  if (cfg_.oracle.grounding) return resolve_manip_target(state_, demo_.task, a);
  // validity check before touching the simulator
  if (maskIndex <= 0 || maskIndex > static_cast<int>(obs.detections.size())) return std::nullopt;
  if (obs.detections[static_cast<size_t>(maskIndex - 1)].classLabel != a.arg) return std::nullopt;
  return ground(obs, maskIndex);
}

NavOutcome EpisodeRunner::navigation_loop(const SubGoal& sg, const std::string& instruction, bool retry) {
  if (terminated_) return NavOutcome::Terminated;
  std::vector<NavType> plan;
  if (cfg_.oracle.navigation) {
    try {
      plan = plan_navigation_to(state_, demo_.task, sg.arg).actions;
    } catch (const Unreachable&) {
      plan = {NavType::StopNav};
    }
  }
  std::vector<NavType>& history = navHistory_;
  if (!retry) history.clear();
  bool blocked = false;
  for (int k = 0; k < cfg_.navStepCap; ++k) {
    NavType a = NavType::StopNav;
    if (cfg_.oracle.navigation) {
      if (static_cast<size_t>(k) < plan.size()) a = plan[static_cast<size_t>(k)];
    } else {
      const VisualObs obs = look();
      const TokenSeq seq = encode_nav_input(instruction, sg, history, obs, state_.agent.rot, state_.agent.horizon,
                                            model_->hp, cfg_.inputConfig);
      const HeadLogits<float> l = forward(*model_, seq);
      std::array<bool, kNumNavTypes> disallowed{};
      // obstruction guard
      disallowed[static_cast<size_t>(NavType::MoveAhead)] = blocked;
      VectorX<float> logits = l.actType.head(kNumNavTypes);
      if (retry && blacklist_.count(pose_key()))
        logits(static_cast<int>(NavType::StopNav)) -= static_cast<float>(cfg_.blacklistPenalty);
      if (retry && k < cfg_.retryPrefixLen) {
        std::array<double, kNumNavTypes> w{};
        double z = 0;
        const double top = logits.maxCoeff();
        for (int i = 0; i < kNumNavTypes; ++i) {
          if (disallowed[static_cast<size_t>(i)]) continue;
          w[static_cast<size_t>(i)] = std::exp((logits(i) - top) / cfg_.retryTemperature);
          z += w[static_cast<size_t>(i)];
        }
        double u = sampleRng_.uniform01() * z;
        int pick = -1;
        for (int i = 0; i < kNumNavTypes; ++i) {
          if (disallowed[static_cast<size_t>(i)]) continue;
          pick = i;
          u -= w[static_cast<size_t>(i)];
          if (u < 0) break;
        }
        a = static_cast<NavType>(pick);
      } else {
        HeadLogits<float> adjusted = l;
        adjusted.actType.head(kNumNavTypes) = logits;
        a = predict_nav(adjusted, disallowed);
      }
    }
    if (a == NavType::StopNav) return NavOutcome::Stopped;
    if (!count_step()) return NavOutcome::Terminated;
    const ActionResult r = apply_nav(state_, a);
    ExecEvent e;
    e.kind = EventKind::Nav;
    e.sgIndex = sgIndex_;
    e.sg = sg;
    e.nav = a;
    e.result = r;
    trace_.events.push_back(e);
    history.push_back(a);
    if (r.success) {
      blocked = false;
    } else {
      if (a == NavType::MoveAhead && r.failureReason == FailureReason::Blocked) blocked = true;
      count_failure();
      if (terminated_) return NavOutcome::Terminated;
    }
  }
  return NavOutcome::CapReached;
}

ManipOutcome EpisodeRunner::manipulation_loop(const SubGoal& sg, const std::string& instruction,
                                              std::vector<ManipAction>& history) {
  if (terminated_) return ManipOutcome::Terminated;
  std::vector<ManipAction> macro;
  if (cfg_.oracle.manipulation) {
    try {
      macro = macro_actions(sg);
    } catch (const std::invalid_argument&) {
      macro = {};
    }
  }
  const bool needModel = !cfg_.oracle.manipulation || !cfg_.oracle.grounding;
  for (int k = 0; k < cfg_.manipStepCap; ++k) {
    VisualObs obs;
    ManipPrediction pred;
    if (needModel) {
      obs = look();
      const TokenSeq seq = encode_manip_input(instruction, sg, history, obs, state_.agent.rot, state_.agent.horizon,
                                              model_->hp, cfg_.inputConfig);
      pred = predict_manip(forward(*model_, seq));
    }
    ManipAction a = pred.action;
    if (cfg_.oracle.manipulation) {
      if (macro.empty()) return ManipOutcome::Failed;
      a = history.size() < macro.size() ? macro[history.size()] : ManipAction{};
    }
    if (a.type == ManipType::StopManip) return ManipOutcome::Completed;

    const std::optional<int> target = ground_target(a, pred.maskIndex, obs);
    if (!count_step()) return ManipOutcome::Terminated;
    ExecEvent e;
    e.sgIndex = sgIndex_;
    e.sg = sg;
    e.manip = a;
    if (!target) {
      e.kind = EventKind::Reject;
      trace_.events.push_back(e);
      return ManipOutcome::Failed;
    }
    const ActionResult r = apply_manip(state_, a.type, *target);
    e.kind = EventKind::Manip;
    e.target = *target;
    e.result = r;
    trace_.events.push_back(e);
    if (!r.success) {
      count_failure();
      return terminated_ ? ManipOutcome::Terminated : ManipOutcome::Failed;
    }
    history.push_back(a);
  }
  return ManipOutcome::Failed;
}

ExecTrace EpisodeRunner::run() {
  std::vector<SubGoal> history;
  std::optional<SubGoal> lastGoto;
  std::string lastGotoInstruction;
  while (!terminated_) {
    if (static_cast<int>(history.size()) >= cfg_.maxSubGoals) {
      terminate(TerminalReason::StepLimit);
      break;
    }
    sgIndex_ = static_cast<int>(history.size());
    SubGoal sg;
    if (cfg_.oracle.subGoals) {
      if (static_cast<size_t>(sgIndex_) < demo_.subGoals.size()) sg = demo_.subGoals[static_cast<size_t>(sgIndex_)];
    } else {
      const VisualObs obs = look();
      sg = predict_subgoal(*model_, encode_subgoal_input(demo_.task.goalDirective, history, obs, state_.agent.rot,
                                                         state_.agent.horizon, model_->hp, cfg_.inputConfig));
    }
    ExecEvent e;
    e.kind = EventKind::SubGoal;
    e.sgIndex = sgIndex_;
    e.sg = sg;
    trace_.events.push_back(e);
    if (sg.type == SubGoalType::End) {
      terminate(TerminalReason::PredictedEnd);
      break;
    }
    const std::string instruction = instruction_for(sgIndex_);
    history.push_back(sg);
    if (sg.type == SubGoalType::Goto) {
      navigation_loop(sg, instruction, false);
      lastGoto = sg;
      lastGotoInstruction = instruction;
      continue;
    }

    std::vector<ManipAction> done;
    ManipOutcome out = manipulation_loop(sg, instruction, done);
    while (out == ManipOutcome::Failed) {
      if (trace_.backtracks >= cfg_.maxBacktracks) {
        terminate(TerminalReason::BacktrackBudget);
        break;
      }
      ++trace_.backtracks;
      SubGoal back{SubGoalType::Goto, sg.arg};
      std::string backInstruction = instruction;
      if (lastGoto) {
        back = *lastGoto;
        backInstruction = lastGotoInstruction;
      } else {
        try {
          back.arg = macro_actions(sg).front().arg;
        } catch (const std::invalid_argument&) {
        }
      }
      ExecEvent b;
      b.kind = EventKind::Backtrack;
      b.sgIndex = sgIndex_;
      b.sg = back;
      trace_.events.push_back(b);
      if (!cfg_.oracle.navigation) blacklist_.insert(pose_key());
      if (navigation_loop(back, backInstruction, true) == NavOutcome::Terminated) break;
      if (!cfg_.oracle.navigation && blacklist_.count(pose_key())) {
        ExecEvent h;
        h.kind = EventKind::BlacklistHit;
        h.sgIndex = sgIndex_;
        h.sg = back;
        trace_.events.push_back(h);
      }
      out = manipulation_loop(sg, instruction, done);
    }
  }
  trace_.goal = check_goal(state_, demo_.task);
  return trace_;
}

ExecTrace run_episode(const ModelParams<float>* model, const Demonstration& demo, const ExecConfig& cfg,
                      uint64_t seed, int episode) {
  EpisodeRunner r(model, demo, cfg, seed, episode);
  return r.run();
}

// ============================================================================
// Expert traces and replay
// ============================================================================

ExecTrace expert_trace(const Demonstration& demo, int episode) {
  ExecTrace t;
  t.episode = episode;
  t.seed = demo.sceneSeed;
  t.task = demo.task;
  WorldState s = reset(demo.sceneSeed, demo.task);
  for (size_t i = 0; i < demo.subGoals.size(); ++i) {
    ExecEvent e;
    e.kind = EventKind::SubGoal;
    e.sgIndex = static_cast<int>(i);
    e.sg = demo.subGoals[i];
    t.events.push_back(e);
    for (NavType a : demo.navPlans[i]) {
      if (a == NavType::StopNav) continue;
      ExecEvent n = e;
      n.kind = EventKind::Nav;
      n.nav = a;
      n.result = apply_nav(s, a);
      t.events.push_back(n);
      ++t.agentLength;
    }
    for (const ManipStep& m : demo.manipPlans[i]) {
      if (m.action.type == ManipType::StopManip) continue;
      ExecEvent n = e;
      n.kind = EventKind::Manip;
      n.manip = m.action;
      n.target = m.target;
      n.result = apply_manip(s, m.action.type, m.target);
      t.events.push_back(n);
      ++t.agentLength;
    }
  }
  t.terminal = TerminalReason::PredictedEnd;
  t.goal = check_goal(s, demo.task);
  return t;
}

std::optional<int> replay_trace(const ExecTrace& t) {
  WorldState s = reset(t.seed, t.task);
  int index = 0;
  for (const ExecEvent& e : t.events) {
    if (e.kind == EventKind::Nav) {
      if (!(apply_nav(s, e.nav) == e.result)) return index;
      ++index;
    } else if (e.kind == EventKind::Manip) {
      if (e.target < 0 || e.target >= static_cast<int>(s.objects.size())) return index;
      if (!(apply_manip(s, e.manip.type, e.target) == e.result)) return index;
      ++index;
    }
  }
  const GoalConditionReport g = check_goal(s, t.task);
  if (g.success != t.goal.success || g.satisfiedCount != t.goal.satisfiedCount) return index;
  return std::nullopt;
}

// ============================================================================
// Serialization
// ============================================================================

void write_trace(std::ostream& os, const ExecTrace& t) {
  json h;
  h["record"] = "episode";
  h["episode"] = t.episode;
  h["layout"] = t.seed.layout;
  h["placement"] = t.seed.placement;
  h["task"] = task_to_json(t.task);
  os << h.dump() << '\n';
  for (const ExecEvent& e : t.events) {
    json j;
    j["record"] = "event";
    j["episode"] = t.episode;
    j["kind"] = event_kind_name(e.kind);
    j["sg_index"] = e.sgIndex;
    j["sg"] = to_string(e.sg);
    if (e.kind == EventKind::Nav) j["action"] = nav_name(e.nav);
    if (e.kind == EventKind::Manip || e.kind == EventKind::Reject) j["action"] = to_string(e.manip);
    if (e.kind == EventKind::Manip) j["target"] = e.target;
    if (e.kind == EventKind::Nav || e.kind == EventKind::Manip) j["result"] = failure_name(e.result.failureReason);
    os << j.dump() << '\n';
  }
  json f;
  f["record"] = "end";
  f["episode"] = t.episode;
  f["agent_length"] = t.agentLength;
  f["backtracks"] = t.backtracks;
  f["failed_interactions"] = t.failedInteractions;
  f["terminal"] = terminal_name(t.terminal);
  f["goal_satisfied"] = t.goal.satisfiedCount;
  f["goal_total"] = t.goal.totalCount;
  f["success"] = t.goal.success;
  os << f.dump() << '\n';
}

std::vector<ExecTrace> read_traces(std::istream& is) {
  std::vector<ExecTrace> out;
  std::string line;
  bool open = false;
  int lineNo = 0;
  while (std::getline(is, line)) {
    ++lineNo;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string rec = j.at("record");
      if (rec == "episode") {
        if (open) throw FormatError("episode record before the previous episode ended");
        ExecTrace t;
        t.episode = j.at("episode");
        t.seed = {j.at("layout").get<uint32_t>(), j.at("placement").get<uint32_t>()};
        t.task = task_from_json(j.at("task"));
        out.push_back(t);
        open = true;
      } else if (rec == "event") {
        if (!open) throw FormatError("event outside an episode");
        ExecEvent e;
        const auto kind = event_from_name(j.at("kind").get<std::string>());
        if (!kind) throw FormatError("unknown event kind");
        e.kind = *kind;
        e.sgIndex = j.at("sg_index");
        e.sg = parse_subgoal(j.at("sg").get<std::string>());
        if (e.kind == EventKind::Nav) {
          const auto a = nav_from_name(j.at("action").get<std::string>());
          if (!a) throw FormatError("unknown navigation action");
          e.nav = *a;
        }
        if (e.kind == EventKind::Manip || e.kind == EventKind::Reject)
          e.manip = parse_manip(j.at("action").get<std::string>());
        if (e.kind == EventKind::Manip) e.target = j.at("target");
        if (e.kind == EventKind::Nav || e.kind == EventKind::Manip) {
          const auto r = failure_from_name(j.at("result").get<std::string>());
          if (!r) throw FormatError("unknown action result");
          e.result = {*r == FailureReason::None, *r};
        }
        out.back().events.push_back(e);
      } else if (rec == "end") {
        if (!open) throw FormatError("end record outside an episode");
        ExecTrace& t = out.back();
        t.agentLength = j.at("agent_length");
        t.backtracks = j.at("backtracks");
        t.failedInteractions = j.at("failed_interactions");
        const auto term = terminal_from_name(j.at("terminal").get<std::string>());
        if (!term) throw FormatError("unknown terminal reason");
        t.terminal = *term;
        t.goal.satisfiedCount = j.at("goal_satisfied");
        t.goal.totalCount = j.at("goal_total");
        t.goal.success = j.at("success");
        open = false;
      } else {
        throw FormatError("unknown record type " + rec);
      }
    } catch (const json::exception& e) {
      throw FormatError("trace line " + std::to_string(lineNo) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw FormatError("trace line " + std::to_string(lineNo) + ": " + e.what());
    }
  }
  if (open) throw FormatError("trace ends inside an episode");
  return out;
}

}  // namespace hiertask
