#include "hiertask/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace hiertask {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not an integer: '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": not a boolean: '" + v + "'");
}

template <typename T>
std::string join(const std::vector<T>& xs, auto&& show) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + show(xs[i]);
  return out;
}

using F = RunConfig::Field;

F int_field(std::string key, Stage st, auto member) {
  return {key, st, [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& v) {
            member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(to_int(key, v));
          }};
}

F real_field(std::string key, Stage st, auto member) {
  return {key, st, [member](const RunConfig& c) { return num(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& v) { member(c) = to_double(key, v); }};
}

F bool_field(std::string key, Stage st, auto member) {
  return {key, st, [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [member, key](RunConfig& c, const std::string& v) { member(c) = to_bool(key, v); }};
}

InputConfig parse_input(const std::string& s) {
  const auto c = input_config_from_name(s);
  if (!c) throw ConfigError("unknown input configuration '" + s + "'");
  return *c;
}

}  // namespace

NoiseConfig noise_profile(const std::string& name) {
  if (name == "none") return NoiseConfig::none();
  if (name == "standard") return NoiseConfig::standard();
  if (name == "high") {
    NoiseConfig n;
    n.pMiss = 0.3;
    n.pMisclass = 0.15;
    return n;
  }
  throw ConfigError("unknown noise profile '" + name + "' (none, standard, high)");
}

// ============================================================================
// RunConfig
// ============================================================================

const std::vector<RunConfig::Field>& RunConfig::fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    const Stage D = Stage::Data, M = Stage::Model, R = Stage::Run;
    v.push_back(int_field("seed", D, [](RunConfig& c) -> uint64_t& { return c.seed; }));
    // dataset
    v.push_back(int_field("data.n_train", D, [](RunConfig& c) -> int& { return c.data.nTrain; }));
    v.push_back(int_field("data.n_seen_eval", D, [](RunConfig& c) -> int& { return c.data.nSeenEval; }));
    v.push_back(int_field("data.n_unseen_eval", D, [](RunConfig& c) -> int& { return c.data.nUnseenEval; }));
    v.push_back(int_field("data.n_train_layouts", D, [](RunConfig& c) -> int& { return c.data.nTrainLayouts; }));
    v.push_back(int_field("data.n_unseen_layouts", D, [](RunConfig& c) -> int& { return c.data.nUnseenLayouts; }));
    v.push_back({"data.task_mix", D,
                 [](const RunConfig& c) { return join(std::vector<double>(c.data.taskMix.begin(), c.data.taskMix.end()), num); },
                 [](RunConfig& c, const std::string& s) {
                   const auto xs = split_list(s);
                   if (xs.size() != c.data.taskMix.size())
                     throw ConfigError("data.task_mix needs " + std::to_string(c.data.taskMix.size()) + " weights");
                   for (size_t i = 0; i < xs.size(); ++i) c.data.taskMix[i] = to_double("data.task_mix", xs[i]);
                 }});
    v.push_back(real_field("data.p_sliced", D, [](RunConfig& c) -> double& { return c.data.pSliced; }));
    v.push_back(real_field("data.noise.p_miss", D, [](RunConfig& c) -> double& { return c.data.noise.pMiss; }));
    v.push_back(real_field("data.noise.p_misclass", D, [](RunConfig& c) -> double& { return c.data.noise.pMisclass; }));
    // model and training
    v.push_back(int_field("model.d", M, [](RunConfig& c) -> int& { return c.hp.d; }));
    v.push_back(int_field("model.layers", M, [](RunConfig& c) -> int& { return c.hp.layers; }));
    v.push_back(int_field("model.heads", M, [](RunConfig& c) -> int& { return c.hp.heads; }));
    v.push_back(int_field("model.ffn", M, [](RunConfig& c) -> int& { return c.hp.ffn; }));
    v.push_back(int_field("model.max_len", M, [](RunConfig& c) -> int& { return c.hp.maxLen; }));
    v.push_back(int_field("model.top_k", M, [](RunConfig& c) -> int& { return c.hp.topK; }));
    v.push_back(real_field("train.lr", M, [](RunConfig& c) -> double& { return c.hp.lr; }));
    v.push_back(real_field("train.warmup", M, [](RunConfig& c) -> double& { return c.hp.warmup; }));
    v.push_back(int_field("train.batch", M, [](RunConfig& c) -> int& { return c.hp.batch; }));
    v.push_back(int_field("train.epochs", M, [](RunConfig& c) -> int& { return c.hp.epochs; }));
    v.push_back(real_field("train.clip", M, [](RunConfig& c) -> double& { return c.hp.clip; }));
    v.push_back(real_field("train.instruction_dropout", M, [](RunConfig& c) -> double& { return c.hp.instructionDropout; }));
    // execution
    v.push_back(int_field("exec.max_backtracks", R, [](RunConfig& c) -> int& { return c.exec.maxBacktracks; }));
    v.push_back(int_field("exec.max_failed_interactions", R, [](RunConfig& c) -> int& { return c.exec.maxFailedInteractions; }));
    v.push_back(bool_field("exec.interaction_limit", R, [](RunConfig& c) -> bool& { return c.exec.interactionLimit; }));
    v.push_back(int_field("exec.max_steps", R, [](RunConfig& c) -> int& { return c.exec.maxSteps; }));
    v.push_back(int_field("exec.nav_step_cap", R, [](RunConfig& c) -> int& { return c.exec.navStepCap; }));
    v.push_back(int_field("exec.manip_step_cap", R, [](RunConfig& c) -> int& { return c.exec.manipStepCap; }));
    v.push_back(int_field("exec.max_sub_goals", R, [](RunConfig& c) -> int& { return c.exec.maxSubGoals; }));
    v.push_back(real_field("exec.retry_temperature", R, [](RunConfig& c) -> double& { return c.exec.retryTemperature; }));
    v.push_back(int_field("exec.retry_prefix_len", R, [](RunConfig& c) -> int& { return c.exec.retryPrefixLen; }));
    v.push_back(real_field("exec.blacklist_penalty", R, [](RunConfig& c) -> double& { return c.exec.blacklistPenalty; }));
    v.push_back({"exec.oracle", R, [](const RunConfig& c) { return c.exec.oracle.name(); },
                 [](RunConfig& c, const std::string& s) {
                   try {
                     c.exec.oracle = OracleMode::parse(s);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(e.what());
                   }
                 }});
    v.push_back(bool_field("exec.instructions_available", R, [](RunConfig& c) -> bool& { return c.exec.instructionsAvailable; }));
    v.push_back(real_field("exec.noise.p_miss", R, [](RunConfig& c) -> double& { return c.exec.noise.pMiss; }));
    v.push_back(real_field("exec.noise.p_misclass", R, [](RunConfig& c) -> double& { return c.exec.noise.pMisclass; }));
    // evaluation protocols
    v.push_back({"eval.splits", R, [](const RunConfig& c) { return join(c.evalSplits, [](const std::string& s) { return s; }); },
                 [](RunConfig& c, const std::string& s) { c.evalSplits = split_list(s); }});
    auto ints = [](std::string key, std::vector<int> RunConfig::*m) {
      return Field{key, Stage::Run, [m](const RunConfig& c) { return join(c.*m, [](int i) { return std::to_string(i); }); },
                   [m, key](RunConfig& c, const std::string& s) {
                     (c.*m).clear();
                     for (const auto& x : split_list(s)) (c.*m).push_back(static_cast<int>(to_int(key, x)));
                   }};
    };
    auto reals = [](std::string key, std::vector<double> RunConfig::*m) {
      return Field{key, Stage::Run, [m](const RunConfig& c) { return join(c.*m, num); },
                   [m, key](RunConfig& c, const std::string& s) {
                     (c.*m).clear();
                     for (const auto& x : split_list(s)) (c.*m).push_back(to_double(key, x));
                   }};
    };
    v.push_back(ints("eval.sweep_budgets", &RunConfig::sweepBudgets));
    v.push_back(ints("eval.goto_retries", &RunConfig::gotoRetries));
    v.push_back(reals("eval.grounding_miss", &RunConfig::groundingMiss));
    v.push_back(reals("curves.fractions", &RunConfig::curveFractions));
    v.push_back({"curves.inputs", R,
                 [](const RunConfig& c) {
                   return join(c.curveInputs, [](InputConfig i) { return std::string(input_config_name(i)); });
                 },
                 [](RunConfig& c, const std::string& s) {
                   c.curveInputs.clear();
                   for (const auto& x : split_list(s)) c.curveInputs.push_back(parse_input(x));
                 }});
    v.push_back({"out_dir", R, [](const RunConfig& c) { return c.outDir; },
                 [](RunConfig& c, const std::string& s) { c.outDir = s; }});
    return v;
  }();
  return f;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  throw ConfigError("unknown configuration key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
  for (const auto& f : fields())
    if (f.key == key) return f.get(*this);
  throw ConfigError("unknown configuration key '" + key + "'");
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  int n = 0;
  std::set<std::string> seen;
  while (std::getline(is, line)) {
    ++n;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(n) + ": duplicate key '" + key + "'");
    c.set(key, trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse(ss.str());
  if (const char* o = std::getenv("HIERTASK_OUT_DIR"); o && *o) c.outDir = o;
  return c;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::fingerprint(Stage stage) const {
  std::string text;
  for (const auto& f : fields()) {
    if (f.key == "out_dir" || static_cast<int>(f.stage) > static_cast<int>(stage)) continue;
    text += f.key + "=" + f.get(*this) + "\n";
  }
  return hex64(fnv1a64(text));
}

std::string RunConfig::model_fingerprint(double fraction, InputConfig input) const {
  return hex64(fnv1a64(fingerprint(Stage::Model) + "|" + num(fraction) + "|" + std::string(input_config_name(input))));
}

DatasetSpec RunConfig::dataset_spec() const {
  DatasetSpec d = data;
  d.seed = seed;
  return d;
}

Hyperparams RunConfig::train_hyperparams() const {
  Hyperparams h = hp;
  h.seed = derive_seed(seed, 0x747261696eull);
  return h;
}

void RunConfig::validate() const {
  try {
    hp.validate();
    exec.validate();
    data.noise.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (data.nTrain <= 0 || data.nSeenEval < 0 || data.nUnseenEval < 0 || data.nTrainLayouts <= 0 ||
      data.nUnseenLayouts <= 0)
    throw ConfigError("dataset sizes must be positive");
  for (const auto& s : evalSplits)
    if (s != "seen" && s != "unseen") throw ConfigError("eval.splits accepts seen and unseen");
  for (double f : curveFractions)
    if (!(f > 0 && f <= 1)) throw ConfigError("curve fractions must lie in (0, 1]");
  for (int b : sweepBudgets)
    if (b < 0) throw ConfigError("backtrack budgets must be non-negative");
  if (!std::is_sorted(gotoRetries.begin(), gotoRetries.end())) throw ConfigError("eval.goto_retries must ascend");
}

// ============================================================================
// Commands
// ============================================================================

std::string Paths::model_dir(double fraction, InputConfig input) const {
  if (fraction >= 1.0 && input == InputConfig::Full) return root + "/models/full";
  return root + "/models/" + std::string(input_config_name(input)) + "_f" + fmt(fraction, 2);
}

namespace {

std::ostream& out(const Context& ctx) {
  static std::ostream null(nullptr);
  return ctx.log ? *ctx.log : null;
}

Split parse_split(const std::string& s) {
  const auto sp = split_from_name(s);
  if (!sp) throw ConfigError("unknown split '" + s + "'");
  return *sp;
}

std::vector<TrainInstance> read_checked_dataset(const Context& ctx) {
  const Paths p{ctx.cfg.outDir};
  DatasetHeader h;
  auto data = read_dataset(p.dataset(), &h);
  if (h.fingerprint != ctx.cfg.fingerprint(Stage::Data))
    throw FingerprintMismatch("dataset " + p.dataset() + " has fingerprint " + h.fingerprint +
                              ", configuration expects " + ctx.cfg.fingerprint(Stage::Data));
  if (h.vocabHash != Vocab::get().hash()) throw FingerprintMismatch("dataset vocabulary hash differs");
  return data;
}

ModelParams<float> load_checked_model(const Context& ctx, double fraction, InputConfig input) {
  const Paths p{ctx.cfg.outDir};
  CheckpointMeta meta;
  ModelParams<float> m = load_checkpoint(p.checkpoint(fraction, input), &meta);
  const std::string want = ctx.cfg.model_fingerprint(fraction, input);
  if (meta.fingerprint != want)
    throw FingerprintMismatch("checkpoint " + p.checkpoint(fraction, input) + " has fingerprint " + meta.fingerprint +
                              ", configuration expects " + want);
  return m;
}

json report_body(const Context& ctx, json body) {
  body["data_fingerprint"] = ctx.cfg.fingerprint(Stage::Data);
  body["model_fingerprint"] = ctx.cfg.model_fingerprint(1.0, ctx.cfg.exec.inputConfig);
  return body;
}

std::string safe(const std::string& s) {
  std::string o = s;
  for (char& c : o)
    if (c == ',') c = '+';
  return o;
}

}  // namespace

std::vector<Episode> load_split(const Context& ctx, const std::string& split) {
  const Split want = parse_split(split);
  std::string fp;
  auto eps = read_manifest(Paths{ctx.cfg.outDir}.manifest(), &fp, ctx.jobs);
  if (fp != ctx.cfg.fingerprint(Stage::Data))
    throw FingerprintMismatch("manifest has fingerprint " + fp + ", configuration expects " +
                              ctx.cfg.fingerprint(Stage::Data));
  std::vector<Episode> out;
  for (auto& e : eps)
    if (e.split == want) out.push_back(std::move(e));
  return out;
}

GenDataResult cmd_gen_data(const Context& ctx) {
  ctx.cfg.validate();
  const Paths p{ctx.cfg.outDir};
  DatasetSpec spec = ctx.cfg.dataset_spec();
  spec.jobs = ctx.jobs;
  const Dataset ds = make_dataset(spec);
  std::filesystem::create_directories(p.data_dir());
  const std::string fp = ctx.cfg.fingerprint(Stage::Data);
  write_dataset(p.dataset(), ds.instances, Vocab::get().hash(), fp);
  write_manifest(p.manifest(), ds.episodes, fp);

  GenDataResult r;
  r.resampled = ds.resampled;
  for (Split s : {Split::Train, Split::SeenEval, Split::UnseenEval}) {
    SplitStats st;
    st.split = split_name(s);
    for (const auto& e : ds.episodes) st.episodes += e.split == s;
    for (const auto& x : ds.instances) {
      if (x.split != s) continue;
      st.subGoals += x.subProblem == SubProblem::SubGoalPlanning;
      st.navActions += x.subProblem == SubProblem::Navigation;
      st.manipActions += x.subProblem == SubProblem::Manipulation;
    }
    r.stats.push_back(st);
  }
  Table t;
  t.columns = {"split", "#Episodes", "#Sub-goals", "#Navi. Actions", "#Mani. Actions"};
  json rows = json::array();
  for (const auto& s : r.stats) {
    t.rows.push_back({s.split, std::to_string(s.episodes), std::to_string(s.subGoals), std::to_string(s.navActions),
                      std::to_string(s.manipActions)});
    rows.push_back({{"split", s.split},
                    {"episodes", s.episodes},
                    {"sub_goals", s.subGoals},
                    {"nav_actions", s.navActions},
                    {"manip_actions", s.manipActions}});
  }
  write_report(p.data_dir(), "stats", t, json{{"splits", rows}, {"resampled", r.resampled}}, fp);
  out(ctx) << t.text();
  if (r.resampled) out(ctx) << r.resampled << " demonstrations resampled after planning failures\n";
  return r;
}

TrainSummary cmd_train(const Context& ctx, const TrainArgs& args) {
  ctx.cfg.validate();
  if (!(args.fraction > 0 && args.fraction <= 1)) throw ConfigError("--fraction must lie in (0, 1]");
  const Paths p{ctx.cfg.outDir};
  const std::string dir = p.model_dir(args.fraction, args.input);
  const std::string fp = ctx.cfg.model_fingerprint(args.fraction, args.input);
  const Hyperparams hp = ctx.cfg.train_hyperparams();
  TrainSummary s;
  s.checkpoint = dir + "/best.ckpt";

  if (args.reuse && std::filesystem::exists(s.checkpoint) &&
      std::filesystem::exists(dir + "/epoch_" + std::to_string(hp.epochs - 1) + ".ckpt")) {
    CheckpointMeta meta;
    load_checkpoint(s.checkpoint, &meta);
    if (meta.fingerprint == fp) {
      s.bestEpoch = meta.bestEpoch;
      s.bestNavAccuracy = meta.bestNavAccuracy;
      s.reused = true;
      out(ctx) << "reusing " << s.checkpoint << "\n";
      return s;
    }
  }

  const auto data = read_checked_dataset(ctx);
  std::vector<TrainInstance> train, seen;
  std::map<int, Split> episodeSplit;
  for (const auto& x : data) {
    if (x.split == Split::Train) train.push_back(x);
    if (x.split == Split::SeenEval) seen.push_back(x);
    episodeSplit[x.episode] = x.split;
  }
  std::vector<Episode> eps;
  for (auto [id, sp] : episodeSplit) eps.push_back({id, sp, {}});
  train = fraction_subset(train, eps, args.fraction, ctx.cfg.seed);
  s.instances = static_cast<int>(train.size());

  std::filesystem::create_directories(dir);
  std::ofstream logFile(dir + "/train_log.csv", std::ios::binary);
  logFile << "# fingerprint " << fp << "\nepoch,lr,loss";
  for (int h = 0; h < 6; ++h) logFile << ",seen_" << HeadAccuracy::name(h);
  logFile << '\n';

  TrainOptions opt;
  opt.outDir = dir;
  opt.fingerprint = fp;
  opt.inputConfig = args.input;
  opt.resumeFrom = args.resumeFrom;
  opt.onEpoch = [&](const EpochLog& l) {
    logFile << l.epoch << ',' << fmt(l.lr, 8) << ',' << fmt(l.meanLoss, 6);
    for (int h = 0; h < 6; ++h) logFile << ',' << fmt(l.seenVal.acc(h));
    logFile << '\n';
    logFile.flush();
    out(ctx) << "epoch " << l.epoch << " loss " << fmt(l.meanLoss) << " seen nav " << fmt(l.seenVal.acc(HeadAccuracy::NavType_))
             << " manip " << fmt(l.seenVal.acc(HeadAccuracy::ManipType_)) << std::endl;
  };
  out(ctx) << "training " << dir << " on " << train.size() << " instances\n";
  const TrainResult r = hiertask::train(train, seen, hp, opt);
  s.bestEpoch = r.bestEpoch;
  s.bestNavAccuracy = r.bestNavAccuracy;
  return s;
}

std::vector<SplitEval> cmd_eval(const Context& ctx, const EvalArgs& args) {
  ctx.cfg.validate();
  const Paths p{ctx.cfg.outDir};
  const ExecConfig& ec = ctx.cfg.exec;
  const OracleMode& o = ec.oracle;
  const bool needModel = !(o.subGoals && o.navigation && o.manipulation && o.grounding);
  ModelParams<float> model;
  if (needModel) model = load_checked_model(ctx, 1.0, ec.inputConfig);
  const ModelParams<float>* mp = needModel ? &model : nullptr;

  std::string tag = args.tag;
  if (!o.empty()) tag += "_oracle-" + safe(o.name());
  if (!ec.instructionsAvailable) tag += "_gonly";

  std::vector<SplitEval> res;
  std::filesystem::create_directories(p.traces());
  for (const auto& split : ctx.cfg.evalSplits) {
    const auto eps = load_split(ctx, split);
    SplitEval se;
    se.split = split;
    const auto traces = run_episodes(mp, eps, ec, ctx.cfg.eval_seed(), ctx.jobs);
    {
      std::ofstream tf(p.traces() + "/eval_" + split + tag + ".jsonl", std::ios::binary);
      for (const auto& t : traces) write_trace(tf, t);
    }
    se.metrics = compute_metrics(traces, eps);
    se.metrics.fingerprint = ctx.cfg.fingerprint();
    se.metrics.check();
    const std::string name = "eval_" + split + tag;
    Table t = metrics_table({{split, se.metrics}}, "split");
    Table tt = task_type_table(se.metrics);
    t.rows.push_back({});
    t.rows.push_back(tt.columns);
    for (auto& r : tt.rows) t.rows.push_back(r);
    write_report(p.reports(), name, t, report_body(ctx, se.metrics.to_json()), ctx.cfg.fingerprint());
    out(ctx) << name << "\n" << t.text() << "\n";
    if (args.subgoals) {
      se.subgoals = eval_subgoals(mp, eps, ec, ctx.cfg.gotoRetries, ctx.cfg.eval_seed(), ctx.jobs);
      json body = json::object();
      for (int k = 0; k < kNumSubGoalTypes; ++k) {
        const auto type = static_cast<SubGoalType>(k);
        if (type == SubGoalType::End || type == SubGoalType::Goto) continue;
        body["success"][std::string(subgoal_type_name(type))] = se.subgoals.rate(type);
        body["count"][std::string(subgoal_type_name(type))] = se.subgoals.total[static_cast<size_t>(k)];
      }
      for (size_t i = 0; i < se.subgoals.retries.size(); ++i)
        body["goto"].push_back({{"retries", se.subgoals.retries[i]}, {"success", se.subgoals.goto_rate(i)}});
      const Table st = subgoal_table(se.subgoals);
      write_report(p.reports(), "subgoals_" + split + tag, st, report_body(ctx, body), ctx.cfg.fingerprint());
      out(ctx) << "subgoals_" << split << tag << "\n" << st.text() << "\n";
    }
    res.push_back(std::move(se));
  }
  return res;
}

std::vector<AblateResult> cmd_ablate(const Context& ctx) {
  ctx.cfg.validate();
  const Paths p{ctx.cfg.outDir};
  const ModelParams<float> model = load_checked_model(ctx, 1.0, ctx.cfg.exec.inputConfig);
  std::vector<AblateResult> res;
  for (const auto& split : ctx.cfg.evalSplits) {
    const auto eps = load_split(ctx, split);
    AblateResult a;
    a.split = split;
    a.ladder = run_oracle_ladder(&model, eps, ctx.cfg.exec, default_ladder(), ctx.cfg.eval_seed(), ctx.jobs);
    std::vector<std::pair<std::string, MetricsReport>> rows;
    json body = json::array();
    for (const auto& r : a.ladder) {
      rows.push_back({r.mode.name(), r.report});
      json j = r.report.to_json();
      j["oracle"] = r.mode.name();
      body.push_back(j);
    }
    ExecConfig g = ctx.cfg.exec;
    g.oracle = OracleMode::parse("SG,N,M");
    json gbody = json::array();
    std::vector<std::pair<std::string, MetricsReport>> grows;
    for (double miss : ctx.cfg.groundingMiss) {
      g.noise.pMiss = miss;
      const MetricsReport r = compute_metrics(run_episodes(&model, eps, g, ctx.cfg.eval_seed(), ctx.jobs), eps);
      a.grounding.push_back({miss, r});
      grows.push_back({"p_miss=" + fmt(miss, 2), r});
      json j = r.to_json();
      j["p_miss"] = miss;
      gbody.push_back(j);
    }
    const Table lt = metrics_table(rows, "oracle");
    const Table gt = metrics_table(grows, "SG,N,M");
    write_report(p.reports(), "ablate_" + split, lt, report_body(ctx, json{{"ladder", body}}), ctx.cfg.fingerprint());
    write_report(p.reports(), "grounding_" + split, gt, report_body(ctx, json{{"rows", gbody}}), ctx.cfg.fingerprint());
    out(ctx) << "ablate_" << split << "\n" << lt.text() << "\ngrounding_" << split << "\n" << gt.text() << "\n";
    res.push_back(std::move(a));
  }
  return res;
}

std::vector<SweepResult> cmd_sweep_bt(const Context& ctx, int maxBudget) {
  ctx.cfg.validate();
  const Paths p{ctx.cfg.outDir};
  const ModelParams<float> model = load_checked_model(ctx, 1.0, ctx.cfg.exec.inputConfig);
  std::vector<int> budgets;
  for (int b : ctx.cfg.sweepBudgets)
    if (maxBudget < 0 || b <= maxBudget) budgets.push_back(b);
  std::vector<SweepResult> res;
  for (const auto& split : ctx.cfg.evalSplits) {
    const auto eps = load_split(ctx, split);
    SweepResult s{split, sweep_backtracking(&model, eps, ctx.cfg.exec, budgets, ctx.cfg.eval_seed(), ctx.jobs)};
    Table t;
    t.columns = {"max_bt", "SR", "GC", "PLW_SR", "PLW_GC", "SR-PLW_SR", "agent_len", "backtracks"};
    json body = json::array();
    for (const auto& r : s.rows) {
      t.rows.push_back({std::to_string(r.budget), fmt(r.report.successRate), fmt(r.report.goalConditionRate),
                        fmt(r.report.pathWeightedSuccess), fmt(r.report.pathWeightedGoalCondition), fmt(r.gap()),
                        fmt(r.report.meanAgentLength, 2), fmt(r.report.meanBacktracks, 2)});
      json j = r.report.to_json();
      j["max_backtracks"] = r.budget;
      body.push_back(j);
    }
    write_report(p.reports(), "sweep_bt_" + split, t, report_body(ctx, json{{"rows", body}}), ctx.cfg.fingerprint());
    out(ctx) << "sweep_bt_" << split << "\n" << t.text() << "\n";
    res.push_back(std::move(s));
  }
  return res;
}

std::vector<CurvePoint> cmd_curves(const Context& ctx, const std::vector<double>& fractions,
                                   const std::vector<InputConfig>& inputs) {
  ctx.cfg.validate();
  const Paths p{ctx.cfg.outDir};
  const auto& fs = fractions.empty() ? ctx.cfg.curveFractions : fractions;
  const auto& is = inputs.empty() ? ctx.cfg.curveInputs : inputs;
  std::vector<TrainInstance> unseen;
  for (auto& x : read_checked_dataset(ctx))
    if (x.split == Split::UnseenEval) unseen.push_back(std::move(x));
  std::vector<CurvePoint> pts;
  for (InputConfig in : is) {
    for (double f : fs) {
      cmd_train(ctx, TrainArgs{f, in, true, ""});
      const ModelParams<float> m = load_checked_model(ctx, f, in);
      for (const auto& pt : eval_stepwise(m, unseen, in, f, ctx.jobs)) pts.push_back(pt);
    }
  }
  json body = json::array();
  for (const auto& pt : pts)
    body.push_back({{"input_config", input_config_name(pt.inputConfig)},
                    {"fraction", pt.dataFraction},
                    {"sub_problem", subproblem_name(pt.subProblem)},
                    {"head", HeadAccuracy::name(pt.head)},
                    {"count", pt.count},
                    {"accuracy", pt.accuracy}});
  const Table t = curve_table(pts);
  write_report(p.reports(), "curves", t, report_body(ctx, json{{"points", body}}), ctx.cfg.fingerprint());
  out(ctx) << "curves\n" << t.text() << "\n";
  return pts;
}

std::vector<ReplayVerdict> cmd_replay(const std::string& traceFile, std::ostream* log) {
  std::ifstream in(traceFile);
  if (!in) throw std::runtime_error("cannot open " + traceFile);
  std::vector<ReplayVerdict> out;
  for (const auto& t : read_traces(in)) {
    ReplayVerdict v{t.episode, replay_trace(t)};
    if (log) {
      *log << "episode " << t.episode << ": ";
      if (v.divergence) {
        *log << "diverges at primitive action " << *v.divergence << "\n";
      } else {
        *log << "reproduces\n";
      }
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace hiertask
