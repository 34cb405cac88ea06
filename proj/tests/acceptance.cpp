// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "hiertask/cli.hpp"

using namespace hiertask;
namespace fs = std::filesystem;

namespace {

// tolerances
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-4;
constexpr int kGradConfigs = 24;
constexpr double kMemorizeAcc = 0.99;
constexpr int kMemorizeEpochs = 200;
constexpr double kLadderMargin = 0.02;
constexpr double kNoiselessCeiling = 0.99;
constexpr double kBacktrackRatio = 1.3;
constexpr double kManipAt02 = 0.95;
constexpr double kNoLanguageGap = 0.02;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::pair<std::string, Outcome>> results;
std::ostringstream progress;

void report(const std::string& name, Outcome o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  " << o.detail << std::endl;
  results.push_back({name, std::move(o)});
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string f4(double v) { return fmt(v, 4); }

bool reports_consistent(const MetricsReport& r) {
  return r.pathWeightedSuccess <= r.successRate && r.pathWeightedGoalCondition <= r.goalConditionRate;
}

// ----------------------------------------------------------------------------
// 2: gradient check

Outcome gradient_check(const std::vector<TrainInstance>& pool) {
  std::map<SubProblem, std::vector<const TrainInstance*>> bySp;
  for (const auto& x : pool) bySp[x.subProblem].push_back(&x);
  std::set<std::string> all, covered;
  int checks = 0;
  double worst = 0;
  for (int c = 0; c < kGradConfigs; ++c) {
    Rng rng(derive_seed(4242, static_cast<uint64_t>(c)));
    Hyperparams hp;
    constexpr std::array<int, 4> widths{8, 12, 16, 24};
    hp.d = widths[rng.uniform_int(widths.size())];
    hp.heads = hp.d % 8 == 0 ? 1 << rng.uniform_int(4) : 1 + static_cast<int>(rng.uniform_int(2)) * 3;
    hp.layers = 1 + static_cast<int>(rng.uniform_int(2));
    hp.ffn = 4 + static_cast<int>(rng.uniform_int(12));
    hp.topK = 2 + static_cast<int>(rng.uniform_int(7));
    hp.maxLen = c % 5 == 4 ? 16 : 64;
    ModelParams<double> p = init_params<double>(hp, Vocab::get().size(), static_cast<uint64_t>(c) + 100);
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta(i) += 0.05 * rng.normal();
    const auto& candidates = bySp[static_cast<SubProblem>(c % 3)];
    std::vector<TokenSeq> seqs;
    std::vector<Labels> ys;
    const int n = 1 + static_cast<int>(rng.uniform_int(3));
    for (int i = 0; i < n; ++i) {
      const TrainInstance& x = *candidates[rng.uniform_int(candidates.size())];
      seqs.push_back(encode_instance(x, hp));
      Labels y = labels_of(x);
      if (y.mask > seqs.back().nVision) y.mask = 0;
      ys.push_back(y);
    }
    std::vector<const TokenSeq*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);
    VectorX<double> grad;
    loss_and_grad(p, ptrs, ys, &grad);
    for (const auto& blk : p.layout.blocks) {
      all.insert(blk.name);
      VectorX<double> u = VectorX<double>::Zero(p.theta.size());
      for (Eigen::Index i = 0; i < blk.size(); ++i) u(blk.offset + i) = rng.normal();
      u.normalize();
      ModelParams<double> plus = p, minus = p;
      plus.theta += kGradStep * u;
      minus.theta -= kGradStep * u;
      const double fd = (loss_and_grad<double>(plus, ptrs, ys, nullptr) - loss_and_grad<double>(minus, ptrs, ys, nullptr)) /
                        (2 * kGradStep);
      const double an = grad.dot(u);
      const double scale = std::max(std::abs(an), std::abs(fd));
      if (scale <= 1e-7) {
        if (std::abs(an - fd) > 1e-10) return {false, "config " + std::to_string(c) + " block " + blk.name};
        continue;
      }
      const double rel = std::abs(an - fd) / scale;
      worst = std::max(worst, rel);
      ++checks;
      covered.insert(blk.name);
    }
  }
  int uncovered = 0;
  for (const auto& b : all)
    if (!covered.count(b) && b.find(".bk") == std::string::npos) ++uncovered;
  const bool pass = worst < kGradTol && uncovered == 0;
  return {pass, std::to_string(kGradConfigs) + " configs, " + std::to_string(checks) +
                    " directional checks, max rel err " + fmt(worst, 8) + ", uncovered blocks " +
                    std::to_string(uncovered)};
}

// ----------------------------------------------------------------------------
// 3: memorization

Outcome memorization(const std::vector<TrainInstance>& pool) {
  std::vector<TrainInstance> data;
  std::map<SubProblem, int> n;
  const std::map<SubProblem, int> want{
      {SubProblem::SubGoalPlanning, 15}, {SubProblem::Navigation, 20}, {SubProblem::Manipulation, 15}};
  for (const auto& x : pool)
    if (x.split == Split::Train && n[x.subProblem] < want.at(x.subProblem)) {
      ++n[x.subProblem];
      data.push_back(x);
    }
  Hyperparams hp;
  hp.epochs = kMemorizeEpochs;
  hp.instructionDropout = 0;
  const TrainResult r = train(data, {}, hp);
  const HeadAccuracy acc = evaluate_accuracy(r.last, data);
  double lo = 1;
  for (int h = 0; h < 6; ++h) lo = std::min(lo, acc.acc(h));
  return {lo >= kMemorizeAcc, std::to_string(data.size()) + " instances, " + std::to_string(kMemorizeEpochs) +
                                  " epochs, min head accuracy " + f4(lo)};
}

// ----------------------------------------------------------------------------
// 10: determinism on a reduced configuration

std::map<std::string, std::string> tree_contents(const std::string& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

Outcome determinism(const std::string& base) {
  RunConfig cfg;
  cfg.data.nTrain = 60;
  cfg.data.nSeenEval = 10;
  cfg.data.nUnseenEval = 10;
  cfg.data.nTrainLayouts = 8;
  cfg.data.nUnseenLayouts = 3;
  cfg.hp.epochs = 2;
  cfg.seed = 5;
  cfg.sweepBudgets = {0, 8};
  std::vector<std::map<std::string, std::string>> trees;
  std::vector<std::string> metrics;
  for (int jobs : {1, 1, 3}) {
    Context ctx;
    ctx.cfg = cfg;
    ctx.cfg.outDir = base + "/jobs" + std::to_string(jobs) + "_" + std::to_string(trees.size());
    fs::remove_all(ctx.cfg.outDir);
    ctx.jobs = jobs;
    cmd_gen_data(ctx);
    cmd_train(ctx);
    const auto ev = cmd_eval(ctx);
    cmd_sweep_bt(ctx);
    std::string m;
    for (const auto& e : ev) m += e.metrics.to_json().dump();
    metrics.push_back(m);
    trees.push_back(tree_contents(ctx.cfg.outDir));
  }
  int differing = 0;
  size_t files = trees[0].size();
  for (size_t k = 1; k < trees.size(); ++k) {
    if (trees[k].size() != files) ++differing;
    for (const auto& [path, bytes] : trees[0]) {
      const auto it = trees[k].find(path);
      if (it == trees[k].end() || it->second != bytes) ++differing;
    }
  }
  const bool sameMetrics = metrics[0] == metrics[1] && metrics[0] == metrics[2];
  return {differing == 0 && sameMetrics && files > 0,
          "3 reduced runs (jobs 1, 1, 3): " + std::to_string(files) + " files each, " + std::to_string(differing) +
              " differing, metrics " + (sameMetrics ? "identical" : "differ")};
}

template <typename T>
std::string series(const std::vector<T>& xs, auto&& show) {
  std::string s;
  for (size_t i = 0; i < xs.size(); ++i) s += (i ? " " : "") + show(xs[i]);
  return s;
}

int run() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string base = ACCEPTANCE_DIR;
  fs::create_directories(base);
  const int jobs = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));

  Context ctx;
  ctx.cfg.outDir = base + "/reference";
  ctx.jobs = jobs;
  ctx.log = &progress;
  std::cout << "reference run in " << ctx.cfg.outDir << " (fingerprint " << ctx.cfg.fingerprint() << ", " << jobs
            << " jobs)" << std::endl;

  cmd_gen_data(ctx);
  std::cout << "  data generated (" << fmt(elapsed(t0), 0) << " s)" << std::endl;
  const TrainSummary ts = cmd_train(ctx, TrainArgs{1.0, InputConfig::Full, true, ""});
  std::cout << "  model ready: best epoch " << ts.bestEpoch << ", seen nav accuracy " << f4(ts.bestNavAccuracy) << " ("
            << fmt(elapsed(t0), 0) << " s)" << std::endl;
  std::vector<TrainInstance> pool = read_dataset(Paths{ctx.cfg.outDir}.dataset());
  std::vector<MetricsReport> allReports;

  // 1
  {
    std::vector<Episode> eps = load_split(ctx, "seen");
    for (auto& e : load_split(ctx, "unseen")) eps.push_back(std::move(e));
    const MetricsReport r = compute_metrics(expert_traces(eps), eps);
    allReports.push_back(r);
    const bool pass = r.successRate == 1.0 && r.goalConditionRate == 1.0 && r.pathWeightedSuccess == 1.0 &&
                      r.pathWeightedGoalCondition == 1.0;
    report("1 expert soundness", {pass, std::to_string(r.episodes) + " episodes, SR " + f4(r.successRate) + " GC " +
                                            f4(r.goalConditionRate) + " PLW_SR " + f4(r.pathWeightedSuccess) +
                                            " PLW_GC " + f4(r.pathWeightedGoalCondition)});
  }
  // 2, 3
  report("2 gradient correctness", gradient_check(pool));
  report("3 tiny-data memorization", memorization(pool));

  // 4, 8
  const auto ablation = cmd_ablate(ctx);
  const AblateResult* unseenAbl = nullptr;
  for (const auto& a : ablation) {
    if (a.split == "unseen") unseenAbl = &a;
    for (const auto& r : a.ladder) allReports.push_back(r.report);
    for (const auto& g : a.grounding) allReports.push_back(g.second);
  }
  {
    Context clean = ctx;
    clean.cfg.exec.noise = NoiseConfig::none();
    clean.cfg.exec.oracle = OracleMode::parse("SG,N,GR");
    clean.cfg.evalSplits = {"unseen"};
    const auto ev = cmd_eval(clean, EvalArgs{false, "_noiseless"});
    const MetricsReport& noiseless = ev.front().metrics;
    allReports.push_back(noiseless);
    std::map<std::string, double> sr;
    for (const auto& r : unseenAbl->ladder) sr[r.mode.name()] = r.report.successRate;
    const double none = sr["none"], sgn = sr["SG,N"], sgngr = sr["SG,N,GR"];
    const double gainN = sr["N"] - none, gainSG = sr["SG"] - none;
    const bool pass = none + kLadderMargin <= sgn && sgn <= sgngr && noiseless.successRate >= kNoiselessCeiling &&
                      gainN >= gainSG + kLadderMargin;
    report("4 oracle ladder", {pass, "unseen SR none " + f4(none) + " SG " + f4(sr["SG"]) + " N " + f4(sr["N"]) +
                                         " SG+N " + f4(sgn) + " SG+N+M " + f4(sr["SG,N,M"]) + " SG+N+GR " + f4(sgngr) +
                                         "; noiseless SG+N+GR " + f4(noiseless.successRate) + "; gain N " +
                                         f4(gainN) + " vs SG " + f4(gainSG)});

    std::vector<double> g;
    for (const auto& [miss, r] : unseenAbl->grounding) g.push_back(r.successRate);
    bool mono = g.size() >= 2;
    for (size_t i = 1; i < g.size(); ++i) mono = mono && g[i] <= g[i - 1];
    const bool pass8 = mono && g.front() > g.back();
    report("8 grounding bound", {pass8, "unseen SR with oracle SG+N+M at pMiss " +
                                            series(ctx.cfg.groundingMiss, [](double x) { return fmt(x, 1); }) + ": " +
                                            series(g, f4)});
  }

  // 5
  {
    const auto sweep = cmd_sweep_bt(ctx);
    std::string detail;
    bool pass = true;
    for (const auto& s : sweep) {
      std::map<int, double> sr;
      for (const auto& r : s.rows) {
        sr[r.budget] = r.report.successRate;
        allReports.push_back(r.report);
      }
      const std::vector<int> budgets{0, 2, 4, 8};
      bool mono = true;
      for (size_t i = 1; i < budgets.size(); ++i) mono = mono && sr.at(budgets[i]) >= sr.at(budgets[i - 1]);
      pass = pass && mono;
      detail += s.split + " SR(0,2,4,8) " + f4(sr[0]) + " " + f4(sr[2]) + " " + f4(sr[4]) + " " + f4(sr[8]) + "; ";
      if (s.split == "unseen") {
        pass = pass && sr[8] >= kBacktrackRatio * sr[0];
        detail += "unseen ratio " + fmt(sr[0] > 0 ? sr[8] / sr[0] : 0.0, 3) + "; ";
      }
    }
    report("5 backtracking monotonicity", {pass, detail});
  }

  // 6, 9
  {
    const auto ev = cmd_eval(ctx);
    Context g = ctx;
    g.cfg.exec.instructionsAvailable = false;
    const auto gev = cmd_eval(g, EvalArgs{false, ""});
    std::string d6, d9;
    bool p6 = true, p9 = true;
    for (size_t i = 0; i < ev.size(); ++i) {
      allReports.push_back(ev[i].metrics);
      allReports.push_back(gev[i].metrics);
      const SubgoalTable& t = ev[i].subgoals;
      if (ev[i].split == "unseen") {
        for (size_t k = 1; k < t.gotoSuccess.size(); ++k) p6 = p6 && t.gotoSuccess[k] >= t.gotoSuccess[k - 1];
        p6 = p6 && t.gotoSuccess.back() > t.gotoSuccess.front();
        d6 = "unseen Goto success at retries " + series(t.retries, [](int r) { return std::to_string(r); }) + ": " +
             series(std::vector<double>{t.goto_rate(0), t.goto_rate(1), t.goto_rate(2), t.goto_rate(3), t.goto_rate(4)},
                    f4);
      }
      const double full = ev[i].metrics.successRate, gonly = gev[i].metrics.successRate;
      p9 = p9 && gonly > 0 && gonly <= full;
      d9 += ev[i].split + " SR G-only " + f4(gonly) + " vs full " + f4(full) + "; ";
    }
    report("6 Goto retry curve", {p6, d6});
    report("9 G-only mode", {p9, d9});
  }

  // 7
  {
    const auto pts = cmd_curves(ctx);
    std::map<std::pair<InputConfig, double>, std::array<double, 6>> acc;
    for (const auto& p : pts) acc[{p.inputConfig, p.dataFraction}][static_cast<size_t>(p.head)] = p.accuracy;
    bool pass = true;
    std::string detail = "full manip/nav at";
    for (double f : ctx.cfg.curveFractions) {
      const auto& a = acc.at({InputConfig::Full, f});
      pass = pass && a[HeadAccuracy::ManipType_] >= a[HeadAccuracy::NavType_];
      detail += " " + fmt(f, 2) + ": " + fmt(a[HeadAccuracy::ManipType_], 3) + "/" + fmt(a[HeadAccuracy::NavType_], 3);
    }
    const double m02 = acc.at({InputConfig::Full, 0.2})[HeadAccuracy::ManipType_];
    pass = pass && m02 >= kManipAt02;
    double worstGap = 0;
    for (double f : ctx.cfg.curveFractions) {
      const auto it = acc.find({InputConfig::NoLanguage, f});
      if (it == acc.end()) continue;
      worstGap = std::max(worstGap, std::abs(acc.at({InputConfig::Full, f})[HeadAccuracy::ManipType_] -
                                                 it->second[HeadAccuracy::ManipType_]));
    }
    pass = pass && worstGap <= kNoLanguageGap;
    detail += "; largest |noLanguage - full| manip gap " + fmt(worstGap, 4);
    report("7 learning curves", {pass, detail});
  }

  // 5 (weighted part) is checked over every report produced above
  {
    int bad = 0;
    for (const auto& r : allReports) bad += !reports_consistent(r);
    report("5b weighted <= unweighted", {bad == 0, std::to_string(allReports.size()) + " reports, " +
                                                       std::to_string(bad) + " violations"});
  }

  // 10
  report("10 determinism", determinism(base + "/determinism"));

  int failed = 0;
  for (const auto& [n, o] : results) failed += !o.pass;
  std::cout << results.size() - static_cast<size_t>(failed) << "/" << results.size() << " criteria passed in "
            << fmt(elapsed(t0), 0) << " s" << std::endl;
  std::ofstream(base + "/acceptance_log.txt") << progress.str();
  return failed ? 1 : 0;
}

}  // namespace

int main() {
  try {
    return run();
  } catch (const std::exception& e) {
    std::cout << "FAIL  acceptance run aborted: " << e.what() << std::endl;
    return 1;
  }
}
