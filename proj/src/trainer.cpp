#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "hiertask/unimodel.hpp"

namespace hiertask {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'H', 'T', 'C', 'K', 'P', 'T', '0', '1'};
constexpr int kCheckpointVersion = 1;

json hyper_json(const Hyperparams& hp) {
  return {{"d", hp.d},         {"layers", hp.layers},   {"heads", hp.heads},
          {"ffn", hp.ffn},     {"max_len", hp.maxLen},  {"top_k", hp.topK},
          {"lr", hp.lr},       {"warmup", hp.warmup},   {"batch", hp.batch},
          {"epochs", hp.epochs}, {"seed", hp.seed},     {"clip", hp.clip},
          {"instruction_dropout", hp.instructionDropout}};
}

Hyperparams hyper_from_json(const json& j) {
  Hyperparams hp;
  hp.d = j.at("d");
  hp.layers = j.at("layers");
  hp.heads = j.at("heads");
  hp.ffn = j.at("ffn");
  hp.maxLen = j.at("max_len");
  hp.topK = j.at("top_k");
  hp.lr = j.at("lr");
  hp.warmup = j.at("warmup");
  hp.batch = j.at("batch");
  hp.epochs = j.at("epochs");
  hp.seed = j.at("seed");
  hp.clip = j.at("clip");
  hp.instructionDropout = j.at("instruction_dropout");
  return hp;
}

void write_floats(std::ofstream& out, const VectorX<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_floats(std::ifstream& in, VectorX<float>& v, Eigen::Index n) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw CheckpointError("truncated checkpoint payload");
}

struct Adam {
  static constexpr float kBeta1 = 0.9f;
  static constexpr float kBeta2 = 0.999f;
  static constexpr float kEps = 1e-8f;

  static void step(VectorX<float>& theta, const VectorX<float>& g, AdamState& s, double lr) {
    ++s.step;
    s.m = kBeta1 * s.m + (1 - kBeta1) * g;
    s.v = kBeta2 * s.v + (1 - kBeta2) * g.cwiseProduct(g);
    const double bc1 = 1 - std::pow(static_cast<double>(kBeta1), static_cast<double>(s.step));
    const double bc2 = 1 - std::pow(static_cast<double>(kBeta2), static_cast<double>(s.step));
    const float a = static_cast<float>(lr / bc1);
    const float sq = static_cast<float>(1.0 / std::sqrt(bc2));
    theta.array() -= a * s.m.array() / (s.v.array().sqrt() * sq + kEps);
  }
};

struct Batch {
  std::vector<size_t> items;
};

std::vector<Batch> epoch_batches(const std::vector<TrainInstance>& data, const Hyperparams& hp, int epoch) {
  Rng rng(derive_seed(hp.seed, static_cast<uint64_t>(epoch), 0x65706f6368ull));
  std::array<std::vector<size_t>, kNumSubProblems> bySp;
  for (size_t i = 0; i < data.size(); ++i) bySp[static_cast<size_t>(data[i].subProblem)].push_back(i);
  std::vector<Batch> out;
  for (auto& idx : bySp) {
    rng.shuffle(idx.begin(), idx.end());
    for (size_t lo = 0; lo < idx.size(); lo += static_cast<size_t>(hp.batch)) {
      Batch b;
      b.items.assign(idx.begin() + static_cast<long>(lo),
                     idx.begin() + static_cast<long>(std::min(idx.size(), lo + static_cast<size_t>(hp.batch))));
      out.push_back(std::move(b));
    }
  }
  rng.shuffle(out.begin(), out.end());
  return out;
}

int64_t batches_per_epoch(const std::vector<TrainInstance>& data, const Hyperparams& hp) {
  std::array<int64_t, kNumSubProblems> n{};
  for (const auto& x : data) ++n[static_cast<size_t>(x.subProblem)];
  int64_t total = 0;
  for (int64_t k : n) total += (k + hp.batch - 1) / hp.batch;
  return total;
}

}  // namespace

double schedule_lr(const Hyperparams& hp, int64_t step, int64_t total) {
  const int64_t warm = std::max<int64_t>(1, static_cast<int64_t>(std::llround(hp.warmup * static_cast<double>(total))));
  if (step < warm) return hp.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  if (total <= warm) return hp.lr;
  return hp.lr * std::max(0.0, static_cast<double>(total - step) / static_cast<double>(total - warm));
}

void save_checkpoint(const std::string& path, const ModelParams<float>& p, const CheckpointMeta& meta,
                     const AdamState* adam) {
  json h;
  h["version"] = kCheckpointVersion;
  h["hyper"] = hyper_json(p.hp);
  h["vocab_hash"] = hex64(meta.vocabHash);
  h["vocab_size"] = p.vocabSize;
  h["fingerprint"] = meta.fingerprint;
  h["epoch"] = meta.epoch;
  h["best_epoch"] = meta.bestEpoch;
  h["best_nav_accuracy"] = meta.bestNavAccuracy;
  h["input_config"] = std::string(input_config_name(meta.inputConfig));
  h["num_params"] = p.theta.size();
  h["adam_step"] = adam ? adam->step : -1;
  const std::string header = h.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    const uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    write_floats(out, p.theta);
    if (adam) {
      write_floats(out, adam->m);
      write_floats(out, adam->v);
    }
    if (!out) throw CheckpointError("write failed for " + path);
  }
  std::filesystem::rename(tmp, path);
}

ModelParams<float> load_checkpoint(const std::string& path, CheckpointMeta* meta, AdamState* adam) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a checkpoint: " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 24)) throw CheckpointError("corrupt checkpoint header");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  const json h = json::parse(header);
  if (h.at("version").get<int>() != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
  if (h.at("vocab_hash").get<std::string>() != hex64(Vocab::get().hash()))
    throw CheckpointError("vocabulary hash mismatch in " + path);
  const Hyperparams hp = hyper_from_json(h.at("hyper"));
  ModelParams<float> p = init_params<float>(hp, h.at("vocab_size").get<int>(), 0);
  if (h.at("num_params").get<Eigen::Index>() != p.layout.total) throw CheckpointError("parameter count mismatch");
  read_floats(in, p.theta, p.layout.total);
  const int64_t adamStep = h.at("adam_step").get<int64_t>();
  if (adam) {
    if (adamStep < 0) throw CheckpointError("checkpoint has no optimizer state");
    read_floats(in, adam->m, p.layout.total);
    read_floats(in, adam->v, p.layout.total);
    adam->step = adamStep;
  }
  if (meta) {
    meta->hp = hp;
    meta->vocabHash = Vocab::get().hash();
    meta->fingerprint = h.at("fingerprint").get<std::string>();
    meta->epoch = h.at("epoch");
    meta->bestEpoch = h.at("best_epoch");
    meta->bestNavAccuracy = h.at("best_nav_accuracy");
    meta->inputConfig = input_config_from_name(h.at("input_config").get<std::string>()).value_or(InputConfig::Full);
  }
  return p;
}

TrainResult train(const std::vector<TrainInstance>& data, const std::vector<TrainInstance>& seenVal,
                  const Hyperparams& hp, const TrainOptions& opt) {
  hp.validate();
  std::array<int, kNumSubProblems> counts{};
  for (const auto& x : data) ++counts[static_cast<size_t>(x.subProblem)];
  for (int c : counts)
    if (c == 0) throw std::invalid_argument("training data lacks a sub-problem");

  const int vocab = Vocab::get().size();
  TrainResult res;
  ModelParams<float> p = init_params<float>(hp, vocab, hp.seed);
  AdamState adam;
  adam.m = VectorX<float>::Zero(p.layout.total);
  adam.v = VectorX<float>::Zero(p.layout.total);
  int firstEpoch = 0;
  if (!opt.resumeFrom.empty()) {
    CheckpointMeta meta;
    p = load_checkpoint(opt.resumeFrom, &meta, &adam);
    if (!(meta.hp == hp)) throw CheckpointError("resume checkpoint was trained with different hyperparameters");
    firstEpoch = meta.epoch + 1;
    res.bestEpoch = meta.bestEpoch;
    res.bestNavAccuracy = meta.bestNavAccuracy;
    if (res.bestEpoch >= 0 && !opt.outDir.empty())
      res.best = load_checkpoint(opt.outDir + "/best.ckpt");
  }

  const int64_t perEpoch = batches_per_epoch(data, hp);
  const int64_t totalSteps = perEpoch * hp.epochs;
  VectorX<float> grad;
  std::vector<TokenSeq> seqs;
  std::vector<const TokenSeq*> ptrs;
  std::vector<Labels> labels;
  for (int epoch = firstEpoch; epoch < hp.epochs; ++epoch) {
    const auto batches = epoch_batches(data, hp, epoch);
    double lossSum = 0;
    double lr = 0;
    for (const Batch& b : batches) {
      seqs.clear();
      labels.clear();
      for (size_t i : b.items) {
        const TrainInstance& x = data[i];
        const bool drop = x.subProblem != SubProblem::SubGoalPlanning && hp.instructionDropout > 0 &&
                          Rng(derive_seed(hp.seed, static_cast<uint64_t>(epoch) << 32 | i, 0x64726f70ull))
                              .bernoulli(hp.instructionDropout);
        seqs.push_back(encode_instance(x, hp, opt.inputConfig, drop ? &x.goal : nullptr));
        Labels y = labels_of(x);
        if (y.mask > seqs.back().nVision) y.mask = 0;
        labels.push_back(y);
      }
      ptrs.clear();
      for (const auto& s : seqs) ptrs.push_back(&s);
      const float l = loss_and_grad(p, ptrs, labels, &grad);
      if (!std::isfinite(l) || !grad.allFinite())
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch));
      const float norm = grad.norm();
      if (norm > hp.clip) grad *= static_cast<float>(hp.clip) / norm;
      lr = schedule_lr(hp, adam.step, totalSteps);
      Adam::step(p.theta, grad, adam, lr);
      lossSum += l * static_cast<double>(b.items.size());
    }

    EpochLog log;
    log.epoch = epoch;
    log.meanLoss = lossSum / static_cast<double>(data.size());
    log.lr = lr;
    if (!seenVal.empty()) log.seenVal = evaluate_accuracy(p, seenVal, opt.inputConfig);
    const double navAcc = seenVal.empty() ? static_cast<double>(epoch) : log.seenVal.acc(HeadAccuracy::NavType_);
    const bool improved = navAcc > res.bestNavAccuracy;
    if (improved) {
      res.bestNavAccuracy = navAcc;
      res.bestEpoch = epoch;
      res.best = p;
    }
    if (!opt.outDir.empty()) {
      std::filesystem::create_directories(opt.outDir);
      CheckpointMeta meta{hp, Vocab::get().hash(), opt.fingerprint, epoch, res.bestEpoch, res.bestNavAccuracy,
                          opt.inputConfig};
      save_checkpoint(opt.outDir + "/epoch_" + std::to_string(epoch) + ".ckpt", p, meta, &adam);
      if (improved) {
        save_checkpoint(opt.outDir + "/best.ckpt", p, meta);
        std::ofstream(opt.outDir + "/best.txt") << "epoch_" << epoch << ".ckpt\n";
      }
    }
    res.log.push_back(log);
    if (opt.onEpoch) opt.onEpoch(log);
    if (opt.stopAfterEpoch >= 0 && epoch >= opt.stopAfterEpoch) break;
  }
  res.last = p;
  if (res.bestEpoch < 0) res.best = p;
  return res;
}

}  // namespace hiertask
