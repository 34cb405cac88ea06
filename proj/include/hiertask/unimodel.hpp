#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "hiertask/detector.hpp"
#include "hiertask/expert.hpp"

namespace hiertask {

// ============================================================================
// Hyperparameters and input configuration
// ============================================================================

struct Hyperparams {
  int d = 64;
  int layers = 2;
  int heads = 4;
  int ffn = 128;
  int maxLen = 128;
  int topK = kDefaultTopK;
  double lr = 3e-3;
  double warmup = 0.05;  // fraction of all optimizer steps
  int batch = 32;
  int epochs = 10;
  uint64_t seed = 1;
  double clip = 1.0;
  double instructionDropout = 0.1;  // replace I_i by G during training

  void validate() const;
  bool operator==(const Hyperparams&) const = default;
};

enum class InputConfig : uint8_t { Full, NoVision, NoLanguage, NoHistory };
std::string_view input_config_name(InputConfig c);
std::optional<InputConfig> input_config_from_name(std::string_view s);

// ============================================================================
// Tokens
// ============================================================================

/// Closed word vocabulary: special tokens followed by vocabulary_words().
class Vocab {
 public:
  static const Vocab& get();

  int id(std::string_view word) const;  // unknown words map to kUnk
  int size() const { return static_cast<int>(words_.size()); }
  const std::string& word(int id) const { return words_.at(static_cast<size_t>(id)); }
  uint64_t hash() const { return hash_; }

  static constexpr int kClsSubGoal = 0;
  static constexpr int kClsNav = 1;
  static constexpr int kClsManip = 2;
  static constexpr int kSep = 3;
  static constexpr int kUnk = 4;

 private:
  Vocab();
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  uint64_t hash_ = 0;
};

enum class TokenKind : uint8_t { Word, Predicate, Vision, Posture, Separator };
enum class Segment : uint8_t { Language, Current, History, Posture, Vision };
inline constexpr int kNumSegments = 5;
inline constexpr int kMaxBag = 8;
inline constexpr int kPositionFeatures = 7;

/// One input position. The embedding is the sum of the word embeddings in
/// `words`, plus the position projection (vision) or posture embeddings
/// (posture), plus segment and, for non-vision tokens, position embeddings.
struct Token {
  TokenKind kind = TokenKind::Word;
  Segment segment = Segment::Language;
  int8_t nWords = 0;
  std::array<int16_t, kMaxBag> words{};
  int16_t position = -1;  // -1 for vision tokens
  uint8_t rot = 0;
  uint8_t horizon = 0;  // horizon index
  std::array<float, kPositionFeatures> feat{};
};

struct TokenSeq {
  SubProblem subProblem = SubProblem::SubGoalPlanning;
  std::vector<Token> tokens;
  int visionStart = 0;
  int nVision = 0;
  int truncated = 0;  // tokens dropped to fit maxLen
  int length() const { return static_cast<int>(tokens.size()); }
};

TokenSeq encode_subgoal_input(const std::string& goal, const std::vector<SubGoal>& history, const VisualObs& obs,
                              Rot rot, int horizon, const Hyperparams& hp, InputConfig cfg = InputConfig::Full);
TokenSeq encode_nav_input(const std::string& instruction, const SubGoal& sg, const std::vector<NavType>& history,
                          const VisualObs& obs, Rot rot, int horizon, const Hyperparams& hp,
                          InputConfig cfg = InputConfig::Full);
TokenSeq encode_manip_input(const std::string& instruction, const SubGoal& sg,
                            const std::vector<ManipAction>& history, const VisualObs& obs, Rot rot, int horizon,
                            const Hyperparams& hp, InputConfig cfg = InputConfig::Full);

/// Encodes a training instance; `instructionOverride` replaces I_i (used for
/// goal-only execution and instruction dropout).
TokenSeq encode_instance(const TrainInstance& x, const Hyperparams& hp, InputConfig cfg = InputConfig::Full,
                         const std::string* instructionOverride = nullptr);

/// Word ids whose embeddings sum to the predicate representation.
std::vector<int> predicate_words(std::string_view symbol);

// ============================================================================
// Parameters
// ============================================================================

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct LayerBlocks {
  int ln1g, ln1b, wq, bq, wk, bk, wv, bv, wo, bo, ln2g, ln2b, w1, b1, w2, b2;
};

/// Named dense blocks inside the flat parameter vector.
struct ParamLayout {
  struct Block {
    std::string name;
    int rows = 0;
    int cols = 0;
    Eigen::Index offset = 0;
    Eigen::Index size() const { return static_cast<Eigen::Index>(rows) * cols; }
  };
  std::vector<Block> blocks;
  Eigen::Index total = 0;

  int wordEmb, posEmb, segEmb, rotEmb, horEmb, visW, visB;
  std::vector<LayerBlocks> layers;
  int lnfg, lnfb;
  int sgTypeW, sgTypeB, sgArgW, sgArgB, actTypeW, actTypeB, actArgW, actArgB, ptrW, ptrU, ptrB;

  ParamLayout() = default;
  ParamLayout(const Hyperparams& hp, int vocabSize);
  int find(std::string_view name) const;
};

template <typename Scalar>
struct ModelParams {
  Hyperparams hp;
  int vocabSize = 0;
  ParamLayout layout;
  VectorX<Scalar> theta;

  Eigen::Map<MatrixX<Scalar>> block(int b) {
    const auto& k = layout.blocks[static_cast<size_t>(b)];
    return {theta.data() + k.offset, k.rows, k.cols};
  }
  Eigen::Map<const MatrixX<Scalar>> block(int b) const {
    const auto& k = layout.blocks[static_cast<size_t>(b)];
    return {theta.data() + k.offset, k.rows, k.cols};
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.hp = hp;
    out.vocabSize = vocabSize;
    out.layout = layout;
    out.theta = theta.template cast<Other>();
    return out;
  }
};

template <typename Scalar>
ModelParams<Scalar> init_params(const Hyperparams& hp, int vocabSize, uint64_t seed);

// ============================================================================
// Forward / loss / gradient
// ============================================================================

template <typename Scalar>
struct HeadLogits {
  VectorX<Scalar> sgType;   // kNumSubGoalTypes
  VectorX<Scalar> sgArg;    // kNumArgs
  VectorX<Scalar> actType;  // kNumActTypes; the invalid family is -inf
  VectorX<Scalar> actArg;   // kNumArgs
  VectorX<Scalar> mask;     // 1 + nVision; index 0 is the none slot
};

struct Labels {
  int sgType = -1;
  int sgArg = -1;
  int actType = -1;
  int actArg = -1;
  int mask = -1;
};
Labels labels_of(const TrainInstance& x);

class LabelError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

template <typename Scalar>
std::vector<HeadLogits<Scalar>> forward(const ModelParams<Scalar>& p, const std::vector<const TokenSeq*>& batch);
template <typename Scalar>
HeadLogits<Scalar> forward(const ModelParams<Scalar>& p, const TokenSeq& seq);

/// Sum of cross-entropies over the heads active for the sub-problem.
template <typename Scalar>
Scalar loss(const HeadLogits<Scalar>& logits, const Labels& y, SubProblem sp);

/// Mean loss over the batch; when `grad` is non-null it receives the exact
/// gradient of that mean with respect to theta.
template <typename Scalar>
Scalar loss_and_grad(const ModelParams<Scalar>& p, const std::vector<const TokenSeq*>& batch,
                     const std::vector<Labels>& labels, VectorX<Scalar>* grad);

// ============================================================================
// Prediction
// ============================================================================

struct ManipPrediction {
  ManipAction action;
  int maskIndex = 0;
};

/// Lowest index among the maxima.
template <typename Scalar>
int argmax(const VectorX<Scalar>& v);

SubGoal predict_subgoal(const HeadLogits<float>& l);
NavType predict_nav(const HeadLogits<float>& l, const std::array<bool, kNumNavTypes>& disallowed = {});
ManipPrediction predict_manip(const HeadLogits<float>& l);

SubGoal predict_subgoal(const ModelParams<float>& p, const TokenSeq& seq);
NavType predict_nav(const ModelParams<float>& p, const TokenSeq& seq,
                    const std::array<bool, kNumNavTypes>& disallowed = {});
ManipPrediction predict_manip(const ModelParams<float>& p, const TokenSeq& seq);

// ============================================================================
// Teacher-forced accuracy
// ============================================================================

struct HeadAccuracy {
  std::array<int64_t, 6> correct{};
  std::array<int64_t, 6> total{};
  enum Head { SgType, SgArg, NavType_, ManipType_, ManipArg, Mask };
  static std::string_view name(int head);
  double acc(int head) const { return total[head] ? static_cast<double>(correct[head]) / total[head] : 0.0; }
  /// Teacher-forced accuracy per head; an instance of a sub-problem counts
  /// as correct on every head that is active for it.
  void add(const HeadLogits<float>& l, const Labels& y, SubProblem sp);
  void merge(const HeadAccuracy& o);
  bool all_at_least(double a) const;
};

HeadAccuracy evaluate_accuracy(const ModelParams<float>& p, const std::vector<TrainInstance>& data,
                               InputConfig cfg = InputConfig::Full, int jobs = 1);

// ============================================================================
// Training and checkpoints
// ============================================================================

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamState {
  VectorX<float> m, v;
  int64_t step = 0;
};

struct EpochLog {
  int epoch = 0;
  double meanLoss = 0;
  HeadAccuracy seenVal;
  double lr = 0;
};

struct TrainOptions {
  std::string outDir;  // empty: no checkpoint files
  std::string fingerprint;
  InputConfig inputConfig = InputConfig::Full;
  std::string resumeFrom;  // checkpoint to continue from
  int stopAfterEpoch = -1;  // stop early (used to test resume)
  std::function<void(const EpochLog&)> onEpoch;
};

struct TrainResult {
  ModelParams<float> best;
  ModelParams<float> last;
  int bestEpoch = -1;
  double bestNavAccuracy = -1;
  std::vector<EpochLog> log;
};

/// Learning rate at optimizer step `step` (0-based) of `total`.
double schedule_lr(const Hyperparams& hp, int64_t step, int64_t total);

TrainResult train(const std::vector<TrainInstance>& train, const std::vector<TrainInstance>& seenVal,
                  const Hyperparams& hp, const TrainOptions& opt = {});

struct CheckpointMeta {
  Hyperparams hp;
  uint64_t vocabHash = 0;
  std::string fingerprint;
  int epoch = 0;
  int bestEpoch = -1;
  double bestNavAccuracy = -1;
  InputConfig inputConfig = InputConfig::Full;
};

void save_checkpoint(const std::string& path, const ModelParams<float>& p, const CheckpointMeta& meta,
                     const AdamState* adam = nullptr);
/// Rejects files written with a different vocabulary.
ModelParams<float> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr,
                                   AdamState* adam = nullptr);

}  // namespace hiertask
