#include <algorithm>

#include "hiertask/unimodel.hpp"

namespace hiertask {

namespace {
constexpr std::array<const char*, 4> kInputConfigNames = {"full", "noVision", "noLanguage", "noHistory"};
}

std::string_view input_config_name(InputConfig c) { return kInputConfigNames[static_cast<int>(c)]; }

std::optional<InputConfig> input_config_from_name(std::string_view s) {
  for (size_t i = 0; i < kInputConfigNames.size(); ++i)
    if (s == kInputConfigNames[i]) return static_cast<InputConfig>(i);
  return std::nullopt;
}

void Hyperparams::validate() const {
  if (d <= 0 || layers <= 0 || heads <= 0 || ffn <= 0 || maxLen <= 0 || topK <= 0 || batch <= 0 || epochs <= 0)
    throw std::invalid_argument("hyperparameters must be positive");
  if (d % heads != 0) throw std::invalid_argument("d must be divisible by heads");
  if (!(warmup > 0 && warmup < 1)) throw std::invalid_argument("warmup fraction must lie in (0, 1)");
  if (!(lr > 0) || !(clip > 0)) throw std::invalid_argument("lr and clip must be positive");
  if (instructionDropout < 0 || instructionDropout > 1)
    throw std::invalid_argument("instruction dropout must lie in [0, 1]");
}

Vocab::Vocab() {
  words_ = {"[CLS_SG]", "[CLS_NAV]", "[CLS_MANIP]", "[SEP]", "[UNK]"};
  for (const auto& w : vocabulary_words()) words_.push_back(w);
  std::string joined;
  for (size_t i = 0; i < words_.size(); ++i) {
    index_.emplace(words_[i], static_cast<int>(i));
    joined += words_[i];
    joined += '\n';
  }
  hash_ = fnv1a64(joined);
}

const Vocab& Vocab::get() {
  static const Vocab v;
  return v;
}

int Vocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> predicate_words(std::string_view symbol) {
  std::vector<int> out;
  for (const auto& w : predicate_phrase(symbol)) out.push_back(Vocab::get().id(w));
  return out;
}

namespace {

struct Builder {
  explicit Builder(const Hyperparams& h) : hp(h) {}

  const Hyperparams& hp;
  std::vector<Token> language;  // CLS + text + SEP
  std::vector<Token> current;   // current sub-goal + SEP (nav/manip only)
  std::vector<Token> history;   // predicates
  Token historySep;
  Token posture;
  std::vector<Token> vision;

  static Token word(int id, Segment seg, TokenKind kind = TokenKind::Word) {
    Token t;
    t.kind = kind;
    t.segment = seg;
    t.nWords = 1;
    t.words[0] = static_cast<int16_t>(id);
    return t;
  }

  static Token bag(const std::vector<int>& ids, Segment seg, TokenKind kind) {
    Token t;
    t.kind = kind;
    t.segment = seg;
    t.nWords = static_cast<int8_t>(std::min<size_t>(ids.size(), kMaxBag));
    for (int i = 0; i < t.nWords; ++i) t.words[static_cast<size_t>(i)] = static_cast<int16_t>(ids[static_cast<size_t>(i)]);
    return t;
  }

  void text(int cls, const std::string& s) {
    language.push_back(word(cls, Segment::Language));
    for (const auto& w : tokenize_text(s)) language.push_back(word(Vocab::get().id(w), Segment::Language));
    language.push_back(word(Vocab::kSep, Segment::Language, TokenKind::Separator));
  }

  void predicate(std::vector<Token>& into, Segment seg, std::string_view type, Obj arg) {
    std::vector<int> ids = predicate_words(type);
    if (arg != Obj::None) {
      const auto a = predicate_words(obj_name(arg));
      ids.insert(ids.end(), a.begin(), a.end());
    }
    into.push_back(bag(ids, seg, TokenKind::Predicate));
  }

  void set_posture(Rot rot, int horizon) {
    posture.kind = TokenKind::Posture;
    posture.segment = Segment::Posture;
    posture.rot = static_cast<uint8_t>(rot);
    posture.horizon = static_cast<uint8_t>(horizon_index(horizon));
  }

  void set_vision(const VisualObs& obs) {
    const size_t n = std::min<size_t>(obs.detections.size(), static_cast<size_t>(hp.topK));
    for (size_t k = 0; k < n; ++k) {
      const Detection& d = obs.detections[k];
      Token t = bag(predicate_words(obj_name(d.classLabel)), Segment::Vision, TokenKind::Vision);
      const PositionVector pv = position_vector(d);
      for (int i = 0; i < kPositionFeatures; ++i) t.feat[static_cast<size_t>(i)] = static_cast<float>(pv(i));
      vision.push_back(t);
    }
  }

  TokenSeq finish(SubProblem sp) {
    TokenSeq seq;
    seq.subProblem = sp;
    historySep = word(Vocab::kSep, Segment::History, TokenKind::Separator);
    auto total = [&] { return language.size() + current.size() + history.size() + 2 + vision.size(); };
    const auto maxLen = static_cast<size_t>(hp.maxLen);
    while (total() > maxLen && !vision.empty()) vision.pop_back(), ++seq.truncated;
    while (total() > maxLen && !history.empty()) history.erase(history.begin()), ++seq.truncated;
    // keep CLS and the closing separator of the language segment
    while (total() > maxLen && language.size() > 2) language.erase(language.end() - 2), ++seq.truncated;
    int16_t pos = 0;
    auto push = [&](Token t) {
      t.position = pos++;
      seq.tokens.push_back(t);
    };
    for (const auto& t : language) push(t);
    for (const auto& t : current) push(t);
    for (const auto& t : history) push(t);
    push(historySep);
    push(posture);
    seq.visionStart = seq.length();
    seq.nVision = static_cast<int>(vision.size());
    for (Token t : vision) {
      t.position = -1;
      seq.tokens.push_back(t);
    }
    return seq;
  }
};

}  // namespace

TokenSeq encode_subgoal_input(const std::string& goal, const std::vector<SubGoal>& history, const VisualObs& obs,
                              Rot rot, int horizon, const Hyperparams& hp, InputConfig cfg) {
  Builder b(hp);
  b.text(Vocab::kClsSubGoal, goal);
  if (cfg != InputConfig::NoHistory)
    for (const auto& sg : history) b.predicate(b.history, Segment::History, subgoal_type_name(sg.type), sg.arg);
  b.set_posture(rot, horizon);
  if (cfg != InputConfig::NoVision) b.set_vision(obs);
  return b.finish(SubProblem::SubGoalPlanning);
}

namespace {

Builder action_builder(int cls, const std::string& instruction, const SubGoal& sg, const Hyperparams& hp,
                       InputConfig cfg) {
  Builder b(hp);
  b.text(cls, cfg == InputConfig::NoLanguage ? std::string() : instruction);
  b.predicate(b.current, Segment::Current, subgoal_type_name(sg.type), sg.arg);
  b.current.push_back(Builder::word(Vocab::kSep, Segment::Current, TokenKind::Separator));
  return b;
}

}  // namespace

TokenSeq encode_nav_input(const std::string& instruction, const SubGoal& sg, const std::vector<NavType>& history,
                          const VisualObs& obs, Rot rot, int horizon, const Hyperparams& hp, InputConfig cfg) {
  Builder b = action_builder(Vocab::kClsNav, instruction, sg, hp, cfg);
  if (cfg != InputConfig::NoHistory)
    for (NavType a : history) b.predicate(b.history, Segment::History, nav_name(a), Obj::None);
  b.set_posture(rot, horizon);
  if (cfg != InputConfig::NoVision) b.set_vision(obs);
  return b.finish(SubProblem::Navigation);
}

TokenSeq encode_manip_input(const std::string& instruction, const SubGoal& sg,
                            const std::vector<ManipAction>& history, const VisualObs& obs, Rot rot, int horizon,
                            const Hyperparams& hp, InputConfig cfg) {
  Builder b = action_builder(Vocab::kClsManip, instruction, sg, hp, cfg);
  if (cfg != InputConfig::NoHistory)
    for (const auto& a : history) b.predicate(b.history, Segment::History, manip_name(a.type), a.arg);
  b.set_posture(rot, horizon);
  if (cfg != InputConfig::NoVision) b.set_vision(obs);
  return b.finish(SubProblem::Manipulation);
}

TokenSeq encode_instance(const TrainInstance& x, const Hyperparams& hp, InputConfig cfg,
                         const std::string* instructionOverride) {
  const std::string& instr = instructionOverride ? *instructionOverride : x.instruction;
  switch (x.subProblem) {
    case SubProblem::SubGoalPlanning:
      return encode_subgoal_input(x.goal, x.sgHistory, x.obs, x.rot, x.horizon, hp, cfg);
    case SubProblem::Navigation:
      return encode_nav_input(instr, x.current, x.navHistory, x.obs, x.rot, x.horizon, hp, cfg);
    case SubProblem::Manipulation:
      return encode_manip_input(instr, x.current, x.manipHistory, x.obs, x.rot, x.horizon, hp, cfg);
  }
  throw std::logic_error("unknown sub-problem");
}

}  // namespace hiertask
