#include "hiertask/detector.hpp"

#include <algorithm>

namespace hiertask {

void NoiseConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(pMiss) || !prob(pMisclass) || !prob(trueConfMin) || !prob(falseConfMin) || !prob(falseConfMax))
    throw std::invalid_argument("noise probabilities must lie in [0, 1]");
  if (trueConfMin < kConfidenceThreshold)
    throw std::invalid_argument("true-class confidence floor must not be below the detection threshold");
  if (falseConfMax < falseConfMin) throw std::invalid_argument("falseConfMax < falseConfMin");
  if (topK < 1) throw std::invalid_argument("topK must be positive");
}

namespace {

struct Center {
  double cx, cy, w, h;
};

Cell rel(const Pose& p, Cell c) {
  const Cell fwd = facing_cell(Pose{0, 0, p.rot, 0});
  const Cell right = facing_cell(Pose{0, 0, rotate_right(p.rot), 0});
  const int dx = c.x - p.x, dy = c.y - p.y;
  return {dx * fwd.x + dy * fwd.y, dx * right.x + dy * right.y};  // (forward, lateral)
}

Center center_of(const WorldState& s, int id) {
  const ObjectInstance& o = s.objects[id];
  const Cell r = rel(s.agent, o.cell);
  const double scale = 1.0 / (std::max(r.x, 0) + 1.0);
  if (!o.parent) {
    Center c{0.5 + 0.6 * r.y * scale, 0.55 + 0.25 * scale + s.agent.horizon / 300.0, 0.5 * scale, 0.4 * scale};
    if (o.cls == Obj::Faucet) c = {c.cx, c.cy - 0.2 * scale, 0.15 * scale, 0.1 * scale};
    return c;
  }
  const Center p = center_of(s, *o.parent);
  std::vector<int> siblings;
  for (const auto& q : s.objects)
    if (q.parent == o.parent) siblings.push_back(q.id);
  const auto slot = std::find(siblings.begin(), siblings.end(), id) - siblings.begin();
  const double spread = 0.5 * p.w / std::max<double>(1.0, static_cast<double>(siblings.size()));
  return {p.cx + (static_cast<double>(slot) - (siblings.size() - 1) / 2.0) * spread, p.cy - 0.3 * p.h,
          0.3 * p.w, 0.35 * p.h};
}

std::vector<Obj> confusion_set(Obj label) {
  std::vector<Obj> out;
  const bool movable = is_movable(label);
  for (int i = 0; i < kNumLabels; ++i) {
    const Obj o = obj_from_index(i);
    if (o != label && is_movable(o) == movable) out.push_back(o);
  }
  return out;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

VisualObs observe(const WorldState& state, const NoiseConfig& noise, Rng& rng) {
  struct Candidate {
    Detection det;
    int id;
  };
  std::vector<Candidate> cands;
  for (int id : visible_objects(state)) {
    // fixed number of draws per object keeps streams aligned across noise levels
    const double uMiss = rng.uniform01();
    const double uMis = rng.uniform01();
    const uint64_t uLabel = rng.next();
    std::array<double, 4> jitter{};
    for (double& j : jitter) j = rng.uniform(-0.02, 0.02);
    const double uConf = rng.uniform01();

    if (uMiss < noise.pMiss) continue;
    const ObjectInstance& o = state.objects[id];
    Detection d;
    d.groundTruthRef = id;
    d.classLabel = o.label();
    if (uMis < noise.pMisclass) {
      const auto conf = confusion_set(d.classLabel);
      d.classLabel = conf[uLabel % conf.size()];
      d.confidence = noise.falseConfMin + (noise.falseConfMax - noise.falseConfMin) * uConf;
    } else {
      d.confidence = noise.trueConfMin + (1.0 - noise.trueConfMin) * uConf;
    }
    if (!(d.confidence > kConfidenceThreshold)) continue;
    const Center c = center_of(state, id);
    double x1 = clamp01(c.cx - c.w / 2 + jitter[0]);
    double y1 = clamp01(c.cy - c.h / 2 + jitter[1]);
    double x2 = clamp01(c.cx + c.w / 2 + jitter[2]);
    double y2 = clamp01(c.cy + c.h / 2 + jitter[3]);
    if (x2 - x1 < 1e-3) x1 = std::max(0.0, x2 - 1e-3), x2 = x1 + 1e-3;
    if (y2 - y1 < 1e-3) y1 = std::max(0.0, y2 - 1e-3), y2 = y1 + 1e-3;
    d.box = {x1, y1, x2, y2};
    cands.push_back({d, id});
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.det.confidence != b.det.confidence) return a.det.confidence > b.det.confidence;
    return a.id < b.id;
  });
  VisualObs obs;
  for (size_t i = 0; i < cands.size() && static_cast<int>(i) < noise.topK; ++i)
    obs.detections.push_back(cands[i].det);
  return obs;
}

PositionVector position_vector(const Detection& d) {
  PositionVector v;
  v << d.box.x1, d.box.y1, d.box.x2, d.box.y2, d.box.x2 - d.box.x1, d.box.y2 - d.box.y1, d.confidence;
  return v;
}

std::optional<int> ground(const VisualObs& obs, int idx) {
  if (idx < 0 || idx > static_cast<int>(obs.detections.size()))
    throw GroundingIndexError("grounding index " + std::to_string(idx) + " out of range");
  if (idx == 0) return std::nullopt;
  return obs.detections[static_cast<size_t>(idx - 1)].groundTruthRef;
}

}  // namespace hiertask
