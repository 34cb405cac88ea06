#include <gtest/gtest.h>

#include <algorithm>

#include "hiertask/detector.hpp"

using namespace hiertask;

namespace {

WorldState room() {
  WorldState s;
  for (int y = 0; y < kGridSize; ++y)
    for (int x = 0; x < kGridSize; ++x)
      s.grid.at({x, y}) = (x == 0 || y == 0 || x == kGridSize - 1 || y == kGridSize - 1) ? CellKind::Wall
                                                                                        : CellKind::Free;
  s.agent = Pose{5, 5, Rot::N, 0};
  return s;
}

int add(WorldState& s, Obj cls, Cell c, std::optional<int> parent = std::nullopt) {
  ObjectInstance o;
  o.id = static_cast<int>(s.objects.size());
  o.cls = cls;
  o.cell = c;
  o.parent = parent;
  if (!is_movable(cls)) s.grid.at(c) = CellKind::Furniture;
  s.objects.push_back(o);
  return o.id;
}

// Ten visible objects: three counters with two items each, plus a shelf.
WorldState crowded() {
  WorldState s = room();
  const Obj items[] = {Obj::Mug, Obj::Cup, Obj::Apple, Obj::Egg, Obj::Book, Obj::Pencil};
  int k = 0;
  for (int x : {4, 5, 6}) {
    const int c = add(s, Obj::CounterTop, {x, 4});
    add(s, items[k++], {x, 4}, c);
    add(s, items[k++], {x, 4}, c);
  }
  add(s, Obj::Shelf, {5, 3});
  return s;
}

}  // namespace

TEST(Observe, NoiselessSingleMug) {
  WorldState s = room();
  const int counter = add(s, Obj::CounterTop, {7, 7});  // out of view
  const int mug = add(s, Obj::Mug, {5, 4});
  (void)counter;
  Rng rng(1);
  const VisualObs obs = observe(s, NoiseConfig::none(), rng);
  ASSERT_EQ(obs.detections.size(), 1u);
  EXPECT_EQ(obs.detections[0].classLabel, Obj::Mug);
  EXPECT_EQ(obs.detections[0].groundTruthRef, mug);
}

TEST(Observe, MissEverything) {
  NoiseConfig n;
  n.pMiss = 1.0;
  Rng rng(2);
  EXPECT_TRUE(observe(crowded(), n, rng).detections.empty());
}

TEST(Observe, TopKIsHighestConfidence) {
  const WorldState s = crowded();
  ASSERT_EQ(visible_objects(s).size(), 10u);
  NoiseConfig all = NoiseConfig::none();
  all.topK = 100;
  Rng r1(9), r2(9);
  VisualObs full = observe(s, all, r1);
  const VisualObs top = observe(s, NoiseConfig::none(), r2);
  ASSERT_EQ(full.detections.size(), 10u);
  std::vector<Detection> oracle = full.detections;
  std::stable_sort(oracle.begin(), oracle.end(), [](const Detection& a, const Detection& b) {
    return a.confidence != b.confidence ? a.confidence > b.confidence : *a.groundTruthRef < *b.groundTruthRef;
  });
  oracle.resize(8);
  EXPECT_EQ(top.detections, oracle);
}

TEST(Observe, NoiselessMatchesVisibleSet) {
  for (uint32_t seed = 0; seed < 20; ++seed) {
    TaskSpec t;
    t.type = TaskType::CoolAndPlace;
    t.target = Obj::Potato;
    t.receptacle = Obj::Shelf;
    WorldState s = reset({seed % 4, seed}, t);
    for (int r = 0; r < 4; ++r) {
      NoiseConfig n = NoiseConfig::none();
      n.topK = 64;
      Rng rng(seed);
      const VisualObs obs = observe(s, n, rng);
      std::vector<int> ids;
      for (const auto& d : obs.detections) {
        ids.push_back(*d.groundTruthRef);
        EXPECT_EQ(d.classLabel, s.object(*d.groundTruthRef).label());
      }
      std::sort(ids.begin(), ids.end());
      EXPECT_EQ(ids, visible_objects(s));
      apply_nav(s, NavType::RotateRight);
    }
  }
}

TEST(Observe, InvariantsUnderNoise) {
  const WorldState s = crowded();
  NoiseConfig n = NoiseConfig::standard();
  n.pMisclass = 0.5;
  Rng rng(3);
  int corrupted = 0;
  for (int i = 0; i < 200; ++i) {
    const VisualObs obs = observe(s, n, rng);
    EXPECT_LE(obs.detections.size(), static_cast<size_t>(n.topK));
    for (size_t k = 0; k < obs.detections.size(); ++k) {
      const Detection& d = obs.detections[k];
      EXPECT_GT(d.confidence, kConfidenceThreshold);
      EXPECT_LE(d.confidence, 1.0);
      EXPECT_LT(d.box.x1, d.box.x2);
      EXPECT_LT(d.box.y1, d.box.y2);
      EXPECT_GE(d.box.x1, 0.0);
      EXPECT_LE(d.box.y2, 1.0);
      if (k) EXPECT_GE(obs.detections[k - 1].confidence, d.confidence);
      ASSERT_TRUE(d.groundTruthRef.has_value());
      const Obj truth = s.object(*d.groundTruthRef).label();
      if (d.classLabel != truth) {
        ++corrupted;
        EXPECT_EQ(is_movable(d.classLabel), is_movable(truth));
      }
    }
  }
  EXPECT_GT(corrupted, 0);
}

TEST(Observe, SeededDeterminism) {
  const WorldState s = crowded();
  Rng a(77), b(77);
  EXPECT_EQ(observe(s, NoiseConfig::standard(), a), observe(s, NoiseConfig::standard(), b));
}

TEST(Observe, MissDrawsDoNotShiftLaterObjects) {
  // Raising pMiss only removes detections; surviving ones are unchanged.
  const WorldState s = crowded();
  NoiseConfig lo = NoiseConfig::none(), hi = NoiseConfig::none();
  lo.topK = hi.topK = 64;
  hi.pMiss = 0.5;
  Rng a(5), b(5);
  const VisualObs all = observe(s, lo, a);
  const VisualObs some = observe(s, hi, b);
  for (const auto& d : some.detections)
    EXPECT_NE(std::find(all.detections.begin(), all.detections.end(), d), all.detections.end());
}

TEST(PositionVector, Examples) {
  Detection d;
  d.box = {0, 0, 1, 1};
  d.confidence = 0.9;
  PositionVector expected;
  expected << 0, 0, 1, 1, 1, 1, 0.9;
  EXPECT_TRUE(position_vector(d).isApprox(expected));
  d.box = {0.2, 0.2, 0.4, 0.6};
  d.confidence = 0.5;
  const PositionVector v = position_vector(d);
  EXPECT_NEAR(v(4), 0.2, 1e-12);
  EXPECT_NEAR(v(5), 0.4, 1e-12);
  EXPECT_DOUBLE_EQ(v(6), 0.5);
  EXPECT_DOUBLE_EQ(v(4), v(2) - v(0));
  EXPECT_DOUBLE_EQ(v(5), v(3) - v(1));
}

TEST(Ground, IndexSemantics) {
  WorldState s = room();
  const int mug = add(s, Obj::Mug, {5, 4});
  Rng rng(1);
  const VisualObs obs = observe(s, NoiseConfig::none(), rng);
  EXPECT_FALSE(ground(obs, 0).has_value());
  EXPECT_EQ(ground(obs, 1), mug);
  EXPECT_THROW(ground(obs, 2), GroundingIndexError);
  EXPECT_THROW(ground(obs, -1), GroundingIndexError);
}

TEST(NoiseConfig, Validation) {
  NoiseConfig n;
  n.pMiss = 1.5;
  EXPECT_THROW(n.validate(), std::invalid_argument);
  EXPECT_NO_THROW(NoiseConfig::standard().validate());
}
