#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hiertask/common.hpp"
#include "hiertask/gridkitchen.hpp"

namespace hiertask {

inline constexpr int kDefaultTopK = 8;
inline constexpr double kConfidenceThreshold = 0.4;

struct Box {
  double x1 = 0, y1 = 0, x2 = 1, y2 = 1;
  bool operator==(const Box&) const = default;
};

struct Detection {
  Obj classLabel = Obj::None;
  Box box;
  double confidence = 1.0;
  std::optional<int> groundTruthRef;
  bool operator==(const Detection&) const = default;
};

struct VisualObs {
  std::vector<Detection> detections;  // descending confidence, at most K
  bool operator==(const VisualObs&) const = default;
};

/// Detector imperfection model. True-class confidences are drawn from
/// [trueConfMin, 1]; corrupted labels from [falseConfMin, falseConfMax].
struct NoiseConfig {
  double pMiss = 0.0;
  double pMisclass = 0.0;
  double trueConfMin = 0.6;
  double falseConfMin = 0.3;
  double falseConfMax = 0.8;
  int topK = kDefaultTopK;

  static NoiseConfig none() { return {}; }
  static NoiseConfig standard() {
    NoiseConfig n;
    n.pMiss = 0.1;
    n.pMisclass = 0.05;
    return n;
  }
  void validate() const;
  bool operator==(const NoiseConfig&) const = default;
};

VisualObs observe(const WorldState& state, const NoiseConfig& noise, Rng& rng);

using PositionVector = Eigen::Matrix<double, 7, 1>;

/// (x1, y1, x2, y2, width, height, confidence)
PositionVector position_vector(const Detection& d);

class GroundingIndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Index 0 is the "no valid grounding" slot; index i > 0 selects detection i-1.
std::optional<int> ground(const VisualObs& obs, int idx);

}  // namespace hiertask
