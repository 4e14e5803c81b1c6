#pragma once

#include <string>
#include <vector>

#include "bonekin/graph.hpp"

namespace bonekin {

enum class SampleStrategy { kRandom, kCausalRandom, kFirstFrame, kConsecutive };

SampleStrategy parse_strategy(const std::string& name);
std::string strategy_name(SampleStrategy s);

struct LengthNetConfig {
  int l = 50;               // sampled frame count
  int residual_blocks = 2;  // r
  int channels = 128;       // o
  double gamma = 10.0;
  SampleStrategy strategy = SampleStrategy::kRandom;
  int budget = 50;  // M
  bool attention = true;  // false -> plain per-bone mean over frames
  double dropout = 0.25;
};

// Frame indices fed to the length branch for predicting frame t of a T-frame
// video. Random strategies draw with replacement; firstframe/consecutive
// return the full admissible pool when it is smaller than the budget.
std::vector<int> sample_frames(int T, int t, const LengthNetConfig& cfg,
                               Rng& rng);

// Per-frame fully-connected residual network predicting 3D joints, with
// derived bone lengths fused across frames by bone-specific self-attention.
class LengthNet {
 public:
  LengthNet(LengthNetConfig cfg, const SkeletonTopology* topo);

  void init_params(ParameterStore& store, Rng& rng) const;

  struct Forward {
    int joints = -1;      // [B*l, 3j]
    int lengths = -1;     // [B*l, j-1], derived through a gradient stop
    int attention = -1;   // [B, l, j-1] (-1 when attention disabled)
    int fused = -1;       // [B, j-1]
  };
  // keypoints [B*l, 2j] grouped video-major.
  Forward build(Graph& g, int keypoints, int batch, int l, bool train,
                uint64_t dropout_seed) const;

  const LengthNetConfig& config() const { return cfg_; }

 private:
  LengthNetConfig cfg_;
  const SkeletonTopology* topo_;
};

// Bone-length data augmentation: per-bone factors uniform in [0.8, 1.2]
// (left/right symmetric bones share a factor), every frame rescaled and
// reprojected through the video's camera with clean 2D keypoints.
PoseSequence augment_video(const PoseSequence& video,
                           const SkeletonTopology& topo, Rng& rng);

}  // namespace bonekin
