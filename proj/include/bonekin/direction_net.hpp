#pragma once

#include <string>
#include <vector>

#include "bonekin/graph.hpp"

namespace bonekin {

struct DirectionNetConfig {
  int d = 27;           // input frame count, must equal s^m
  int s = 3;            // conv width and stride
  int channels = 128;   // o
  int num_subnets = 2;
  bool visibility_fusion = true;
  bool causal = false;
  double dropout = 0.25;
  int head_dim = 0;  // 0 -> 3*(j-1) bone directions; else custom (e.g. 3j)
};

// Temporal fully-convolutional propagating architecture. Each sub-network
// emits a full prediction; the prediction (gradient-stopped) is lifted and
// temporally duplicated as input to the next sub-network, and every block
// activation is forwarded through gradient-stopped long skip connections.
class DirectionNet {
 public:
  DirectionNet(DirectionNetConfig cfg, const SkeletonTopology* topo);

  void init_params(ParameterStore& store, Rng& rng) const;

  struct Forward {
    std::vector<int> subnet_outputs;  // node ids, each [B, head_dim]
    int final_output = -1;
  };
  // keypoints [B, 2j, d]; visibility [B, j, d] (ignored unless fusion on).
  Forward build(Graph& g, int keypoints, int visibility, bool train,
                uint64_t dropout_seed) const;

  int blocks() const { return m_; }
  int head_dim() const { return head_dim_; }
  const DirectionNetConfig& config() const { return cfg_; }

 private:
  DirectionNetConfig cfg_;
  const SkeletonTopology* topo_;
  int m_ = 0;  // d = s^m
  int head_dim_ = 0;
  std::string pname(int subnet, const std::string& rest) const;
};

}  // namespace bonekin
