#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace bonekin {

struct GeneratorConfig {
  int actors = 6;
  int videos_per_actor = 4;
  int frames = 800;           // T per video
  double length_jitter = 0.1;  // per-actor bone-length jitter, +-10%
  int motion_sinusoids = 3;   // per spherical angle
  double motion_freq_max = 0.4;  // Hz at the nominal 50 fps
  double noise_sigma = 0.005;    // 2D noise, normalized units
  double p_occ = 0.05;           // per-joint per-frame occlusion probability
  int width = 1000;
  int height = 1000;
  uint64_t seed = 7;
};

struct TrainConfig {
  double lambda_d = 0.02;
  double lambda_l = 0.05;
  double lambda_j = 1.0;
  double lambda_js = 0.1;
  double gamma = 10.0;
  int l = 50;
  int batch = 64;
  int d = 27;
  int s = 3;
  int num_subnets = 2;
  int channels = 128;       // o
  int length_blocks = 2;    // r
  double dropout = 0.25;
  double lr = 1e-3;
  double lr_decay = 0.95;   // per epoch
  int epochs = 3;
  int steps_per_epoch = 0;  // 0 -> one pass over the training frames
  uint64_t seed = 1;
  std::string composition = "analytic";  // analytic | heads
  std::string model = "anatomy";         // anatomy | direct (joint regression)
  std::string strategy = "random";  // random | causal-random | firstframe | consecutive
  int strategy_m = 50;  // M
  bool causal = false;
  bool vis_fusion = true;
  bool augment = true;
  bool attention = true;
  int val_actors = 2;
  int eval_stride = 1;
};

struct CliConfig {
  GeneratorConfig generator;
  TrainConfig train;
};

// Loads a JSON config file ({"generator": {...}, "train": {...}}, both
// sections optional), then applies key=value overrides using dotted paths
// (e.g. "train.l=10"). Unknown or ill-typed keys raise ConfigError.
CliConfig load_config(const std::string& path,
                      const std::map<std::string, std::string>& overrides = {});

std::string config_to_json(const CliConfig& cfg);
std::string config_hash(const TrainConfig& cfg);

}  // namespace bonekin
