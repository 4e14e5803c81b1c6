#include "bonekin/length_net.hpp"

#include <algorithm>

namespace bonekin {

SampleStrategy parse_strategy(const std::string& name) {
  if (name == "random") return SampleStrategy::kRandom;
  if (name == "causal-random") return SampleStrategy::kCausalRandom;
  if (name == "firstframe") return SampleStrategy::kFirstFrame;
  if (name == "consecutive") return SampleStrategy::kConsecutive;
  throw ConfigError("unknown sampling strategy: " + name);
}

std::string strategy_name(SampleStrategy s) {
  switch (s) {
    case SampleStrategy::kRandom: return "random";
    case SampleStrategy::kCausalRandom: return "causal-random";
    case SampleStrategy::kFirstFrame: return "firstframe";
    case SampleStrategy::kConsecutive: return "consecutive";
  }
  return "?";
}

std::vector<int> sample_frames(int T, int t, const LengthNetConfig& cfg,
                               Rng& rng) {
  if (T < 1 || t < 0 || t >= T)
    throw IndexError("sample_frames: frame index out of range");
  std::vector<int> out;
  switch (cfg.strategy) {
    case SampleStrategy::kRandom:
      out.reserve(static_cast<size_t>(cfg.l));
      for (int i = 0; i < cfg.l; ++i) out.push_back(uniform_int(rng, 0, T - 1));
      break;
    case SampleStrategy::kCausalRandom:
      out.reserve(static_cast<size_t>(cfg.l));
      for (int i = 0; i < cfg.l; ++i) out.push_back(uniform_int(rng, 0, t));
      break;
    case SampleStrategy::kFirstFrame: {
      const int n = std::min(cfg.budget, t + 1);
      for (int i = 0; i < n; ++i) out.push_back(i);
      break;
    }
    case SampleStrategy::kConsecutive: {
      const int n = std::min(cfg.budget, t + 1);
      for (int i = t - n + 1; i <= t; ++i) out.push_back(i);
      break;
    }
  }
  return out;
}

LengthNet::LengthNet(LengthNetConfig cfg, const SkeletonTopology* topo)
    : cfg_(cfg), topo_(topo) {
  if (cfg_.l < 1) throw ConfigError("length net: l must be >= 1");
  if (cfg_.gamma < 0) throw ConfigError("length net: gamma must be >= 0");
}

void LengthNet::init_params(ParameterStore& store, Rng& rng) const {
  const int o = cfg_.channels;
  const int j = topo_->joints();
  auto add_fc_block = [&](const std::string& prefix, int cin, int cout) {
    store.add_uniform(prefix + ".w", {cout, cin}, cin, rng);
    store.add(prefix + ".b", {cout});
    ParamEntry& g = store.add(prefix + ".bn.g", {cout});
    std::fill(g.value.begin(), g.value.end(), 1.0);
    store.add(prefix + ".bn.b", {cout});
  };
  add_fc_block("len.in", 2 * j, o);
  for (int i = 0; i < cfg_.residual_blocks; ++i)
    add_fc_block("len.b" + std::to_string(i), o, o);
  store.add_uniform("len.head.w", {3 * j, o}, o, rng);
  store.add("len.head.b", {3 * j});
  if (cfg_.attention)
    store.add_uniform("len.att.w", {j - 1, 3 * j}, 3 * j, rng);
}

LengthNet::Forward LengthNet::build(Graph& g, int keypoints, int batch, int l,
                                    bool train, uint64_t dropout_seed) const {
  const int j = topo_->joints();
  int seed_counter = 0;
  auto next_seed = [&]() {
    return derive_seed(dropout_seed, 0x1e4,
                       static_cast<uint64_t>(seed_counter++));
  };
  auto fc_bn_relu = [&](const std::string& prefix, int x) {
    const int y = g.affine(x, g.param(prefix + ".w"), g.param(prefix + ".b"));
    const int z = g.batch_norm(y, g.param(prefix + ".bn.g"),
                               g.param(prefix + ".bn.b"), prefix + ".bn", train);
    return g.dropout(g.relu(z), cfg_.dropout, train, next_seed());
  };

  int cur = fc_bn_relu("len.in", keypoints);
  for (int i = 0; i < cfg_.residual_blocks; ++i)
    cur = g.add(fc_bn_relu("len.b" + std::to_string(i), cur), cur);

  Forward fwd;
  fwd.joints = g.affine(cur, g.param("len.head.w"), g.param("len.head.b"));

  // The fusion path is trained only through the attention parameters; the
  // residual network receives gradient solely from the per-frame joint loss.
  const int stopped = g.stop_grad(fwd.joints);
  fwd.lengths = g.bone_lengths(stopped, topo_);
  const int lengths3 = g.reshape(fwd.lengths, {batch, l, j - 1});
  if (cfg_.attention) {
    const int logits = g.affine(stopped, g.param("len.att.w"));
    fwd.attention =
        g.attention_softmax(g.reshape(logits, {batch, l, j - 1}), cfg_.gamma);
    fwd.fused = g.weighted_sum(fwd.attention, lengths3);
  } else {
    fwd.fused = g.mean_frames(lengths3);
  }
  return fwd;
}

PoseSequence augment_video(const PoseSequence& video,
                           const SkeletonTopology& topo, Rng& rng) {
  const int nb = topo.num_bones();
  std::vector<double> factors(static_cast<size_t>(nb));
  for (double& f : factors) f = uniform(rng, 0.8, 1.2);
  for (const auto& [lb, rb] : symmetric_bone_pairs(topo))
    factors[static_cast<size_t>(rb)] = factors[static_cast<size_t>(lb)];

  PoseSequence out;
  out.camera = video.camera;
  out.actor_id = video.actor_id + "-aug";
  out.visibility = video.visibility;
  out.root_world = video.root_world;
  out.poses3d.reserve(video.poses3d.size());
  out.keypoints2d.reserve(video.poses3d.size());
  for (int t = 0; t < video.frames(); ++t) {
    const BoneRepresentation rep = decompose(video.poses3d[static_cast<size_t>(t)], topo);
    std::vector<double> new_lengths(rep.lengths);
    for (int b = 0; b < nb; ++b)
      new_lengths[static_cast<size_t>(b)] *= factors[static_cast<size_t>(b)];
    Pose3D scaled =
        rescale_pose(video.poses3d[static_cast<size_t>(t)], new_lengths, topo);
    out.keypoints2d.push_back(
        project(video.camera, scaled, video.root_world[static_cast<size_t>(t)]));
    out.poses3d.push_back(std::move(scaled));
  }
  return out;
}

}  // namespace bonekin
