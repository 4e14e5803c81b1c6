#pragma once

#include <vector>

#include "bonekin/config.hpp"
#include "bonekin/rng.hpp"
#include "bonekin/skeleton.hpp"

namespace bonekin {

// Base bone-length table (mm) for the default 17-joint layout, ordered like
// topo.bones.
std::vector<double> base_length_table(const SkeletonTopology& topo);

// Per-actor lengths: base * (1 + u), u uniform in [-jitter, +jitter] with
// left/right symmetric bones sharing one draw.
std::vector<double> generate_actor(const GeneratorConfig& cfg,
                                   const SkeletonTopology& topo, Rng& rng);

// One video for one actor: per-bone unit directions follow smoothly varying
// spherical angles (sums of random sinusoids), so every frame composes from
// the same constant length vector. The root follows a slow random walk in
// front of a pinhole camera; 2D keypoints are the exact projection plus
// Gaussian noise, with occluded joints (probability p_occ) getting 5x noise
// and low visibility scores.
PoseSequence generate_video(const std::vector<double>& lengths,
                            const GeneratorConfig& cfg,
                            const SkeletonTopology& topo, int actor_index,
                            int video_index);

// Full dataset: `actors` actors ("actor0", ...) with `videos_per_actor`
// videos each. Every video owns an rng sub-stream keyed by
// (seed, actor, video), so the output is a pure function of the config.
std::vector<PoseSequence> generate_dataset(const GeneratorConfig& cfg,
                                           const SkeletonTopology& topo);

}  // namespace bonekin
