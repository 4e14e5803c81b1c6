#include "bonekin/synth.hpp"

#include <cmath>
#include <map>
#include <string>

#include "bonekin/errors.hpp"

namespace bonekin {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFps = 50.0;  // nominal frame rate for the frequency band
// Smoothness is a bound on angular velocity, not amplitude: capping the summed
// sinusoid rate keeps per-frame joint displacement small while still letting a
// video sweep through a wide range of poses (slow, large-amplitude motion).
constexpr double kMaxAngleRate = 1.2;  // rad/s, ~24 mm/frame at a 1 m lever arm

struct AngleTrack {
  double base = 0;
  std::vector<double> amp, freq, phase;

  double at(double t_sec) const {
    double v = base;
    for (size_t i = 0; i < amp.size(); ++i)
      v += amp[i] * std::sin(2.0 * kPi * freq[i] * t_sec + phase[i]);
    return v;
  }
};

// A track is a base angle plus per-video shared sinusoids with a per-bone
// amplitude mix; the summed angular rate is capped for smoothness.
AngleTrack random_track(double base, const std::vector<double>& freq,
                        const std::vector<double>& phase, Rng& rng) {
  AngleTrack tr;
  tr.base = base;
  tr.freq = freq;
  tr.phase = phase;
  for (size_t i = 0; i < freq.size(); ++i)
    tr.amp.push_back(uniform(rng, 0.05, 0.5));
  double rate = 0;
  for (size_t i = 0; i < tr.amp.size(); ++i)
    rate += tr.amp[i] * 2.0 * kPi * tr.freq[i];
  if (rate > kMaxAngleRate)
    for (double& a : tr.amp) a *= kMaxAngleRate / rate;
  return tr;
}

// Fixed "activity" prototype base poses, shared by every dataset: real motion
// capture clusters around a handful of canonical poses, and sampling video
// base poses from a low-dimensional manifold (interpolations between fixed
// prototypes) gives a dataset whose pose space is dense enough to learn from
// at desk scale. The polar angle is biased toward the camera — see
// generate_video.
struct Prototype {
  std::vector<double> theta, phi;
};

std::vector<Prototype> activity_prototypes(int nb) {
  constexpr int kCount = 8;
  std::vector<Prototype> protos;
  Rng rng = make_rng(0x9a10, 0);  // fixed: prototypes are part of the design
  for (int p = 0; p < kCount; ++p) {
    Prototype pr;
    for (int b = 0; b < nb; ++b) {
      pr.theta.push_back(uniform(rng, 0.35, 1.75));
      pr.phi.push_back(uniform(rng, 0.0, 2.0 * kPi));
    }
    protos.push_back(std::move(pr));
  }
  return protos;
}

}  // namespace

std::vector<double> base_length_table(const SkeletonTopology& topo) {
  const std::map<std::string, double> mm = {
      {"RightHip", 110},      {"RightKnee", 450}, {"RightAnkle", 440},
      {"LeftHip", 110},       {"LeftKnee", 450},  {"LeftAnkle", 440},
      {"Spine", 230},         {"Thorax", 255},    {"Neck", 120},
      {"Head", 115},          {"LeftShoulder", 150}, {"LeftElbow", 280},
      {"LeftWrist", 250},     {"RightShoulder", 150}, {"RightElbow", 280},
      {"RightWrist", 250}};
  std::vector<double> out;
  out.reserve(static_cast<size_t>(topo.num_bones()));
  for (const auto& [p, c] : topo.bones) {
    auto it = mm.find(topo.joint_names[static_cast<size_t>(c)]);
    out.push_back(it != mm.end() ? it->second : 250.0);
  }
  return out;
}

std::vector<double> generate_actor(const GeneratorConfig& cfg,
                                   const SkeletonTopology& topo, Rng& rng) {
  std::vector<double> lengths = base_length_table(topo);
  std::vector<double> jitter(lengths.size());
  for (double& u : jitter) u = uniform(rng, -cfg.length_jitter, cfg.length_jitter);
  for (const auto& [lb, rb] : symmetric_bone_pairs(topo))
    jitter[static_cast<size_t>(rb)] = jitter[static_cast<size_t>(lb)];
  for (size_t b = 0; b < lengths.size(); ++b) lengths[b] *= 1.0 + jitter[b];
  return lengths;
}

PoseSequence generate_video(const std::vector<double>& lengths,
                            const GeneratorConfig& cfg,
                            const SkeletonTopology& topo, int actor_index,
                            int video_index) {
  const int nb = topo.num_bones();
  if (static_cast<int>(lengths.size()) != nb)
    throw ShapeError("generate_video: length table does not match topology");
  Rng rng = make_rng(cfg.seed, 0x51d, static_cast<uint64_t>(actor_index),
                     static_cast<uint64_t>(video_index));

  for (int attempt = 0;; ++attempt) {
    PoseSequence video;
    video.actor_id = "actor" + std::to_string(actor_index);
    video.camera.fx = 1150;
    video.camera.fy = 1150;
    video.camera.cx = cfg.width / 2.0;
    video.camera.cy = cfg.height / 2.0;
    video.camera.width = cfg.width;
    video.camera.height = cfg.height;

    // Base pose: a random interpolation between two activity prototypes plus
    // per-bone jitter; smooth spherical-angle trajectories on top.
    static const std::vector<Prototype> protos = activity_prototypes(nb);
    const int pa = uniform_int(rng, 0, static_cast<int>(protos.size()) - 1);
    const int pb = uniform_int(rng, 0, static_cast<int>(protos.size()) - 1);
    const double mix = uniform(rng, 0.0, 1.0);

    // Per-video shared sinusoid bank (2-4 sinusoids; every bone mixes the
    // same bank with its own amplitudes, keeping the motion low-dimensional).
    std::vector<double> freq, phase;
    for (int i = 0; i < cfg.motion_sinusoids; ++i) {
      freq.push_back(uniform(rng, 0.05 * cfg.motion_freq_max, cfg.motion_freq_max));
      phase.push_back(uniform(rng, 0.0, 2.0 * kPi));
    }

    std::vector<AngleTrack> theta, phi;
    theta.reserve(static_cast<size_t>(nb));
    phi.reserve(static_cast<size_t>(nb));
    for (int b = 0; b < nb; ++b) {
      const size_t bi = static_cast<size_t>(b);
      const double bt = (1.0 - mix) * protos[static_cast<size_t>(pa)].theta[bi] +
                        mix * protos[static_cast<size_t>(pb)].theta[bi] +
                        uniform(rng, -0.15, 0.15);
      const double bp = (1.0 - mix) * protos[static_cast<size_t>(pa)].phi[bi] +
                        mix * protos[static_cast<size_t>(pb)].phi[bi] +
                        uniform(rng, -0.15, 0.15);
      theta.push_back(random_track(bt, freq, phase, rng));
      phi.push_back(random_track(bp, freq, phase, rng));
    }

    Vec3 root = {uniform(rng, -300, 300), uniform(rng, -300, 300),
                 uniform(rng, 4200, 4800)};

    try {
      for (int t = 0; t < cfg.frames; ++t) {
        const double sec = t / kFps;
        BoneRepresentation rep;
        rep.lengths = lengths;
        rep.directions.reserve(static_cast<size_t>(nb));
        for (int b = 0; b < nb; ++b) {
          const double th = theta[static_cast<size_t>(b)].at(sec);
          const double ph = phi[static_cast<size_t>(b)].at(sec);
          rep.directions.push_back({std::sin(th) * std::cos(ph),
                                    std::sin(th) * std::sin(ph),
                                    std::cos(th)});
        }
        Pose3D pose = compose(rep, topo);
        auto clean = project(video.camera, pose, root);

        std::vector<std::array<double, 2>> noisy(clean);
        std::vector<double> vis(static_cast<size_t>(topo.joints()));
        for (int k = 0; k < topo.joints(); ++k) {
          const bool occluded = uniform(rng, 0.0, 1.0) < cfg.p_occ;
          const double sigma = cfg.noise_sigma * (occluded ? 5.0 : 1.0);
          if (sigma > 0) {
            noisy[static_cast<size_t>(k)][0] += gaussian(rng, 0.0, sigma);
            noisy[static_cast<size_t>(k)][1] += gaussian(rng, 0.0, sigma);
          }
          vis[static_cast<size_t>(k)] =
              occluded ? uniform(rng, 0.0, 0.3) : uniform(rng, 0.7, 1.0);
        }

        video.poses3d.push_back(std::move(pose));
        video.root_world.push_back(root);
        video.keypoints2d.push_back(std::move(noisy));
        video.visibility.push_back(std::move(vis));

        root = root + Vec3{gaussian(rng, 0.0, 4.0), gaussian(rng, 0.0, 4.0),
                           gaussian(rng, 0.0, 4.0)};
      }
    } catch (const BehindCameraError&) {
      if (attempt >= 10) throw;
      continue;  // resample trajectory and root placement
    }
    return video;
  }
}

std::vector<PoseSequence> generate_dataset(const GeneratorConfig& cfg,
                                           const SkeletonTopology& topo) {
  std::vector<PoseSequence> out;
  out.reserve(static_cast<size_t>(cfg.actors * cfg.videos_per_actor));
  for (int a = 0; a < cfg.actors; ++a) {
    Rng actor_rng = make_rng(cfg.seed, 0xac7, static_cast<uint64_t>(a));
    const std::vector<double> lengths = generate_actor(cfg, topo, actor_rng);
    for (int v = 0; v < cfg.videos_per_actor; ++v)
      out.push_back(generate_video(lengths, cfg, topo, a, v));
  }
  return out;
}

}  // namespace bonekin
