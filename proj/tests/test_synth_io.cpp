#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "bonekin/dataset_io.hpp"
#include "bonekin/synth.hpp"

using namespace bonekin;

namespace {

GeneratorConfig clean_cfg() {
  GeneratorConfig cfg;
  cfg.actors = 2;
  cfg.videos_per_actor = 2;
  cfg.frames = 30;
  cfg.noise_sigma = 0;
  cfg.p_occ = 0;
  cfg.seed = 9;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("actor bone lengths: jitter, symmetry, identity") {
  const SkeletonTopology topo = default_topology17();
  const std::vector<double> base = base_length_table(topo);
  REQUIRE(base.size() == static_cast<size_t>(topo.num_bones()));

  GeneratorConfig cfg = clean_cfg();
  cfg.length_jitter = 0;
  Rng rng0 = make_rng(1, 0);
  CHECK(generate_actor(cfg, topo, rng0) == base);

  cfg.length_jitter = 0.1;
  Rng rng1 = make_rng(1, 1);
  const std::vector<double> a = generate_actor(cfg, topo, rng1);
  for (size_t b = 0; b < a.size(); ++b) {
    CHECK(a[b] >= base[b] * 0.9 - 1e-12);
    CHECK(a[b] <= base[b] * 1.1 + 1e-12);
  }
  for (const auto& [lb, rb] : symmetric_bone_pairs(topo)) {
    const double fl = a[static_cast<size_t>(lb)] / base[static_cast<size_t>(lb)];
    const double fr = a[static_cast<size_t>(rb)] / base[static_cast<size_t>(rb)];
    CHECK(fl == doctest::Approx(fr).epsilon(1e-12));
  }
  const std::vector<double> other = generate_actor(cfg, topo, rng1);
  CHECK(a != other);
}

TEST_CASE("clean videos project exactly and move smoothly") {
  const SkeletonTopology topo = default_topology17();
  const GeneratorConfig cfg = clean_cfg();
  Rng arng = make_rng(cfg.seed, 0xac7, 0);
  const std::vector<double> lengths = generate_actor(cfg, topo, arng);
  const PoseSequence video = generate_video(lengths, cfg, topo, 0, 0);
  REQUIRE(video.frames() == cfg.frames);

  double total_disp = 0;
  for (int t = 0; t < video.frames(); ++t) {
    const Pose3D& pose = video.poses3d[static_cast<size_t>(t)];
    // constant decomposed bone lengths equal to the actor's
    const BoneRepresentation rep = decompose(pose, topo);
    for (int b = 0; b < topo.num_bones(); ++b)
      CHECK(std::abs(rep.lengths[static_cast<size_t>(b)] -
                     lengths[static_cast<size_t>(b)]) < 1e-9);
    // noiseless keypoints are the exact projection
    const auto clean =
        project(video.camera, pose, video.root_world[static_cast<size_t>(t)]);
    for (size_t k = 0; k < clean.size(); ++k)
      for (int r = 0; r < 2; ++r)
        CHECK(video.keypoints2d[static_cast<size_t>(t)][k][static_cast<size_t>(r)] ==
              doctest::Approx(clean[k][static_cast<size_t>(r)]).epsilon(1e-12));
    // without occlusion every joint is confidently visible
    for (double v : video.visibility[static_cast<size_t>(t)]) CHECK(v >= 0.7);

    if (t > 0) {
      double disp = 0;
      const Pose3D& prev = video.poses3d[static_cast<size_t>(t - 1)];
      for (size_t k = 0; k < pose.joints.size(); ++k)
        disp += norm(pose.joints[k] - prev.joints[k]);
      total_disp += disp / static_cast<double>(pose.joints.size());
    }
  }
  CHECK(total_disp / (video.frames() - 1) < 50.0);
}

TEST_CASE("occluded joints carry larger 2D error than visible ones") {
  const SkeletonTopology topo = default_topology17();
  GeneratorConfig cfg = clean_cfg();
  cfg.frames = 120;
  cfg.noise_sigma = 0.005;
  cfg.p_occ = 0.3;
  Rng arng = make_rng(cfg.seed, 0xac7, 0);
  const std::vector<double> lengths = generate_actor(cfg, topo, arng);
  const PoseSequence video = generate_video(lengths, cfg, topo, 0, 0);

  double occ_err = 0, vis_err = 0;
  int occ_n = 0, vis_n = 0;
  for (int t = 0; t < video.frames(); ++t) {
    const auto clean = project(video.camera, video.poses3d[static_cast<size_t>(t)],
                               video.root_world[static_cast<size_t>(t)]);
    for (size_t k = 0; k < clean.size(); ++k) {
      const double dx = video.keypoints2d[static_cast<size_t>(t)][k][0] - clean[k][0];
      const double dy = video.keypoints2d[static_cast<size_t>(t)][k][1] - clean[k][1];
      const double err = std::hypot(dx, dy);
      if (video.visibility[static_cast<size_t>(t)][k] < 0.5) {
        occ_err += err;
        ++occ_n;
      } else {
        vis_err += err;
        ++vis_n;
      }
    }
  }
  REQUIRE(occ_n > 0);
  REQUIRE(vis_n > 0);
  CHECK(occ_err / occ_n > 2.0 * vis_err / vis_n);
}

TEST_CASE("generation is a pure function of the config") {
  const SkeletonTopology topo = default_topology17();
  const GeneratorConfig cfg = clean_cfg();
  const std::vector<PoseSequence> a = generate_dataset(cfg, topo);
  const std::vector<PoseSequence> b = generate_dataset(cfg, topo);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == 4);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].actor_id == b[i].actor_id);
    for (int t = 0; t < a[i].frames(); ++t)
      CHECK(a[i].poses3d[static_cast<size_t>(t)].joints ==
            b[i].poses3d[static_cast<size_t>(t)].joints);
    CHECK(a[i].keypoints2d == b[i].keypoints2d);
    CHECK(a[i].visibility == b[i].visibility);
    CHECK(a[i].root_world == b[i].root_world);
  }
  // different actors produce different motion
  CHECK(a[0].poses3d[0].joints != a[2].poses3d[0].joints);
}

TEST_CASE("dataset files roundtrip bitwise") {
  const SkeletonTopology topo = default_topology17();
  GeneratorConfig cfg = clean_cfg();
  cfg.frames = 3;
  cfg.noise_sigma = 0.005;
  cfg.p_occ = 0.2;
  const std::vector<PoseSequence> data = generate_dataset(cfg, topo);

  TempFile f1("synthio_a.jsonl"), f2("synthio_b.jsonl");
  write_dataset(data, topo, f1.path);
  const std::vector<PoseSequence> back = read_dataset(f1.path, topo);
  REQUIRE(back.size() == data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].actor_id == data[i].actor_id);
    for (int t = 0; t < data[i].frames(); ++t)
      CHECK(back[i].poses3d[static_cast<size_t>(t)].joints ==
            data[i].poses3d[static_cast<size_t>(t)].joints);
    CHECK(back[i].keypoints2d == data[i].keypoints2d);
    CHECK(back[i].visibility == data[i].visibility);
    CHECK(back[i].root_world == data[i].root_world);
    CHECK(back[i].camera.fx == data[i].camera.fx);
  }
  // writing the reloaded data reproduces the file byte for byte
  write_dataset(back, topo, f2.path);
  CHECK(slurp(f1.path) == slurp(f2.path));
}

TEST_CASE("malformed dataset lines are reported with their line number") {
  const SkeletonTopology topo = default_topology17();
  GeneratorConfig cfg = clean_cfg();
  cfg.frames = 2;
  cfg.actors = 1;
  cfg.videos_per_actor = 2;
  const std::vector<PoseSequence> data = generate_dataset(cfg, topo);

  TempFile f("synthio_bad.jsonl");
  write_dataset(data, topo, f.path);
  // truncate the second line
  std::string text = slurp(f.path);
  const size_t first_nl = text.find('\n');
  std::ofstream out(f.path, std::ios::binary);
  out << text.substr(0, first_nl + 1)
      << text.substr(first_nl + 1, (text.size() - first_nl) / 3) << '\n';
  out.close();

  try {
    read_dataset(f.path, topo);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  CHECK_THROWS_AS(read_dataset("does_not_exist.jsonl", topo), FormatError);

  // a file written for a different skeleton is rejected
  const SkeletonTopology chain =
      build_topology({-1, 0, 1}, {"Pelvis", "Spine", "Head"}, 0);
  TempFile g("synthio_chain.jsonl");
  PoseSequence tiny;
  tiny.actor_id = "x";
  tiny.poses3d.resize(2);
  for (auto& p : tiny.poses3d)
    p.joints = {{0, 0, 0}, {0, 100, 0}, {0, 200, 0}};
  write_dataset({tiny}, chain, g.path);
  CHECK_THROWS_AS(read_dataset(g.path, topo), TopologyMismatchError);
}

TEST_CASE("config files, overrides, and unknown keys") {
  TempFile empty("cfg_empty.json");
  std::ofstream(empty.path) << "{}";
  const CliConfig defaults = load_config(empty.path);
  CHECK(defaults.train.l == 50);
  CHECK(defaults.train.lambda_d == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(defaults.generator.actors == 6);

  TempFile f("cfg_small.json");
  std::ofstream(f.path)
      << R"({"train": {"l": 25, "strategy": "causal-random"},)"
      << R"( "generator": {"actors": 3}})";
  const CliConfig loaded = load_config(f.path);
  CHECK(loaded.train.l == 25);
  CHECK(loaded.train.strategy == "causal-random");
  CHECK(loaded.generator.actors == 3);

  const CliConfig overridden =
      load_config(f.path, {{"train.l", "10"}, {"train.augment", "false"}});
  CHECK(overridden.train.l == 10);
  CHECK_FALSE(overridden.train.augment);

  TempFile typo("cfg_typo.json");
  std::ofstream(typo.path) << R"({"train": {"lamda_d": 0.5}})";
  try {
    load_config(typo.path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("lamda_d") != std::string::npos);
  }

  CHECK_THROWS_AS(load_config(f.path, {{"train.l", "abc"}}), ConfigError);
  CHECK_THROWS_AS(load_config(f.path, {{"nosuch.key", "1"}}), ConfigError);

  // missing file: defaults (empty path) vs error (explicit path)
  const CliConfig none = load_config("");
  CHECK(none.train.l == 50);
  CHECK_THROWS_AS(load_config("no_such_config.json"), ConfigError);

  // the config hash covers the training section
  TrainConfig t1, t2;
  t2.l = 10;
  CHECK(config_hash(t1) != config_hash(t2));
  CHECK(config_hash(t1) == config_hash(TrainConfig{}));
}
