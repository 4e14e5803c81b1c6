#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bonekin/direction_net.hpp"
#include "bonekin/length_net.hpp"
#include "bonekin/synth.hpp"

using namespace bonekin;

namespace {

Tensor randn(std::vector<int> shape, Rng& rng, double sigma = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = gaussian(rng, 0.0, sigma);
  return t;
}

DirectionNetConfig tiny_dir_cfg() {
  DirectionNetConfig cfg;
  cfg.d = 9;
  cfg.s = 3;
  cfg.channels = 8;
  cfg.num_subnets = 2;
  cfg.dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("direction net validates its frame pyramid") {
  const SkeletonTopology topo = default_topology17();
  DirectionNetConfig cfg = tiny_dir_cfg();
  cfg.d = 10;
  CHECK_THROWS_AS(DirectionNet(cfg, &topo), ConfigError);
  cfg.d = 27;
  cfg.num_subnets = 4;  // more sub-networks than conv blocks
  CHECK_THROWS_AS(DirectionNet(cfg, &topo), ConfigError);
}

TEST_CASE("visibility gating") {
  const SkeletonTopology topo = default_topology17();
  const int j = topo.joints();
  DirectionNetConfig cfg = tiny_dir_cfg();
  DirectionNet net(cfg, &topo);
  ParameterStore store;
  Rng rng = make_rng(21, 0);
  net.init_params(store, rng);

  const Tensor kp = randn({2, 2 * j, cfg.d}, rng);
  const Tensor vis_a = randn({2, j, cfg.d}, rng, 0.1);
  Tensor vis_b = vis_a;
  for (double& v : vis_b.data) v = v * 3.0 + 0.5;

  auto run = [&](const Tensor& vis) {
    Graph g(&store);
    const DirectionNet::Forward f =
        net.build(g, g.input(kp), g.input(vis), false, 0);
    g.forward();
    return g.value(f.final_output).data;
  };

  // with normal weights the fused visibility stream influences the output
  CHECK(run(vis_a) != run(vis_b));

  // a constant visibility tower (zeroed weights) makes the gate a fixed
  // multiplier, so the output no longer depends on the visibility input
  std::fill(store.at("dir.s0.b0vis.conv.w").value.begin(),
            store.at("dir.s0.b0vis.conv.w").value.end(), 0.0);
  std::fill(store.at("dir.s0.b0vis.conv.b").value.begin(),
            store.at("dir.s0.b0vis.conv.b").value.end(), 1.0);
  CHECK(run(vis_a) == run(vis_b));
}

TEST_CASE("fusion output shape") {
  // d=9, s=3, o=8: the fused first block emits 2*o channels over 3 steps
  const SkeletonTopology topo = default_topology17();
  DirectionNetConfig cfg = tiny_dir_cfg();
  DirectionNet net(cfg, &topo);
  ParameterStore store;
  Rng rng = make_rng(21, 1);
  net.init_params(store, rng);
  CHECK(store.at("dir.s0.b1.conv.w").shape == std::vector<int>{8, 16, 3});
  CHECK(store.has("dir.s0.b0kp.conv.w"));
  CHECK(store.has("dir.s0.b0vis.conv.w"));
}

TEST_CASE("direction net shape schedule and propagation") {
  const SkeletonTopology topo = default_topology17();
  DirectionNetConfig cfg = tiny_dir_cfg();
  cfg.d = 27;
  cfg.visibility_fusion = false;
  DirectionNet net(cfg, &topo);
  CHECK(net.blocks() == 3);
  ParameterStore store;
  Rng rng = make_rng(21, 2);
  net.init_params(store, rng);

  Graph g(&store);
  const int kp = g.input(randn({2, 2 * topo.joints(), 27}, rng));
  const DirectionNet::Forward fwd = net.build(g, kp, -1, false, 0);
  g.forward();
  REQUIRE(fwd.subnet_outputs.size() == 2);
  for (int node : fwd.subnet_outputs)
    CHECK(g.value(node).shape == std::vector<int>{2, 3 * topo.num_bones()});
  CHECK(fwd.final_output == fwd.subnet_outputs[1]);

  // single sub-network degenerates to the plain backbone
  cfg.num_subnets = 1;
  DirectionNet net1(cfg, &topo);
  ParameterStore store1;
  Rng rng1 = make_rng(21, 3);
  net1.init_params(store1, rng1);
  Graph g1(&store1);
  const DirectionNet::Forward f1 =
      net1.build(g1, g1.input(randn({2, 2 * topo.joints(), 27}, rng1)), -1,
                 false, 0);
  g1.forward();
  CHECK(f1.subnet_outputs.size() == 1);
}

TEST_CASE("fusion-disabled net ignores visibility input") {
  const SkeletonTopology topo = default_topology17();
  DirectionNetConfig cfg = tiny_dir_cfg();
  cfg.visibility_fusion = false;
  DirectionNet net(cfg, &topo);
  ParameterStore store;
  Rng rng = make_rng(21, 4);
  net.init_params(store, rng);
  const Tensor kp = randn({2, 2 * topo.joints(), cfg.d}, rng);

  Graph ga(&store);
  const DirectionNet::Forward fa =
      net.build(ga, ga.input(kp), ga.input(randn({2, topo.joints(), cfg.d}, rng)),
                false, 0);
  ga.forward();
  Graph gb(&store);
  const DirectionNet::Forward fb = net.build(gb, gb.input(kp), -1, false, 0);
  gb.forward();
  CHECK(ga.value(fa.final_output).data == gb.value(fb.final_output).data);
}

TEST_CASE("per-sub-network losses stay inside their sub-network") {
  const SkeletonTopology topo = default_topology17();
  DirectionNetConfig cfg = tiny_dir_cfg();
  cfg.visibility_fusion = false;
  DirectionNet net(cfg, &topo);
  ParameterStore store;
  Rng rng = make_rng(21, 5);
  net.init_params(store, rng);

  Graph g(&store);
  const DirectionNet::Forward fwd =
      net.build(g, g.input(randn({3, 2 * topo.joints(), cfg.d}, rng)), -1,
                true, 77);
  const Tensor gt = randn({3, 3 * topo.num_bones()}, rng);
  const int loss1 = g.sq_l2_loss(fwd.subnet_outputs[1], g.input(gt));
  g.forward();

  const auto reach = g.reachable_params(loss1);
  for (const auto& [name, entry] : store.entries()) {
    if (!entry.trainable) continue;
    const bool upper = name.rfind("dir.s1.", 0) == 0;
    CHECK(reach.count(name) == (upper ? 1u : 0u));
  }

  // one optimizer step on the upper loss leaves the lower sub-network
  // bitwise unchanged while moving the upper one
  const auto lower_before = store.at("dir.s0.b0.conv.w").value;
  const auto upper_before = store.at("dir.s1.b0.conv.w").value;
  g.backward(loss1);
  store.adam_step(1e-3);
  CHECK(store.at("dir.s0.b0.conv.w").value == lower_before);
  CHECK(store.at("dir.s1.b0.conv.w").value != upper_before);
}

TEST_CASE("frame sampling strategies") {
  LengthNetConfig cfg;
  cfg.l = 5;
  cfg.budget = 50;
  Rng rng = make_rng(21, 6);

  cfg.strategy = SampleStrategy::kConsecutive;
  CHECK(sample_frames(10, 9, cfg, rng) ==
        std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});

  cfg.strategy = SampleStrategy::kFirstFrame;
  std::vector<int> first = sample_frames(1000, 700, cfg, rng);
  REQUIRE(first.size() == 50);
  for (int i = 0; i < 50; ++i) CHECK(first[static_cast<size_t>(i)] == i);

  cfg.strategy = SampleStrategy::kCausalRandom;
  CHECK(sample_frames(100, 0, cfg, rng) == std::vector<int>{0, 0, 0, 0, 0});
  for (int rep = 0; rep < 20; ++rep)
    for (int v : sample_frames(100, 7, cfg, rng)) CHECK(v <= 7);

  cfg.strategy = SampleStrategy::kRandom;
  for (int rep = 0; rep < 20; ++rep)
    for (int v : sample_frames(30, 7, cfg, rng)) {
      CHECK(v >= 0);
      CHECK(v < 30);
    }
  CHECK_THROWS_AS(sample_frames(10, 10, cfg, rng), IndexError);

  CHECK(parse_strategy("causal-random") == SampleStrategy::kCausalRandom);
  CHECK_THROWS_AS(parse_strategy("bogus"), ConfigError);
  CHECK(strategy_name(SampleStrategy::kFirstFrame) == "firstframe");
}

TEST_CASE("length fusion properties") {
  const SkeletonTopology topo = default_topology17();
  const int j = topo.joints();
  LengthNetConfig cfg;
  cfg.l = 6;
  cfg.residual_blocks = 1;
  cfg.channels = 8;
  cfg.dropout = 0.0;
  LengthNet net(cfg, &topo);
  ParameterStore store;
  Rng rng = make_rng(21, 7);
  net.init_params(store, rng);

  // identical keypoints in every slot -> fused equals each per-frame length
  Tensor one_row = randn({1, 2 * j}, rng);
  Tensor tiled({cfg.l, 2 * j});
  for (int i = 0; i < cfg.l; ++i)
    std::copy_n(one_row.data.begin(), 2 * j,
                tiled.data.begin() + static_cast<int64_t>(i) * 2 * j);
  Graph g(&store);
  const LengthNet::Forward fwd = net.build(g, g.input(tiled), 1, cfg.l, false, 0);
  g.forward();
  for (int b = 0; b < topo.num_bones(); ++b) {
    const double fused = g.value(fwd.fused).at(0, b);
    for (int i = 0; i < cfg.l; ++i) {
      CHECK(g.value(fwd.lengths).at(i, b) ==
            doctest::Approx(fused).epsilon(1e-12));
      CHECK(g.value(fwd.attention).at(0, i, b) ==
            doctest::Approx(1.0 / cfg.l).epsilon(1e-12));
    }
  }

  // permuting the sampled frames leaves the fused lengths unchanged
  Tensor frames = randn({cfg.l, 2 * j}, rng);
  Tensor permuted = frames;
  std::vector<int> order = {3, 0, 5, 1, 4, 2};
  for (int i = 0; i < cfg.l; ++i)
    std::copy_n(frames.data.begin() + static_cast<int64_t>(order[static_cast<size_t>(i)]) * 2 * j,
                2 * j, permuted.data.begin() + static_cast<int64_t>(i) * 2 * j);
  Graph ga(&store);
  const LengthNet::Forward fa = net.build(ga, ga.input(frames), 1, cfg.l, false, 0);
  Graph gb(&store);
  const LengthNet::Forward fb = net.build(gb, gb.input(permuted), 1, cfg.l, false, 0);
  ga.forward();
  gb.forward();
  for (int b = 0; b < topo.num_bones(); ++b)
    CHECK(std::abs(ga.value(fa.fused).at(0, b) - gb.value(fb.fused).at(0, b)) <
          1e-12);

  // attention weights always sum to one per bone
  for (int b = 0; b < topo.num_bones(); ++b) {
    double sum = 0;
    for (int i = 0; i < cfg.l; ++i) sum += ga.value(fa.attention).at(0, i, b);
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }

  // zero temperature equals the plain mean; l=1 is a delta
  LengthNetConfig cfg0 = cfg;
  cfg0.gamma = 0.0;
  LengthNet net0(cfg0, &topo);
  Graph g0(&store);
  const LengthNet::Forward f0 = net0.build(g0, g0.input(frames), 1, cfg.l, false, 0);
  g0.forward();
  for (int b = 0; b < topo.num_bones(); ++b) {
    double mean = 0;
    for (int i = 0; i < cfg.l; ++i) mean += g0.value(f0.lengths).at(i, b);
    mean /= cfg.l;
    CHECK(g0.value(f0.fused).at(0, b) == doctest::Approx(mean).epsilon(1e-12));
  }

  LengthNetConfig cfg1 = cfg;
  cfg1.l = 1;
  LengthNet net1(cfg1, &topo);
  Graph g1(&store);
  const LengthNet::Forward f1 = net1.build(g1, g1.input(one_row), 1, 1, false, 0);
  g1.forward();
  for (int b = 0; b < topo.num_bones(); ++b) {
    CHECK(g1.value(f1.attention).at(0, 0, b) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g1.value(f1.fused).at(0, b) ==
          doctest::Approx(g1.value(f1.lengths).at(0, b)).epsilon(1e-12));
  }
}

TEST_CASE("length losses route to separate parameter groups") {
  const SkeletonTopology topo = default_topology17();
  const int j = topo.joints();
  LengthNetConfig cfg;
  cfg.l = 4;
  cfg.residual_blocks = 1;
  cfg.channels = 8;
  cfg.dropout = 0.0;
  LengthNet net(cfg, &topo);
  ParameterStore store;
  Rng rng = make_rng(21, 8);
  net.init_params(store, rng);

  Graph g(&store);
  const int B = 2;
  const LengthNet::Forward fwd =
      net.build(g, g.input(randn({B * cfg.l, 2 * j}, rng)), B, cfg.l, true, 5);
  const int lj = g.pose_l2_loss(g.gather_rows(fwd.joints, {1, 6}),
                                g.input(randn({B, 3 * j}, rng)));
  const int ll = g.sq_l2_loss(fwd.fused, g.input(randn({B, j - 1}, rng, 0.3)));
  g.forward();

  const auto reach_j = g.reachable_params(lj);
  const auto reach_l = g.reachable_params(ll);
  CHECK(reach_j.count("len.att.w") == 0);
  CHECK(reach_j.count("len.in.w") == 1);
  CHECK(reach_l.count("len.att.w") == 1);
  CHECK(reach_l.count("len.in.w") == 0);

  // a step on the fused-length loss leaves the residual network untouched
  const auto before = store.at("len.in.w").value;
  g.backward(ll);
  store.adam_step(1e-3);
  CHECK(store.at("len.in.w").value == before);
}

TEST_CASE("bone-length augmentation") {
  const SkeletonTopology topo = default_topology17();
  GeneratorConfig gen;
  gen.actors = 1;
  gen.videos_per_actor = 1;
  gen.frames = 12;
  gen.noise_sigma = 0;
  gen.p_occ = 0;
  Rng arng = make_rng(3, 0);
  const std::vector<double> lengths = generate_actor(gen, topo, arng);
  const PoseSequence video = generate_video(lengths, gen, topo, 0, 0);

  Rng rng = make_rng(21, 9);
  const PoseSequence aug = augment_video(video, topo, rng);
  CHECK(aug.actor_id == video.actor_id + "-aug");
  CHECK(aug.frames() == video.frames());
  CHECK(aug.visibility == video.visibility);

  const BoneRepresentation first = decompose(aug.poses3d[0], topo);
  for (int t = 0; t < aug.frames(); ++t) {
    const BoneRepresentation rep = decompose(aug.poses3d[static_cast<size_t>(t)], topo);
    for (int b = 0; b < topo.num_bones(); ++b) {
      CHECK(std::abs(rep.lengths[static_cast<size_t>(b)] -
                     first.lengths[static_cast<size_t>(b)]) < 1e-9);
      // factors live in [0.8, 1.2]
      const double f = rep.lengths[static_cast<size_t>(b)] /
                       lengths[static_cast<size_t>(b)];
      CHECK(f >= 0.8);
      CHECK(f <= 1.2);
    }
    // directions preserved
    const BoneRepresentation orig = decompose(video.poses3d[static_cast<size_t>(t)], topo);
    for (int b = 0; b < topo.num_bones(); ++b)
      for (int r = 0; r < 3; ++r)
        CHECK(std::abs(rep.directions[static_cast<size_t>(b)][static_cast<size_t>(r)] -
                       orig.directions[static_cast<size_t>(b)][static_cast<size_t>(r)]) < 1e-9);
  }
  // left/right symmetric bones share their factor
  for (const auto& [lb, rb] : symmetric_bone_pairs(topo)) {
    const double fl = first.lengths[static_cast<size_t>(lb)] / lengths[static_cast<size_t>(lb)];
    const double fr = first.lengths[static_cast<size_t>(rb)] / lengths[static_cast<size_t>(rb)];
    CHECK(fl == doctest::Approx(fr).epsilon(1e-12));
  }
  // reprojected keypoints are the clean projection of the scaled poses
  for (int t = 0; t < aug.frames(); ++t) {
    const auto clean = project(aug.camera, aug.poses3d[static_cast<size_t>(t)],
                               aug.root_world[static_cast<size_t>(t)]);
    for (size_t k = 0; k < clean.size(); ++k)
      for (int r = 0; r < 2; ++r)
        CHECK(aug.keypoints2d[static_cast<size_t>(t)][k][static_cast<size_t>(r)] ==
              doctest::Approx(clean[k][static_cast<size_t>(r)]).epsilon(1e-12));
  }
}
