#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "bonekin/pipeline.hpp"
#include "bonekin/synth.hpp"

using namespace bonekin;

namespace {

TrainConfig tiny_train_cfg() {
  TrainConfig cfg;
  cfg.d = 9;
  cfg.s = 3;
  cfg.num_subnets = 2;
  cfg.channels = 8;
  cfg.length_blocks = 1;
  cfg.l = 4;
  cfg.batch = 4;
  cfg.epochs = 1;
  cfg.steps_per_epoch = 2;
  cfg.dropout = 0.1;
  cfg.val_actors = 1;
  cfg.eval_stride = 5;
  cfg.seed = 11;
  return cfg;
}

GeneratorConfig tiny_gen_cfg() {
  GeneratorConfig gen;
  gen.actors = 3;
  gen.videos_per_actor = 1;
  gen.frames = 40;
  gen.seed = 5;
  return gen;
}

std::vector<PoseSequence> tiny_dataset() {
  const SkeletonTopology topo = default_topology17();
  return generate_dataset(tiny_gen_cfg(), topo);
}

std::vector<const PoseSequence*> ptrs(const std::vector<PoseSequence>& v) {
  std::vector<const PoseSequence*> out;
  for (const PoseSequence& s : v) out.push_back(&s);
  return out;
}

// snapshot of every trainable parameter
std::map<std::string, std::vector<double>> snapshot(const ParameterStore& s) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, e] : s.entries())
    if (e.trainable) out[name] = e.value;
  return out;
}

bool starts_with(const std::string& s, const std::string& p) {
  return s.rfind(p, 0) == 0;
}

}  // namespace

TEST_CASE("total loss combines the weighted components") {
  const std::vector<PoseSequence> data = tiny_dataset();
  Model model = make_model(tiny_train_cfg());
  const Batch batch = make_batch(model, ptrs(data), 0, 0);

  Graph g(&model.store);
  const LossNodes losses = build_losses(model, g, batch, false, 0);
  g.forward();

  double expected = 0;
  for (int node : losses.d) expected += model.cfg.lambda_d * g.value(node).at(0);
  expected += model.cfg.lambda_j * g.value(losses.j).at(0);
  expected += model.cfg.lambda_l * g.value(losses.l).at(0);
  expected += model.cfg.lambda_js * g.value(losses.js).at(0);
  CHECK(g.value(losses.total).at(0) ==
        doctest::Approx(expected).epsilon(1e-12));

  // unit weights on unit components would give 0.02 + 1 + 0.05 + 0.1
  CHECK(model.cfg.lambda_d + model.cfg.lambda_j + model.cfg.lambda_l +
            model.cfg.lambda_js ==
        doctest::Approx(1.17).epsilon(1e-12));

  // doubling every weight doubles the total but not the components
  Model doubled = make_model(tiny_train_cfg());
  doubled.cfg.lambda_d *= 2;
  doubled.cfg.lambda_j *= 2;
  doubled.cfg.lambda_l *= 2;
  doubled.cfg.lambda_js *= 2;
  Graph g2(&doubled.store);
  const LossNodes l2 = build_losses(doubled, g2, batch, false, 0);
  g2.forward();
  CHECK(g2.value(l2.j).at(0) ==
        doctest::Approx(g.value(losses.j).at(0)).epsilon(1e-12));
  CHECK(g2.value(l2.total).at(0) ==
        doctest::Approx(2 * g.value(losses.total).at(0)).epsilon(1e-12));
}

TEST_CASE("each loss updates exactly its parameter group") {
  const std::vector<PoseSequence> data = tiny_dataset();

  // which groups a loss is allowed to move
  enum Group { kDir, kAttention, kLengthNet };
  auto group_of = [](const std::string& name) {
    if (starts_with(name, "dir.")) return kDir;
    if (name == "len.att.w") return kAttention;
    return kLengthNet;
  };

  auto probe = [&](int which, std::vector<int> allowed) {
    Model model = make_model(tiny_train_cfg());
    const Batch batch = make_batch(model, ptrs(data), 0, 0);
    Graph g(&model.store);
    const LossNodes losses = build_losses(model, g, batch, true, 33);
    g.forward();
    const auto before = snapshot(model.store);
    int node = -1;
    switch (which) {
      case 0: node = g.scale_add(losses.d, {1.0, 1.0}); g.forward(); break;
      case 1: node = losses.l; break;
      case 2: node = losses.j; break;
      case 3: node = losses.js; break;
    }
    g.backward(node);
    model.store.adam_step(1e-3);
    const auto after = snapshot(model.store);
    int moved = 0;
    for (const auto& [name, val] : before) {
      const bool changed = after.at(name) != val;
      const bool may_change =
          std::count(allowed.begin(), allowed.end(), group_of(name)) > 0;
      if (changed) {
        CHECK_MESSAGE(may_change, "unexpected update to ", name);
        ++moved;
      }
    }
    CHECK(moved > 0);
  };

  probe(0, {kDir});        // direction losses touch only the direction branch
  probe(1, {kAttention});  // fused-length loss touches only the attention map
  probe(2, {kLengthNet});  // per-frame joint loss trains the residual net
  probe(3, {kDir});        // shift loss reaches directions, never lengths
}

TEST_CASE("shift loss gradients match a direction-only configuration") {
  // zeroing every other weight, the gradients that the shift loss sends into
  // the direction branch are independent of the length-side lambdas
  const std::vector<PoseSequence> data = tiny_dataset();
  Model a = make_model(tiny_train_cfg());
  Model b = make_model(tiny_train_cfg());
  b.cfg.lambda_l = 0.0;
  b.cfg.lambda_j = 0.0;
  const Batch batch = make_batch(a, ptrs(data), 1, 1);

  auto run = [&](Model& m) {
    Graph g(&m.store);
    const LossNodes losses = build_losses(m, g, batch, false, 0);
    g.forward();
    g.backward(losses.total);
    std::map<std::string, std::vector<double>> grads;
    for (const auto& [name, e] : m.store.entries())
      if (e.trainable && starts_with(name, "dir.")) grads[name] = e.grad;
    return grads;
  };
  CHECK(run(a) == run(b));
}

TEST_CASE("training improves the loss and writes a valid checkpoint") {
  const std::vector<PoseSequence> data = tiny_dataset();
  TrainConfig cfg = tiny_train_cfg();
  cfg.epochs = 2;
  cfg.steps_per_epoch = 4;
  Model model = make_model(cfg);

  const std::string ckpt = "test_pipeline_ckpt.bin";
  TrainOptions opts;
  opts.checkpoint_path = ckpt;
  const std::vector<EpochLog> logs = train(model, data, opts);
  REQUIRE(logs.size() == 2);
  CHECK(logs[1].lr == doctest::Approx(cfg.lr * cfg.lr_decay).epsilon(1e-12));
  for (const EpochLog& ep : logs) {
    CHECK(std::isfinite(ep.total));
    CHECK(std::isfinite(ep.val.mpjpe_mm));
  }

  // reload into a fresh model: parameters and evaluation agree bitwise
  Model loaded = make_model(cfg);
  const std::string stored_hash = load_model(loaded, ckpt);
  CHECK(stored_hash == config_hash(cfg));
  for (const auto& [name, e] : model.store.entries())
    CHECK(loaded.store.at(name).value == e.value);
  CHECK(loaded.store.step_count() == model.store.step_count());

  const MetricReport r1 = evaluate(model, data, 5);
  const MetricReport r2 = evaluate(loaded, data, 5);
  CHECK(r1.mpjpe_mm == r2.mpjpe_mm);
  CHECK(r1.p_mpjpe_mm == r2.p_mpjpe_mm);
  CHECK(r1.auc == r2.auc);
  std::remove(ckpt.c_str());
}

TEST_CASE("same seed, same data, same result") {
  const std::vector<PoseSequence> data = tiny_dataset();
  auto run = [&]() {
    Model model = make_model(tiny_train_cfg());
    train(model, data);
    return snapshot(model.store);
  };
  CHECK(run() == run());
}

TEST_CASE("prediction composes network lengths and directions") {
  const std::vector<PoseSequence> data = tiny_dataset();
  Model model = make_model(tiny_train_cfg());
  const Pose3D pose = predict_frame(model, data[0], 3);
  REQUIRE(pose.joints.size() == 17);
  CHECK(pose.joints[static_cast<size_t>(model.topo.root_index)] ==
        Vec3{0, 0, 0});
  const BoneRepresentation rep = decompose(pose, model.topo);
  for (double len : rep.lengths) CHECK(len > 0);
}

TEST_CASE("first-frame strategy yields one constant length set") {
  const std::vector<PoseSequence> data = tiny_dataset();
  TrainConfig cfg = tiny_train_cfg();
  cfg.strategy = "firstframe";
  cfg.strategy_m = 10;
  Model model = make_model(cfg);

  Predictor p(model, data[0]);
  const std::vector<double> l9 = decompose(p.predict(9), model.topo).lengths;
  const std::vector<double> l20 = decompose(p.predict(20), model.topo).lengths;
  const std::vector<double> l35 = decompose(p.predict(35), model.topo).lengths;
  for (size_t b = 0; b < l9.size(); ++b) {
    CHECK(l20[b] == doctest::Approx(l9[b]).epsilon(1e-9));
    CHECK(l35[b] == doctest::Approx(l9[b]).epsilon(1e-9));
  }
}

TEST_CASE("causal mode ignores future frames") {
  const std::vector<PoseSequence> data = tiny_dataset();
  TrainConfig cfg = tiny_train_cfg();
  cfg.causal = true;
  cfg.strategy = "causal-random";
  Model model = make_model(cfg);

  const int t = 12;
  const Pose3D before = predict_frame(model, data[0], t);

  PoseSequence tampered = data[0];
  for (int f = t + 1; f < tampered.frames(); ++f) {
    for (auto& v : tampered.poses3d[static_cast<size_t>(f)].joints)
      v = v + Vec3{100, -50, 30};
    for (auto& kp : tampered.keypoints2d[static_cast<size_t>(f)]) {
      kp[0] += 0.25;
      kp[1] -= 0.25;
    }
    for (auto& vis : tampered.visibility[static_cast<size_t>(f)]) vis *= 0.5;
  }
  const Pose3D after = predict_frame(model, tampered, t);
  for (size_t k = 0; k < before.joints.size(); ++k)
    CHECK(before.joints[k] == after.joints[k]);
}

TEST_CASE("learned composition heads train and predict") {
  const std::vector<PoseSequence> data = tiny_dataset();
  TrainConfig cfg = tiny_train_cfg();
  cfg.composition = "heads";
  Model model = make_model(cfg);
  CHECK(model.store.has("comp.joint.w"));
  CHECK(model.store.has("comp.shift.w"));

  const std::vector<EpochLog> logs = train(model, data);
  CHECK(std::isfinite(logs[0].total));
  const Pose3D pose = predict_frame(model, data[0], 0);
  CHECK(pose.joints[static_cast<size_t>(model.topo.root_index)] ==
        Vec3{0, 0, 0});
  for (const Vec3& v : pose.joints)
    for (double c : v) CHECK(std::isfinite(c));
}

TEST_CASE("direct regression baseline skips the anatomy branch") {
  const std::vector<PoseSequence> data = tiny_dataset();
  TrainConfig cfg = tiny_train_cfg();
  cfg.model = "direct";
  Model model = make_model(cfg);
  CHECK_FALSE(model.store.has("len.in.w"));

  const Batch batch = make_batch(model, ptrs(data), 0, 0);
  Graph g(&model.store);
  const LossNodes losses = build_losses(model, g, batch, false, 0);
  g.forward();
  CHECK(losses.l == -1);
  CHECK(losses.js == -1);
  CHECK(losses.d.size() == 2);
  CHECK(std::isfinite(g.value(losses.total).at(0)));

  train(model, data);
  const Pose3D pose = predict_frame(model, data[0], 5);
  CHECK(pose.joints[static_cast<size_t>(model.topo.root_index)] ==
        Vec3{0, 0, 0});
}

TEST_CASE("single-frame videos report no velocity error") {
  GeneratorConfig gen = tiny_gen_cfg();
  gen.frames = 1;
  gen.actors = 1;
  const SkeletonTopology topo = default_topology17();
  const std::vector<PoseSequence> data = generate_dataset(gen, topo);
  TrainConfig cfg = tiny_train_cfg();
  Model model = make_model(cfg);
  const MetricReport r = evaluate(model, data, 1);
  CHECK_FALSE(r.mpjve_mm.has_value());
  CHECK(std::isfinite(r.mpjpe_mm));
}

TEST_CASE("degenerate inputs raise dedicated errors") {
  Model model = make_model(tiny_train_cfg());
  const std::vector<PoseSequence> empty;
  CHECK_THROWS_AS(train(model, empty), EmptyDatasetError);
  CHECK_THROWS_AS(evaluate(model, std::vector<const PoseSequence*>{}),
                  EmptyDatasetError);
  CHECK_THROWS_AS(make_batch(model, {}, 0, 0), EmptyDatasetError);

  const std::vector<PoseSequence> data = tiny_dataset();
  TrainConfig small = tiny_train_cfg();
  small.batch = 1;
  Model m1 = make_model(small);
  CHECK_THROWS_AS(train(m1, data), BatchTooSmallError);

  // a NaN in the length-head bias reaches the per-frame joint loss directly
  Model poisoned = make_model(tiny_train_cfg());
  poisoned.store.at("len.head.b").value[0] = std::nan("");
  CHECK_THROWS_AS(train(poisoned, data), NonFiniteLossError);

  TrainConfig bad = tiny_train_cfg();
  bad.model = "transformer";
  CHECK_THROWS_AS(make_model(bad), ConfigError);
  bad = tiny_train_cfg();
  bad.composition = "magic";
  CHECK_THROWS_AS(make_model(bad), ConfigError);
}

TEST_CASE("validation split separates actors") {
  const std::vector<PoseSequence> data = tiny_dataset();
  std::vector<const PoseSequence*> tr, va;
  split_by_actor(data, 1, &tr, &va);
  CHECK(tr.size() == 2);
  CHECK(va.size() == 1);
  for (const PoseSequence* a : tr)
    for (const PoseSequence* b : va) CHECK(a->actor_id != b->actor_id);
}
