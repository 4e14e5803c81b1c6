#include "bonekin/ablate.hpp"

#include <algorithm>

#include <json.hpp>

namespace bonekin {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double train_and_eval(TrainConfig cfg, const std::vector<PoseSequence>& data) {
  Model model = make_model(cfg);
  TrainOptions opts;
  opts.epoch_eval = false;
  train(model, data, opts);
  std::vector<const PoseSequence*> train_videos, val_videos;
  split_by_actor(data, cfg.val_actors, &train_videos, &val_videos);
  return evaluate(model, val_videos, cfg.eval_stride).mpjpe_mm;
}

}  // namespace

AblationReport run_ablation(const GeneratorConfig& gen, TrainConfig base,
                            const std::vector<uint64_t>& seeds) {
  const SkeletonTopology topo = default_topology17();
  const std::vector<PoseSequence> data = generate_dataset(gen, topo);

  const std::vector<std::string> names = {
      "full", "consecutive-sampling", "direct-regression", "no-augmentation",
      "no-visibility-fusion"};
  std::map<std::string, std::vector<double>> results;

  for (uint64_t seed : seeds) {
    TrainConfig cfg = base;
    cfg.seed = seed;

    // The reference model also serves the sampling-strategy comparison: the
    // length branch is retargeted at evaluation time only.
    {
      Model model = make_model(cfg);
      TrainOptions opts;
      opts.epoch_eval = false;
      train(model, data, opts);
      std::vector<const PoseSequence*> train_videos, val_videos;
      split_by_actor(data, cfg.val_actors, &train_videos, &val_videos);
      results["full"].push_back(
          evaluate(model, val_videos, cfg.eval_stride).mpjpe_mm);
      Model consecutive = std::move(model);
      consecutive.cfg.strategy = "consecutive";
      consecutive.cfg.strategy_m = cfg.l;
      results["consecutive-sampling"].push_back(
          evaluate(consecutive, val_videos, cfg.eval_stride).mpjpe_mm);
    }
    {
      TrainConfig c = cfg;
      c.model = "direct";
      results["direct-regression"].push_back(train_and_eval(c, data));
    }
    {
      TrainConfig c = cfg;
      c.augment = false;
      results["no-augmentation"].push_back(train_and_eval(c, data));
    }
    {
      TrainConfig c = cfg;
      c.vis_fusion = false;
      results["no-visibility-fusion"].push_back(train_and_eval(c, data));
    }
  }

  AblationReport report;
  for (const std::string& name : names) {
    AblationRow row;
    row.name = name;
    row.mpjpe_per_seed = results[name];
    row.median_mpjpe = median(row.mpjpe_per_seed);
    report.rows.push_back(std::move(row));
  }
  for (const std::string& name : names) {
    if (name == "full") continue;
    std::vector<double> deltas;
    for (size_t i = 0; i < seeds.size(); ++i)
      deltas.push_back(results[name][i] - results["full"][i]);
    report.median_delta[name] = median(deltas);
  }
  return report;
}

std::string ablation_to_json(const AblationReport& report) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const AblationRow& row : report.rows)
    j["rows"].push_back({{"name", row.name},
                         {"mpjpe_per_seed_mm", row.mpjpe_per_seed},
                         {"median_mpjpe_mm", row.median_mpjpe}});
  j["median_delta_mm"] = report.median_delta;
  return j.dump(2);
}

}  // namespace bonekin
