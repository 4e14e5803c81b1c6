#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bonekin/ablate.hpp"
#include "bonekin/dataset_io.hpp"
#include "bonekin/pipeline.hpp"
#include "bonekin/synth.hpp"

namespace {

using namespace bonekin;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  bool seed_given = false;
  int frames = 0;
  int subnets = 0;
  std::string strategy;
  std::string composition;
  bool causal = false;
  bool no_vis_fusion = false;
  bool no_augment = false;
  bool no_attention = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags* f) {
  cmd->add_option("--config", f->config_path, "JSON config file");
  cmd->add_option("--set", f->sets,
                  "override a config key, e.g. --set train.l=10");
  cmd->add_option("--seed", f->seed, "seed (generator and training)")
      ->each([f](const std::string&) { f->seed_given = true; });
  cmd->add_option("--frames", f->frames, "direction-net input frame count d");
  cmd->add_option("--subnets", f->subnets, "number of direction sub-networks");
  cmd->add_option("--strategy", f->strategy,
                  "length sampling strategy: random, causal-random, "
                  "firstframe, consecutive");
  cmd->add_option("--composition", f->composition,
                  "pose composition: analytic or heads");
  cmd->add_flag("--causal", f->causal, "causal (online) mode");
  cmd->add_flag("--no-vis-fusion", f->no_vis_fusion,
                "disable visibility-score fusion");
  cmd->add_flag("--no-augment", f->no_augment,
                "disable bone-length augmentation");
  cmd->add_flag("--no-attention", f->no_attention,
                "disable length attention (mean fusion, no length loss)");
}

CliConfig resolve_config(const CommonFlags& f) {
  std::map<std::string, std::string> overrides;
  for (const std::string& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got: " + kv);
    overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  if (f.seed_given) {
    overrides["generator.seed"] = std::to_string(f.seed);
    overrides["train.seed"] = std::to_string(f.seed);
  }
  if (f.frames > 0) overrides["train.d"] = std::to_string(f.frames);
  if (f.subnets > 0) overrides["train.num_subnets"] = std::to_string(f.subnets);
  if (!f.strategy.empty()) overrides["train.strategy"] = f.strategy;
  if (!f.composition.empty()) overrides["train.composition"] = f.composition;
  if (f.causal) overrides["train.causal"] = "true";
  if (f.no_vis_fusion) overrides["train.vis_fusion"] = "false";
  if (f.no_augment) overrides["train.augment"] = "false";
  if (f.no_attention) overrides["train.attention"] = "false";
  CliConfig cfg = load_config(f.config_path, overrides);
  std::cerr << "effective config:\n" << config_to_json(cfg) << "\n";
  return cfg;
}

double run_gradcheck_graph(const std::string& name, Graph& g, int loss,
                           double threshold, double* worst_overall) {
  g.forward();
  const double err = grad_check(g, loss);
  std::printf("%-28s worst relative error %.3e (threshold %.0e)\n",
              name.c_str(), err, threshold);
  *worst_overall = std::max(*worst_overall, err);
  if (err >= threshold)
    throw NonFiniteGradientError("gradcheck failed for " + name);
  return err;
}

int cmd_gradcheck() {
  Rng rng = make_rng(123, 0);
  auto randn = [&rng](std::vector<int> shape) {
    Tensor t(shape);
    for (double& v : t.data) v = gaussian(rng, 0.0, 1.0);
    return t;
  };
  double worst = 0;

  {
    ParameterStore store;
    store.add_uniform("w", {3, 5}, 5, rng);
    store.add_uniform("b", {3}, 1, rng);
    Graph g(&store);
    const int y = g.affine(g.input(randn({4, 5})), g.param("w"), g.param("b"));
    const int loss = g.sq_l2_loss(y, g.input(randn({4, 3})));
    run_gradcheck_graph("affine", g, loss, 1e-6, &worst);
  }
  {
    ParameterStore store;
    store.add_uniform("k", {4, 3, 3}, 9, rng);
    store.add_uniform("b", {4}, 1, rng);
    Graph g(&store);
    const int y =
        g.conv1d(g.input(randn({2, 3, 9})), g.param("k"), g.param("b"), 3);
    const int loss = g.sq_l2_loss(g.reshape(y, {2, 12}), g.input(randn({2, 12})));
    run_gradcheck_graph("conv1d", g, loss, 1e-6, &worst);
  }
  {
    ParameterStore store;
    store.add_uniform("g", {3}, 1, rng);
    store.add_uniform("b", {3}, 1, rng);
    Graph g(&store);
    const int y = g.batch_norm(g.input(randn({6, 3})), g.param("g"),
                               g.param("b"), "bn", true);
    const int loss = g.sq_l2_loss(g.relu(y), g.input(randn({6, 3})));
    run_gradcheck_graph("batch_norm+relu", g, loss, 1e-4, &worst);
  }
  {
    ParameterStore store;
    store.add_uniform("w", {4, 6}, 6, rng);
    Graph g(&store);
    const int logits = g.affine(g.input(randn({10, 6})), g.param("w"));
    const int att = g.attention_softmax(g.reshape(logits, {2, 5, 4}), 10.0);
    const int fused = g.weighted_sum(att, g.input(randn({2, 5, 4})));
    const int loss = g.sq_l2_loss(fused, g.input(randn({2, 4})));
    run_gradcheck_graph("attention fusion", g, loss, 1e-4, &worst);
  }
  {
    // both full networks with every loss term, tiny dims
    TrainConfig tc;
    tc.d = 9;
    tc.channels = 6;
    tc.l = 4;
    tc.batch = 3;
    tc.length_blocks = 1;
    tc.dropout = 0.0;
    tc.seed = 5;
    GeneratorConfig gc;
    gc.actors = 1;
    gc.videos_per_actor = 1;
    gc.frames = 40;
    gc.seed = 5;
    Model model = make_model(tc);
    const std::vector<PoseSequence> data =
        generate_dataset(gc, model.topo);
    std::vector<const PoseSequence*> ptrs = {&data[0]};
    const Batch batch = make_batch(model, ptrs, 0, 0);
    Graph g(&model.store);
    const LossNodes losses = build_losses(model, g, batch, true, 7);
    // every loss term is checked on its own: finite differences see through
    // gradient-stop edges, so checking the weighted total would mix the
    // deliberately blocked paths into the numeric derivative
    for (size_t i = 0; i < losses.d.size(); ++i)
      run_gradcheck_graph("direction loss, sub-net " + std::to_string(i), g,
                          losses.d[i], 1e-4, &worst);
    run_gradcheck_graph("per-frame joint loss", g, losses.j, 1e-4, &worst);
    run_gradcheck_graph("fused-length loss", g, losses.l, 1e-4, &worst);
    run_gradcheck_graph("joint shift loss", g, losses.js, 1e-4, &worst);
  }
  std::printf("gradcheck passed; worst relative error %.3e\n", worst);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anatomy-aware 3D human pose estimation toolkit"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, eval_f, predict_f, ablate_f;
  std::string gen_out = "dataset.jsonl";
  std::string train_data, train_out = "model.ckpt";
  std::string eval_data, eval_ckpt, eval_pred;
  std::string predict_data, predict_ckpt, predict_out = "predictions.jsonl";
  std::string ablate_seeds = "1,2,3";
  std::string gradcheck_dims = "tiny";

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common_flags(gen, &gen_f);
  gen->add_option("--out", gen_out, "output dataset path");

  CLI::App* tr = app.add_subcommand("train", "train a model");
  add_common_flags(tr, &train_f);
  tr->add_option("--data", train_data, "training dataset path")->required();
  tr->add_option("--out", train_out, "checkpoint output path");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint or predictions");
  add_common_flags(ev, &eval_f);
  ev->add_option("--data", eval_data, "ground-truth dataset path")->required();
  ev->add_option("--checkpoint", eval_ckpt, "model checkpoint path");
  ev->add_option("--pred", eval_pred, "prediction file (dataset schema)");

  CLI::App* pr = app.add_subcommand("predict", "export predicted pose sequences");
  add_common_flags(pr, &predict_f);
  pr->add_option("--data", predict_data, "input dataset path")->required();
  pr->add_option("--checkpoint", predict_ckpt, "model checkpoint path")->required();
  pr->add_option("--out", predict_out, "output path");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--dims", gradcheck_dims, "dimension preset (tiny)");

  CLI::App* ab = app.add_subcommand("ablate", "toggle matrix over seeds");
  add_common_flags(ab, &ablate_f);
  ab->add_option("--seeds", ablate_seeds, "comma-separated seed list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const SkeletonTopology topo = default_topology17();
    if (gen->parsed()) {
      const CliConfig cfg = resolve_config(gen_f);
      write_dataset(generate_dataset(cfg.generator, topo), topo, gen_out);
      std::cout << "wrote " << gen_out << "\n";
    } else if (tr->parsed()) {
      const CliConfig cfg = resolve_config(train_f);
      const std::vector<PoseSequence> data = read_dataset(train_data, topo);
      Model model = make_model(cfg.train);
      TrainOptions opts;
      opts.checkpoint_path = train_out;
      opts.log_path = train_out + ".log.jsonl";
      const std::vector<EpochLog> logs = train(model, data, opts);
      if (!logs.empty()) {
        const EpochLog& last = logs.back();
        std::cout << "final epoch " << last.epoch << ": total loss "
                  << last.total << ", validation MPJPE " << last.val.mpjpe_mm
                  << " mm\n";
      }
      std::cout << "wrote " << train_out << "\n";
    } else if (ev->parsed()) {
      const CliConfig cfg = resolve_config(eval_f);
      const std::vector<PoseSequence> data = read_dataset(eval_data, topo);
      MetricReport report;
      if (!eval_pred.empty()) {
        const std::vector<PoseSequence> preds = read_dataset(eval_pred, topo);
        if (preds.size() != data.size())
          throw FormatError("eval: prediction file has a different video count");
        JointSeq all_pred, all_gt;
        double mpjve_num = 0;
        int64_t mpjve_den = 0;
        for (size_t i = 0; i < data.size(); ++i) {
          JointSeq p, g;
          for (const Pose3D& f : preds[i].poses3d) p.push_back(f.joints);
          for (const Pose3D& f : data[i].poses3d) g.push_back(f.joints);
          if (g.size() >= 2) {
            mpjve_num += mpjve(p, g) * static_cast<double>(g.size() - 1);
            mpjve_den += static_cast<int64_t>(g.size()) - 1;
          }
          all_pred.insert(all_pred.end(), p.begin(), p.end());
          all_gt.insert(all_gt.end(), g.begin(), g.end());
        }
        report = evaluate_metrics(all_pred, all_gt);
        if (mpjve_den > 0)
          report.mpjve_mm = mpjve_num / static_cast<double>(mpjve_den);
        else
          report.mpjve_mm.reset();
      } else if (!eval_ckpt.empty()) {
        Model model = make_model(cfg.train);
        const std::string stored_hash = load_model(model, eval_ckpt);
        if (stored_hash != config_hash(cfg.train))
          std::cerr << "note: checkpoint was trained under a different config\n";
        report = evaluate(model, data, cfg.train.eval_stride);
      } else {
        throw ConfigError("eval: need --checkpoint or --pred");
      }
      nlohmann::json j = {{"mpjpe_mm", report.mpjpe_mm},
                          {"p_mpjpe_mm", report.p_mpjpe_mm},
                          {"pck150", report.pck150},
                          {"auc", report.auc}};
      if (report.mpjve_mm) j["mpjve_mm"] = *report.mpjve_mm;
      std::cout << j.dump(2) << "\n";
    } else if (pr->parsed()) {
      const CliConfig cfg = resolve_config(predict_f);
      const std::vector<PoseSequence> data = read_dataset(predict_data, topo);
      Model model = make_model(cfg.train);
      load_model(model, predict_ckpt);
      std::vector<PoseSequence> out;
      for (const PoseSequence& video : data) {
        PoseSequence p;
        p.actor_id = video.actor_id;
        p.camera = video.camera;
        const JointSeq seq = predict_sequence(model, video);
        for (const std::vector<Vec3>& joints : seq)
          p.poses3d.push_back(Pose3D{joints});
        out.push_back(std::move(p));
      }
      write_dataset(out, topo, predict_out);
      std::cout << "wrote " << predict_out << "\n";
    } else if (gc->parsed()) {
      if (gradcheck_dims != "tiny")
        throw ConfigError("gradcheck: unknown dimension preset \"" +
                          gradcheck_dims + "\"");
      return cmd_gradcheck();
    } else if (ab->parsed()) {
      const CliConfig cfg = resolve_config(ablate_f);
      std::vector<uint64_t> seeds;
      std::string token;
      for (std::stringstream ss(ablate_seeds); std::getline(ss, token, ',');)
        if (!token.empty()) seeds.push_back(std::stoull(token));
      if (seeds.empty()) throw ConfigError("ablate: empty seed list");
      const AblationReport report =
          run_ablation(cfg.generator, cfg.train, seeds);
      std::cout << ablation_to_json(report) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
