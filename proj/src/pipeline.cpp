#include "bonekin/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "bonekin/errors.hpp"

namespace bonekin {

namespace {

std::vector<int> window_indices(int T, int t, int d, bool causal) {
  std::vector<int> idx;
  idx.reserve(static_cast<size_t>(d));
  const int start = causal ? t - d + 1 : t - (d - 1) / 2;
  for (int i = 0; i < d; ++i)
    idx.push_back(std::clamp(start + i, 0, T - 1));  // replicate edge frames
  return idx;
}

// 2D inputs are root-centered per frame: the skeleton's absolute image
// position is a nuisance variable, and removing it spares the networks from
// having to learn translation invariance from a handful of camera placements.
void fill_direction_window(const PoseSequence& video, const std::vector<int>& idx,
                           int item, int root, Tensor* kp, Tensor* vis) {
  const int j = static_cast<int>(video.poses3d[0].joints.size());
  const int d = static_cast<int>(idx.size());
  for (int w = 0; w < d; ++w) {
    const auto& frame_kp = video.keypoints2d[static_cast<size_t>(idx[static_cast<size_t>(w)])];
    const auto& rk = frame_kp[static_cast<size_t>(root)];
    for (int k = 0; k < j; ++k) {
      kp->at(item, 2 * k, w) = frame_kp[static_cast<size_t>(k)][0] - rk[0];
      kp->at(item, 2 * k + 1, w) = frame_kp[static_cast<size_t>(k)][1] - rk[1];
      vis->at(item, k, w) =
          video.visibility.empty()
              ? 1.0
              : video.visibility[static_cast<size_t>(idx[static_cast<size_t>(w)])]
                                [static_cast<size_t>(k)];
    }
  }
}

void fill_length_row(const PoseSequence& video, int frame, int row, int root,
                     Tensor* kp) {
  const auto& frame_kp = video.keypoints2d[static_cast<size_t>(frame)];
  const int j = static_cast<int>(frame_kp.size());
  const auto& rk = frame_kp[static_cast<size_t>(root)];
  for (int k = 0; k < j; ++k) {
    kp->at(row, 2 * k) = frame_kp[static_cast<size_t>(k)][0] - rk[0];
    kp->at(row, 2 * k + 1) = frame_kp[static_cast<size_t>(k)][1] - rk[1];
  }
}

uint64_t hash_string(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

int eval_threads() {
  if (const char* env = std::getenv("BONEKIN_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

}  // namespace

DirectionNetConfig Model::direction_config() const {
  DirectionNetConfig dc;
  dc.d = cfg.d;
  dc.s = cfg.s;
  dc.channels = cfg.channels;
  dc.num_subnets = cfg.num_subnets;
  dc.visibility_fusion = cfg.vis_fusion;
  dc.causal = cfg.causal;
  dc.dropout = cfg.dropout;
  dc.head_dim = direct() ? 3 * topo.joints() : 0;
  return dc;
}

LengthNetConfig Model::length_config() const {
  LengthNetConfig lc;
  lc.l = cfg.l;
  lc.residual_blocks = cfg.length_blocks;
  lc.channels = cfg.channels;
  lc.gamma = cfg.gamma;
  lc.strategy = parse_strategy(cfg.strategy);
  lc.budget = cfg.strategy_m;
  lc.attention = cfg.attention;
  lc.dropout = cfg.dropout;
  return lc;
}

Model make_model(const TrainConfig& cfg) {
  Model m;
  m.topo = default_topology17();
  m.cfg = cfg;
  if (cfg.model != "anatomy" && cfg.model != "direct")
    throw ConfigError("unknown model \"" + cfg.model + "\"");
  if (cfg.composition != "analytic" && cfg.composition != "heads")
    throw ConfigError("unknown composition mode \"" + cfg.composition + "\"");
  Rng rng = make_rng(cfg.seed, 0x1417);
  DirectionNet dnet(m.direction_config(), &m.topo);
  dnet.init_params(m.store, rng);
  if (!m.direct()) {
    LengthNet lnet(m.length_config(), &m.topo);
    lnet.init_params(m.store, rng);
    if (m.heads()) {
      const int nb = m.topo.num_bones();
      const int P = static_cast<int>(m.topo.nonadjacent_pairs.size());
      m.store.add_uniform("comp.joint.w", {3 * m.topo.joints(), 4 * nb}, 4 * nb,
                          rng);
      m.store.add("comp.joint.b", {3 * m.topo.joints()});
      m.store.add_uniform("comp.shift.w", {3 * P, 4 * nb}, 4 * nb, rng);
      m.store.add("comp.shift.b", {3 * P});
    }
  }
  // Pre-create batch-norm running stats so concurrent read-only evaluation
  // never has to add store entries.
  std::vector<std::string> prefixes;
  for (const auto& [name, entry] : m.store.entries()) {
    const std::string tail = ".bn.g";
    if (name.size() > tail.size() &&
        name.compare(name.size() - tail.size(), tail.size(), tail) == 0)
      prefixes.push_back(name.substr(0, name.size() - 2));
  }
  for (const std::string& p : prefixes) {
    m.store.add(p + ".mean", {m.store.at(p + ".g").shape[0]}, false);
    ParamEntry& v = m.store.add(p + ".var", {m.store.at(p + ".g").shape[0]}, false);
    std::fill(v.value.begin(), v.value.end(), 1.0);
  }
  return m;
}

void save_model(const Model& model, const std::string& path) {
  model.store.save(path, config_hash(model.cfg));
}

std::string load_model(Model& model, const std::string& path) {
  return model.store.load(path);
}

Batch make_batch(const Model& model,
                 const std::vector<const PoseSequence*>& videos,
                 uint64_t salt_a, uint64_t salt_b) {
  if (videos.empty()) throw EmptyDatasetError("make_batch: no videos");
  const TrainConfig& cfg = model.cfg;
  const SkeletonTopology& topo = model.topo;
  const int B = cfg.batch, j = topo.joints(), nb = topo.num_bones();
  const int P = static_cast<int>(topo.nonadjacent_pairs.size());
  const int d = cfg.d, l = cfg.l;
  Rng rng = make_rng(cfg.seed, 0x6a7c, salt_a, salt_b);

  Batch batch;
  batch.dir_keypoints = Tensor({B, 2 * j, d});
  batch.dir_visibility = Tensor({B, j, d});
  batch.gt_directions = Tensor({B, 3 * nb});
  batch.gt_shifts = Tensor({B, P, 3});
  batch.gt_center_pose = Tensor({B, 3 * j});
  batch.gt_lengths = Tensor({B, nb});
  if (!model.direct()) batch.len_keypoints = Tensor({B * l, 2 * j});

  LengthNetConfig lc = model.length_config();
  // Training always samples the length branch randomly (whole video, or the
  // causal prefix); the firstframe/consecutive budgets are inference modes.
  lc.strategy =
      cfg.causal ? SampleStrategy::kCausalRandom : SampleStrategy::kRandom;

  for (int b = 0; b < B; ++b) {
    const PoseSequence& video =
        *videos[static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(videos.size()) - 1))];
    const int T = video.frames();
    const int t = uniform_int(rng, 0, T - 1);
    fill_direction_window(video, window_indices(T, t, d, cfg.causal), b,
                          topo.root_index, &batch.dir_keypoints,
                          &batch.dir_visibility);

    const Pose3D& pose = video.poses3d[static_cast<size_t>(t)];
    const BoneRepresentation rep = decompose(pose, topo);
    for (int bi = 0; bi < nb; ++bi)
      for (int r = 0; r < 3; ++r)
        batch.gt_directions.at(b, 3 * bi + r) = rep.directions[static_cast<size_t>(bi)][static_cast<size_t>(r)];
    for (int p = 0; p < P; ++p) {
      const auto& [k1, k2] = topo.nonadjacent_pairs[static_cast<size_t>(p)];
      for (int r = 0; r < 3; ++r)
        batch.gt_shifts.at(b, p, r) =
            (pose.joints[static_cast<size_t>(k2)][static_cast<size_t>(r)] -
             pose.joints[static_cast<size_t>(k1)][static_cast<size_t>(r)]) /
            kMmPerUnit;
    }
    for (int k = 0; k < j; ++k)
      for (int r = 0; r < 3; ++r)
        batch.gt_center_pose.at(b, 3 * k + r) =
            pose.joints[static_cast<size_t>(k)][static_cast<size_t>(r)] / kMmPerUnit;
    const BoneRepresentation rep0 = decompose(video.poses3d[0], topo);
    for (int bi = 0; bi < nb; ++bi)
      batch.gt_lengths.at(b, bi) = rep0.lengths[static_cast<size_t>(bi)] / kMmPerUnit;

    if (!model.direct()) {
      const std::vector<int> frames = sample_frames(T, t, lc, rng);
      for (int q = 0; q < l; ++q)
        fill_length_row(video, frames[static_cast<size_t>(q)], b * l + q,
                        topo.root_index, &batch.len_keypoints);
      const int chosen = uniform_int(rng, 0, l - 1);
      batch.chosen_rows.push_back(b * l + chosen);
      const Pose3D& cp = video.poses3d[static_cast<size_t>(frames[static_cast<size_t>(chosen)])];
      if (batch.gt_chosen_pose.size() == 0)
        batch.gt_chosen_pose = Tensor({B, 3 * j});
      for (int k = 0; k < j; ++k)
        for (int r = 0; r < 3; ++r)
          batch.gt_chosen_pose.at(b, 3 * k + r) =
              cp.joints[static_cast<size_t>(k)][static_cast<size_t>(r)] / kMmPerUnit;
    }
  }
  return batch;
}

LossNodes build_losses(const Model& model, Graph& g, const Batch& batch,
                       bool train, uint64_t dropout_seed) {
  const TrainConfig& cfg = model.cfg;
  LossNodes out;
  const int kp = g.input(batch.dir_keypoints);
  const int vis = g.input(batch.dir_visibility);

  DirectionNet dnet(model.direction_config(), &model.topo);
  const DirectionNet::Forward dir =
      dnet.build(g, kp, vis, train, derive_seed(dropout_seed, 1));

  std::vector<int> loss_nodes;
  std::vector<double> weights;

  if (model.direct()) {
    const int gt = g.input(batch.gt_center_pose);
    for (int node : dir.subnet_outputs) {
      out.d.push_back(g.pose_l2_loss(node, gt));
      loss_nodes.push_back(out.d.back());
      weights.push_back(1.0);
    }
    out.total = g.scale_add(loss_nodes, weights);
    return out;
  }

  const int gt_dirs = g.input(batch.gt_directions);
  for (int node : dir.subnet_outputs) {
    out.d.push_back(g.sq_l2_loss(node, gt_dirs));
    loss_nodes.push_back(out.d.back());
    weights.push_back(cfg.lambda_d);
  }

  LengthNet lnet(model.length_config(), &model.topo);
  const int len_kp = g.input(batch.len_keypoints);
  const int B = batch.dir_keypoints.dim(0);
  const LengthNet::Forward len =
      lnet.build(g, len_kp, B, cfg.l, train, derive_seed(dropout_seed, 2));

  out.j = g.pose_l2_loss(g.gather_rows(len.joints, batch.chosen_rows),
                         g.input(batch.gt_chosen_pose));
  loss_nodes.push_back(out.j);
  weights.push_back(cfg.lambda_j);

  if (cfg.attention) {
    out.l = g.sq_l2_loss(len.fused, g.input(batch.gt_lengths));
    loss_nodes.push_back(out.l);
    weights.push_back(cfg.lambda_l);
  }

  const int gt_shifts = g.input(batch.gt_shifts);
  const int stopped_lengths = g.stop_grad(len.fused);
  if (model.heads()) {
    const int feat = g.concat_channels(stopped_lengths, dir.final_output);
    const int pred_shifts =
        g.affine(feat, g.param("comp.shift.w"), g.param("comp.shift.b"));
    out.js = g.shift_loss_from_vec(pred_shifts, gt_shifts);
    // joint composition head, trained against the center-frame pose with
    // both branch inputs gradient-stopped
    const int head_feat =
        g.concat_channels(stopped_lengths, g.stop_grad(dir.final_output));
    const int pred_pose =
        g.affine(head_feat, g.param("comp.joint.w"), g.param("comp.joint.b"));
    loss_nodes.push_back(
        g.pose_l2_loss(pred_pose, g.input(batch.gt_center_pose)));
    weights.push_back(cfg.lambda_j);
  } else {
    out.js =
        g.shift_loss(stopped_lengths, dir.final_output, gt_shifts, &model.topo);
  }
  loss_nodes.push_back(out.js);
  weights.push_back(cfg.lambda_js);

  out.total = g.scale_add(loss_nodes, weights);
  return out;
}

int build_length_only_loss(const Model& model, Graph& g, const Batch& batch,
                           bool train, uint64_t dropout_seed) {
  if (!model.cfg.attention)
    throw ConfigError(
        "length-only (augmented) loss needs the attention module enabled");
  LengthNet lnet(model.length_config(), &model.topo);
  const int len_kp = g.input(batch.len_keypoints);
  const int B = batch.dir_keypoints.dim(0);
  const LengthNet::Forward len =
      lnet.build(g, len_kp, B, model.cfg.l, train, derive_seed(dropout_seed, 3));
  const int ll = g.sq_l2_loss(len.fused, g.input(batch.gt_lengths));
  return g.scale_add({ll}, {model.cfg.lambda_l});
}

void split_by_actor(const std::vector<PoseSequence>& dataset, int val_actors,
                    std::vector<const PoseSequence*>* train_videos,
                    std::vector<const PoseSequence*>* val_videos) {
  std::vector<std::string> actors;
  for (const PoseSequence& v : dataset)
    if (std::find(actors.begin(), actors.end(), v.actor_id) == actors.end())
      actors.push_back(v.actor_id);
  const int n = static_cast<int>(actors.size());
  const int first_val = std::max(0, n - val_actors);
  std::set<std::string> val_set(actors.begin() + first_val, actors.end());
  for (const PoseSequence& v : dataset) {
    if (val_set.count(v.actor_id))
      val_videos->push_back(&v);
    else
      train_videos->push_back(&v);
  }
}

std::vector<EpochLog> train(Model& model,
                            const std::vector<PoseSequence>& dataset,
                            const TrainOptions& opts) {
  if (dataset.empty()) throw EmptyDatasetError("train: empty dataset");
  const TrainConfig& cfg = model.cfg;
  std::vector<const PoseSequence*> train_videos, val_videos;
  split_by_actor(dataset, cfg.val_actors, &train_videos, &val_videos);
  if (train_videos.empty())
    throw EmptyDatasetError("train: no training videos after the actor split");

  int64_t total_frames = 0;
  for (const PoseSequence* v : train_videos) total_frames += v->frames();
  const int steps = cfg.steps_per_epoch > 0
                        ? cfg.steps_per_epoch
                        : std::max<int>(1, static_cast<int>(total_frames / cfg.batch));

  const bool use_aug = cfg.augment && !model.direct() && cfg.attention;

  std::ofstream log;
  if (!opts.log_path.empty()) {
    log.open(opts.log_path);
    if (!log) throw FormatError("train: cannot open log file " + opts.log_path);
  }

  std::vector<EpochLog> logs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr * std::pow(cfg.lr_decay, epoch);

    std::vector<PoseSequence> aug;
    std::vector<const PoseSequence*> aug_ptrs;
    if (use_aug) {
      aug.reserve(train_videos.size());
      for (size_t vi = 0; vi < train_videos.size(); ++vi) {
        Rng rng = make_rng(cfg.seed, 0xaa9, static_cast<uint64_t>(epoch), vi);
        aug.push_back(augment_video(*train_videos[vi], model.topo, rng));
      }
      for (const PoseSequence& v : aug) aug_ptrs.push_back(&v);
    }

    EpochLog ep;
    ep.epoch = epoch;
    ep.lr = lr;
    for (int step = 0; step < steps; ++step) {
      const uint64_t dropout_seed =
          derive_seed(cfg.seed, 0xd20, static_cast<uint64_t>(epoch),
                      static_cast<uint64_t>(step));
      const Batch batch = make_batch(model, train_videos,
                                     static_cast<uint64_t>(epoch),
                                     static_cast<uint64_t>(step));
      Graph g(&model.store);
      const LossNodes losses = build_losses(model, g, batch, true, dropout_seed);
      g.forward();
      const double total = g.value(losses.total).at(0);
      if (!std::isfinite(total))
        throw NonFiniteLossError("train: non-finite loss at epoch " +
                                 std::to_string(epoch) + " step " +
                                 std::to_string(step));
      g.backward(losses.total);

      for (int node : losses.d) ep.loss_d += g.value(node).at(0);
      if (losses.l >= 0) ep.loss_l += g.value(losses.l).at(0);
      if (losses.j >= 0) ep.loss_j += g.value(losses.j).at(0);
      if (losses.js >= 0) ep.loss_js += g.value(losses.js).at(0);
      ep.total += total;

      if (use_aug) {
        const Batch aug_batch =
            make_batch(model, aug_ptrs, static_cast<uint64_t>(epoch),
                       static_cast<uint64_t>(step) + 0x40000000ULL);
        Graph g2(&model.store);
        const int aug_loss = build_length_only_loss(
            model, g2, aug_batch, true, derive_seed(dropout_seed, 4));
        g2.forward();
        if (!std::isfinite(g2.value(aug_loss).at(0)))
          throw NonFiniteLossError("train: non-finite augmented loss");
        g2.backward(aug_loss);
      }
      model.store.adam_step(lr);
    }
    ep.loss_d /= steps;
    ep.loss_l /= steps;
    ep.loss_j /= steps;
    ep.loss_js /= steps;
    ep.total /= steps;

    if (opts.epoch_eval && !val_videos.empty())
      ep.val = evaluate(model, val_videos, cfg.eval_stride);

    if (log) {
      nlohmann::json line = {
          {"epoch", ep.epoch},     {"lr", ep.lr},
          {"loss_d", ep.loss_d},   {"loss_l", ep.loss_l},
          {"loss_j", ep.loss_j},   {"loss_js", ep.loss_js},
          {"loss_total", ep.total}};
      if (!val_videos.empty()) {
        line["val"] = {{"mpjpe_mm", ep.val.mpjpe_mm},
                       {"p_mpjpe_mm", ep.val.p_mpjpe_mm},
                       {"pck150", ep.val.pck150},
                       {"auc", ep.val.auc}};
        if (ep.val.mpjve_mm) line["val"]["mpjve_mm"] = *ep.val.mpjve_mm;
      }
      log << line.dump() << '\n';
      log.flush();
    }
    logs.push_back(std::move(ep));
  }

  if (!opts.checkpoint_path.empty()) save_model(model, opts.checkpoint_path);
  return logs;
}

Predictor::Predictor(const Model& model, const PoseSequence& video)
    : model_(model),
      video_(video),
      dnet_(model.direction_config(), &model.topo),
      lnet_(model.length_config(), &model.topo) {
  if (video_.keypoints2d.empty())
    throw FormatError("predict: video carries no 2D keypoints");
}

std::vector<double> Predictor::fused_lengths_mm(int t) {
  const LengthNetConfig lc = lnet_.config();
  if (lc.strategy == SampleStrategy::kFirstFrame && cache_valid_ &&
      t + 1 >= lc.budget)
    return cached_lengths_;

  const int T = video_.frames();
  Rng rng = make_rng(model_.cfg.seed, 0x9e0, hash_string(video_.actor_id) ^
                                                 static_cast<uint64_t>(T),
                     static_cast<uint64_t>(t));
  const std::vector<int> frames = sample_frames(T, t, lc, rng);
  const int n = static_cast<int>(frames.size());
  const int j = model_.topo.joints();
  Tensor kp({n, 2 * j});
  for (int q = 0; q < n; ++q)
    fill_length_row(video_, frames[static_cast<size_t>(q)], q,
                    model_.topo.root_index, &kp);

  Graph g(const_cast<ParameterStore*>(&model_.store));
  const LengthNet::Forward len =
      lnet_.build(g, g.input(std::move(kp)), 1, n, false, 0);
  g.forward();
  const Tensor& fused = g.value(len.fused);
  std::vector<double> out(static_cast<size_t>(model_.topo.num_bones()));
  for (size_t b = 0; b < out.size(); ++b)
    out[b] = fused.at(0, static_cast<int>(b)) * kMmPerUnit;

  if (lc.strategy == SampleStrategy::kFirstFrame && t + 1 >= lc.budget) {
    cached_lengths_ = out;
    cache_valid_ = true;
  }
  return out;
}

Pose3D Predictor::predict(int t) {
  const int T = video_.frames();
  if (t < 0 || t >= T) throw IndexError("predict: frame index out of range");
  const SkeletonTopology& topo = model_.topo;
  const int j = topo.joints(), nb = topo.num_bones();
  const TrainConfig& cfg = model_.cfg;

  Tensor kp({1, 2 * j, cfg.d});
  Tensor vis({1, j, cfg.d});
  fill_direction_window(video_, window_indices(T, t, cfg.d, cfg.causal), 0,
                        topo.root_index, &kp, &vis);
  Graph g(const_cast<ParameterStore*>(&model_.store));
  const DirectionNet::Forward dir =
      dnet_.build(g, g.input(std::move(kp)), g.input(std::move(vis)), false, 0);
  g.forward();
  const Tensor& head = g.value(dir.final_output);

  Pose3D pose;
  pose.joints.assign(static_cast<size_t>(j), Vec3{0, 0, 0});
  if (model_.direct()) {
    for (int k = 0; k < j; ++k)
      pose.joints[static_cast<size_t>(k)] = {head.at(0, 3 * k) * kMmPerUnit,
                                             head.at(0, 3 * k + 1) * kMmPerUnit,
                                             head.at(0, 3 * k + 2) * kMmPerUnit};
    pose.joints[static_cast<size_t>(topo.root_index)] = {0, 0, 0};
    return pose;
  }

  std::vector<Vec3> dirs(static_cast<size_t>(nb));
  for (int b = 0; b < nb; ++b) {
    Vec3 v = {head.at(0, 3 * b), head.at(0, 3 * b + 1), head.at(0, 3 * b + 2)};
    const double nm = norm(v);
    dirs[static_cast<size_t>(b)] = nm < 1e-6 ? Vec3{0, 0, 1} : v * (1.0 / nm);
  }
  const std::vector<double> lengths = fused_lengths_mm(t);

  if (model_.heads()) {
    // affine composition head on [lengths; directions] (both in net units)
    const ParamEntry& w = model_.store.at("comp.joint.w");
    const ParamEntry& bias = model_.store.at("comp.joint.b");
    std::vector<double> feat(static_cast<size_t>(4 * nb));
    for (int b = 0; b < nb; ++b) {
      feat[static_cast<size_t>(b)] = lengths[static_cast<size_t>(b)] / kMmPerUnit;
      for (int r = 0; r < 3; ++r)
        feat[static_cast<size_t>(nb + 3 * b + r)] =
            g.value(dir.final_output).at(0, 3 * b + r);
    }
    for (int k = 0; k < 3 * j; ++k) {
      double y = bias.value[static_cast<size_t>(k)];
      for (int f = 0; f < 4 * nb; ++f)
        y += w.value[static_cast<size_t>(k * 4 * nb + f)] * feat[static_cast<size_t>(f)];
      pose.joints[static_cast<size_t>(k / 3)][static_cast<size_t>(k % 3)] =
          y * kMmPerUnit;
    }
    pose.joints[static_cast<size_t>(topo.root_index)] = {0, 0, 0};
    return pose;
  }

  BoneRepresentation rep;
  rep.lengths = lengths;
  rep.directions = std::move(dirs);
  return compose(rep, topo);
}

Pose3D predict_frame(const Model& model, const PoseSequence& video, int t) {
  Predictor p(model, video);
  return p.predict(t);
}

JointSeq predict_sequence(const Model& model, const PoseSequence& video,
                          int stride) {
  Predictor p(model, video);
  JointSeq out;
  for (int t = 0; t < video.frames(); t += stride)
    out.push_back(p.predict(t).joints);
  return out;
}

MetricReport evaluate(const Model& model,
                      const std::vector<const PoseSequence*>& videos,
                      int stride) {
  if (videos.empty()) throw EmptyDatasetError("evaluate: no videos");
  std::vector<JointSeq> preds(videos.size());

  const int nthreads =
      std::min<int>(eval_threads(), static_cast<int>(videos.size()));
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= videos.size()) break;
      preds[i] = predict_sequence(model, *videos[i], stride);
    }
  };
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  JointSeq all_pred, all_gt;
  double mpjve_num = 0;
  int64_t mpjve_den = 0;
  for (size_t i = 0; i < videos.size(); ++i) {
    JointSeq gt;
    for (int t = 0; t < videos[i]->frames(); t += stride)
      gt.push_back(videos[i]->poses3d[static_cast<size_t>(t)].joints);
    if (gt.size() >= 2) {
      mpjve_num += mpjve(preds[i], gt) * static_cast<double>(gt.size() - 1);
      mpjve_den += static_cast<int64_t>(gt.size()) - 1;
    }
    all_pred.insert(all_pred.end(), preds[i].begin(), preds[i].end());
    all_gt.insert(all_gt.end(), gt.begin(), gt.end());
  }

  MetricReport report = evaluate_metrics(all_pred, all_gt);
  if (mpjve_den > 0)
    report.mpjve_mm = mpjve_num / static_cast<double>(mpjve_den);
  else
    report.mpjve_mm.reset();
  return report;
}

MetricReport evaluate(const Model& model,
                      const std::vector<PoseSequence>& videos, int stride) {
  std::vector<const PoseSequence*> ptrs;
  ptrs.reserve(videos.size());
  for (const PoseSequence& v : videos) ptrs.push_back(&v);
  return evaluate(model, ptrs, stride);
}

}  // namespace bonekin
