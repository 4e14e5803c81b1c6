#pragma once

#include <string>
#include <vector>

#include "bonekin/config.hpp"
#include "bonekin/direction_net.hpp"
#include "bonekin/length_net.hpp"
#include "bonekin/metrics.hpp"

namespace bonekin {

// The networks regress joint coordinates in meters; poses are converted at
// the composition/evaluation boundary.
inline constexpr double kMmPerUnit = 1000.0;

struct Model {
  SkeletonTopology topo;
  TrainConfig cfg;
  ParameterStore store;

  DirectionNetConfig direction_config() const;
  LengthNetConfig length_config() const;
  bool direct() const { return cfg.model == "direct"; }
  bool heads() const { return cfg.composition == "heads"; }
};

// Fresh model with parameters initialized from cfg.seed. Batch-norm running
// stats are pre-created so read-only evaluation never mutates the store.
Model make_model(const TrainConfig& cfg);

void save_model(const Model& model, const std::string& path);
// Loads parameters into a model built from cfg; returns the stored config
// hash (callers may compare against config_hash(cfg)).
std::string load_model(Model& model, const std::string& path);

// One training mini-batch, assembled deterministically from
// (cfg.seed, salt_a, salt_b).
struct Batch {
  Tensor dir_keypoints;   // [B, 2j, d]
  Tensor dir_visibility;  // [B, j, d]
  Tensor gt_directions;   // [B, 3(j-1)], unit
  Tensor gt_shifts;       // [B, P, 3], meters
  Tensor gt_center_pose;  // [B, 3j], meters (direction-window center frame)
  Tensor len_keypoints;   // [B*l, 2j]
  Tensor gt_lengths;      // [B, j-1], meters
  Tensor gt_chosen_pose;  // [B, 3j], meters
  std::vector<int> chosen_rows;  // row into the length-net joint output
};

Batch make_batch(const Model& model,
                 const std::vector<const PoseSequence*>& videos,
                 uint64_t salt_a, uint64_t salt_b);

// Loss node ids inside one training graph. For the direct-regression
// baseline only `d` (per-sub-network pose losses) and `total` are set.
struct LossNodes {
  std::vector<int> d;  // per sub-network
  int l = -1;
  int j = -1;
  int js = -1;
  int total = -1;
};

LossNodes build_losses(const Model& model, Graph& g, const Batch& batch,
                       bool train, uint64_t dropout_seed);

// Length-branch-only graph for augmented batches (contributes lambda_l * L_L).
int build_length_only_loss(const Model& model, Graph& g, const Batch& batch,
                           bool train, uint64_t dropout_seed);

void split_by_actor(const std::vector<PoseSequence>& dataset, int val_actors,
                    std::vector<const PoseSequence*>* train_videos,
                    std::vector<const PoseSequence*>* val_videos);

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double loss_d = 0, loss_l = 0, loss_j = 0, loss_js = 0, total = 0;
  MetricReport val;
};

struct TrainOptions {
  std::string log_path;        // JSON-lines, one object per epoch
  std::string checkpoint_path; // written after the final epoch
  bool epoch_eval = true;      // validate after every epoch (costly; callers
                               // that only need the final metrics disable it)
};

std::vector<EpochLog> train(Model& model,
                            const std::vector<PoseSequence>& dataset,
                            const TrainOptions& opts = {});

// Per-video predictor; caches fused bone lengths for the firstframe strategy.
class Predictor {
 public:
  Predictor(const Model& model, const PoseSequence& video);
  Pose3D predict(int t);

 private:
  std::vector<double> fused_lengths_mm(int t);

  const Model& model_;
  const PoseSequence& video_;
  DirectionNet dnet_;
  LengthNet lnet_;
  std::vector<double> cached_lengths_;
  bool cache_valid_ = false;
};

Pose3D predict_frame(const Model& model, const PoseSequence& video, int t);
JointSeq predict_sequence(const Model& model, const PoseSequence& video,
                          int stride = 1);

// Protocol metrics over every stride-th frame of every video; per-video
// prediction fans out over BONEKIN_THREADS workers, merged in video order.
MetricReport evaluate(const Model& model,
                      const std::vector<const PoseSequence*>& videos,
                      int stride = 1);
MetricReport evaluate(const Model& model,
                      const std::vector<PoseSequence>& videos, int stride = 1);

}  // namespace bonekin
