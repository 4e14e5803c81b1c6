#pragma once

#include <set>
#include <string>
#include <vector>

#include "bonekin/params.hpp"
#include "bonekin/skeleton.hpp"
#include "bonekin/tensor.hpp"

namespace bonekin {

// Differentiable kernel graph. Nodes are appended in topological order; a
// forward pass executes every node, a backward pass walks the list in reverse
// and accumulates exact gradients into the ParameterStore. Gradient-stop
// edges are realized by stop_grad nodes, which pass values through and block
// all backward flow.
class Graph {
 public:
  explicit Graph(ParameterStore* store) : store_(store) {}

  int input(Tensor t);
  int param(const std::string& name);
  int stop_grad(int x);

  // out = x * W^T + b over the last axis; x [B,n], w [m,n], b [m].
  int affine(int x, int w, int b = -1);
  // Valid (unpadded) strided cross-correlation; x [B,Cin,T], k [Cout,Cin,W].
  int conv1d(int x, int k, int b, int stride);
  // Per-channel batch normalization; running stats live in the store under
  // running_prefix + ".mean" / ".var" (created on first use).
  int batch_norm(int x, int gamma, int beta, const std::string& running_prefix,
                 bool train);
  int relu(int x);
  int dropout(int x, double p, bool train, uint64_t seed);

  int add(int a, int b);
  int mul(int a, int b);
  int concat_channels(int a, int b);           // along axis 1
  int tile_time(int x, int times);             // [B,C,1] -> [B,C,times]
  int center_subsample(int x, int stride);     // [B,C,T] -> [B,C,T/stride]
  int reshape(int x, std::vector<int> shape);
  int gather_rows(int x, std::vector<int> rows);

  // lengths[n,b] = max(clamp, |J_child - J_parent|); joints [N, 3j].
  int bone_lengths(int joints, const SkeletonTopology* topo,
                   double clamp = 1e-6);
  // Softmax over the frame axis (axis 1) of gamma-scaled logits [B,l,k].
  int attention_softmax(int logits, double gamma);
  // out[b,k] = sum_l A[b,l,k] * X[b,l,k].
  int weighted_sum(int weights, int values);
  int mean_frames(int x);  // [B,l,k] -> [B,k]

  // Scalar losses (all average over the batch axis).
  int sq_l2_loss(int pred, int target);              // sum of squares
  int pose_l2_loss(int pred, int target);            // (1/j) sum_k |delta_k|
  // Joint shifts composed from predicted lengths and directions over the
  // non-adjacent pair set, compared to ground truth with per-pair Euclidean
  // norms. Predicted directions are normalized internally (norm clamped at
  // 1e-6).
  int shift_loss(int lengths, int dirs, int gt_shifts,
                 const SkeletonTopology* topo);
  int shift_loss_from_vec(int pred_shifts, int gt_shifts);
  int scale_add(const std::vector<int>& nodes,
                const std::vector<double>& weights);

  double forward();  // executes all nodes; returns last node's scalar if any
  void backward(int loss_node);

  const Tensor& value(int node) const { return nodes_[node].value; }
  const Tensor& grad(int node) const { return nodes_[node].grad; }

  // Parameter names reachable from `node` against gradient-stop edges.
  std::set<std::string> reachable_params(int node) const;

  ParameterStore* store() { return store_; }

 private:
  enum class Op {
    kInput, kParam, kStopGrad, kAffine, kConv1d, kBatchNorm, kRelu, kDropout,
    kAdd, kMul, kConcat, kTileTime, kCenterSubsample, kReshape, kGatherRows,
    kBoneLengths, kAttentionSoftmax, kWeightedSum, kMeanFrames,
    kSqL2Loss, kPoseL2Loss, kShiftLoss, kShiftLossFromVec, kScaleAdd
  };

  struct Node {
    Op op;
    std::vector<int> inputs;
    std::string name;  // param name or batch-norm running prefix
    int stride = 0;
    double scalar = 0;  // dropout p / softmax gamma / length clamp
    bool train = false;
    uint64_t seed = 0;
    std::vector<int> rows;
    std::vector<double> weights;
    const SkeletonTopology* topo = nullptr;
    Tensor value;
    Tensor grad;
    // scratch
    std::vector<double> aux1, aux2;
    std::vector<uint8_t> mask;
  };

  int push(Node n);
  void exec_forward(Node& n);
  void exec_backward(Node& n);
  const Tensor& in_val(const Node& n, int i) const {
    return nodes_[n.inputs[static_cast<size_t>(i)]].value;
  }
  Tensor& in_grad(Node& n, int i) {
    return nodes_[n.inputs[static_cast<size_t>(i)]].grad;
  }

  ParameterStore* store_;
  std::vector<Node> nodes_;
};

// Finite-difference gradient check: runs forward/backward once, then compares
// the analytic gradient of every reachable trainable parameter against
// central differences. Returns the worst relative error.
double grad_check(Graph& graph, int loss_node, double eps = 1e-5);

}  // namespace bonekin
