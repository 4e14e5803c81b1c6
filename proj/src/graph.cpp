#include "bonekin/graph.hpp"

#include <algorithm>
#include <cmath>

namespace bonekin {

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(Tensor t) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(t);
  return push(std::move(n));
}

int Graph::param(const std::string& name) {
  const ParamEntry& e = store_->at(name);
  Node n;
  n.op = Op::kParam;
  n.name = name;
  n.value = Tensor(e.shape);
  return push(std::move(n));
}

int Graph::stop_grad(int x) {
  Node n;
  n.op = Op::kStopGrad;
  n.inputs = {x};
  return push(std::move(n));
}

int Graph::affine(int x, int w, int b) {
  Node n;
  n.op = Op::kAffine;
  n.inputs = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
  return push(std::move(n));
}

int Graph::conv1d(int x, int k, int b, int stride) {
  Node n;
  n.op = Op::kConv1d;
  n.inputs = {x, k, b};
  n.stride = stride;
  return push(std::move(n));
}

int Graph::batch_norm(int x, int gamma, int beta,
                      const std::string& running_prefix, bool train) {
  if (!store_->has(running_prefix + ".mean")) {
    const Tensor& xv = nodes_[x].value;  // shape known only after forward for
    // derived nodes; gamma carries the channel count instead
    (void)xv;
    const int c = nodes_[gamma].value.dim(0);
    store_->add(running_prefix + ".mean", {c}, /*trainable=*/false);
    ParamEntry& var = store_->add(running_prefix + ".var", {c}, false);
    std::fill(var.value.begin(), var.value.end(), 1.0);
  }
  Node n;
  n.op = Op::kBatchNorm;
  n.inputs = {x, gamma, beta};
  n.name = running_prefix;
  n.train = train;
  return push(std::move(n));
}

int Graph::relu(int x) {
  Node n;
  n.op = Op::kRelu;
  n.inputs = {x};
  return push(std::move(n));
}

int Graph::dropout(int x, double p, bool train, uint64_t seed) {
  if (p < 0 || p >= 1) throw ConfigError("dropout: p must be in [0,1)");
  Node n;
  n.op = Op::kDropout;
  n.inputs = {x};
  n.scalar = p;
  n.train = train;
  n.seed = seed;
  return push(std::move(n));
}

int Graph::add(int a, int b) {
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a, b};
  return push(std::move(n));
}

int Graph::mul(int a, int b) {
  Node n;
  n.op = Op::kMul;
  n.inputs = {a, b};
  return push(std::move(n));
}

int Graph::concat_channels(int a, int b) {
  Node n;
  n.op = Op::kConcat;
  n.inputs = {a, b};
  return push(std::move(n));
}

int Graph::tile_time(int x, int times) {
  Node n;
  n.op = Op::kTileTime;
  n.inputs = {x};
  n.stride = times;
  return push(std::move(n));
}

int Graph::center_subsample(int x, int stride) {
  Node n;
  n.op = Op::kCenterSubsample;
  n.inputs = {x};
  n.stride = stride;
  return push(std::move(n));
}

int Graph::reshape(int x, std::vector<int> shape) {
  Node n;
  n.op = Op::kReshape;
  n.inputs = {x};
  n.rows.assign(shape.begin(), shape.end());
  return push(std::move(n));
}

int Graph::gather_rows(int x, std::vector<int> rows) {
  Node n;
  n.op = Op::kGatherRows;
  n.inputs = {x};
  n.rows = std::move(rows);
  return push(std::move(n));
}

int Graph::bone_lengths(int joints, const SkeletonTopology* topo,
                        double clamp) {
  Node n;
  n.op = Op::kBoneLengths;
  n.inputs = {joints};
  n.topo = topo;
  n.scalar = clamp;
  return push(std::move(n));
}

int Graph::attention_softmax(int logits, double gamma) {
  Node n;
  n.op = Op::kAttentionSoftmax;
  n.inputs = {logits};
  n.scalar = gamma;
  return push(std::move(n));
}

int Graph::weighted_sum(int weights, int values) {
  Node n;
  n.op = Op::kWeightedSum;
  n.inputs = {weights, values};
  return push(std::move(n));
}

int Graph::mean_frames(int x) {
  Node n;
  n.op = Op::kMeanFrames;
  n.inputs = {x};
  return push(std::move(n));
}

int Graph::sq_l2_loss(int pred, int target) {
  Node n;
  n.op = Op::kSqL2Loss;
  n.inputs = {pred, target};
  return push(std::move(n));
}

int Graph::pose_l2_loss(int pred, int target) {
  Node n;
  n.op = Op::kPoseL2Loss;
  n.inputs = {pred, target};
  return push(std::move(n));
}

int Graph::shift_loss(int lengths, int dirs, int gt_shifts,
                      const SkeletonTopology* topo) {
  Node n;
  n.op = Op::kShiftLoss;
  n.inputs = {lengths, dirs, gt_shifts};
  n.topo = topo;
  return push(std::move(n));
}

int Graph::shift_loss_from_vec(int pred_shifts, int gt_shifts) {
  Node n;
  n.op = Op::kShiftLossFromVec;
  n.inputs = {pred_shifts, gt_shifts};
  return push(std::move(n));
}

int Graph::scale_add(const std::vector<int>& nodes,
                     const std::vector<double>& weights) {
  if (nodes.size() != weights.size())
    throw ShapeError("scale_add: node/weight count mismatch");
  Node n;
  n.op = Op::kScaleAdd;
  n.inputs = nodes;
  n.weights = weights;
  return push(std::move(n));
}

double Graph::forward() {
  for (Node& n : nodes_) exec_forward(n);
  const Tensor& last = nodes_.back().value;
  return last.size() == 1 ? last.at(0) : 0.0;
}

void Graph::backward(int loss_node) {
  for (Node& n : nodes_) {
    n.grad = Tensor(n.value.shape);
  }
  Node& loss = nodes_[static_cast<size_t>(loss_node)];
  if (loss.value.size() != 1)
    throw ShapeError("backward: loss node must be scalar");
  loss.grad.at(0) = 1.0;
  for (int i = loss_node; i >= 0; --i) exec_backward(nodes_[static_cast<size_t>(i)]);
}

std::set<std::string> Graph::reachable_params(int node) const {
  std::set<std::string> out;
  std::vector<int> stack = {node};
  std::vector<bool> seen(nodes_.size(), false);
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (seen[static_cast<size_t>(id)]) continue;
    seen[static_cast<size_t>(id)] = true;
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.op == Op::kStopGrad) continue;
    if (n.op == Op::kParam) out.insert(n.name);
    for (int in : n.inputs) stack.push_back(in);
  }
  return out;
}

// ---------------------------------------------------------------------------

void Graph::exec_forward(Node& n) {
  switch (n.op) {
    case Op::kInput:
      break;
    case Op::kParam: {
      const ParamEntry& e = store_->at(n.name);
      n.value.shape = e.shape;
      n.value.data = e.value;
      break;
    }
    case Op::kStopGrad:
      n.value = in_val(n, 0);
      break;
    case Op::kAffine: {
      const Tensor& x = in_val(n, 0);
      const Tensor& w = in_val(n, 1);
      if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
        throw ShapeError("affine: shape mismatch");
      const int B = x.dim(0), nf = x.dim(1), m = w.dim(0);
      const bool has_bias = n.inputs.size() == 3;
      if (has_bias && in_val(n, 2).dim(0) != m)
        throw ShapeError("affine: bias shape mismatch");
      n.value = Tensor({B, m});
      for (int b = 0; b < B; ++b) {
        const double* xr = &x.data[static_cast<size_t>(b) * nf];
        double* yr = &n.value.data[static_cast<size_t>(b) * m];
        for (int mi = 0; mi < m; ++mi) {
          const double* wr = &w.data[static_cast<size_t>(mi) * nf];
          double s = has_bias ? in_val(n, 2).at(mi) : 0.0;
          for (int ni = 0; ni < nf; ++ni) s += xr[ni] * wr[ni];
          yr[mi] = s;
        }
      }
      break;
    }
    case Op::kConv1d: {
      const Tensor& x = in_val(n, 0);
      const Tensor& k = in_val(n, 1);
      const Tensor& bias = in_val(n, 2);
      if (x.rank() != 3 || k.rank() != 3 || x.dim(1) != k.dim(1))
        throw ShapeError("conv1d: shape mismatch");
      const int B = x.dim(0), Ci = x.dim(1), T = x.dim(2);
      const int Co = k.dim(0), W = k.dim(2), s = n.stride;
      if (T < W) throw ShapeError("conv1d: input shorter than kernel");
      if (bias.dim(0) != Co) throw ShapeError("conv1d: bias shape mismatch");
      const int To = (T - W) / s + 1;
      n.value = Tensor({B, Co, To});
      for (int b = 0; b < B; ++b)
        for (int co = 0; co < Co; ++co) {
          double* yr = &n.value.data[(static_cast<size_t>(b) * Co + co) * To];
          for (int to = 0; to < To; ++to) {
            double acc = bias.at(co);
            for (int ci = 0; ci < Ci; ++ci) {
              const double* xr =
                  &x.data[(static_cast<size_t>(b) * Ci + ci) * T + to * s];
              const double* kr =
                  &k.data[(static_cast<size_t>(co) * Ci + ci) * W];
              for (int w = 0; w < W; ++w) acc += xr[w] * kr[w];
            }
            yr[to] = acc;
          }
        }
      break;
    }
    case Op::kBatchNorm: {
      const Tensor& x = in_val(n, 0);
      const Tensor& gamma = in_val(n, 1);
      const Tensor& beta = in_val(n, 2);
      const int C = x.dim(1);
      if (gamma.dim(0) != C || beta.dim(0) != C)
        throw ShapeError("batch_norm: gamma/beta shape mismatch");
      const int B = x.dim(0);
      const int T = x.rank() == 3 ? x.dim(2) : 1;
      const int N = B * T;
      constexpr double kEps = 1e-5;
      n.value = Tensor(x.shape);
      n.aux1.assign(static_cast<size_t>(C), 0.0);  // mean used
      n.aux2.assign(static_cast<size_t>(C), 0.0);  // invstd used
      ParamEntry& rmean = store_->at(n.name + ".mean");
      ParamEntry& rvar = store_->at(n.name + ".var");
      if (n.train && B < 2)
        throw BatchTooSmallError("batch_norm: train mode needs batch >= 2");
      for (int c = 0; c < C; ++c) {
        double mean, var;
        if (n.train) {
          double s = 0, s2 = 0;
          for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t) {
              const double v = x.data[(static_cast<size_t>(b) * C + c) * T + t];
              s += v;
              s2 += v * v;
            }
          mean = s / N;
          var = std::max(0.0, s2 / N - mean * mean);
          rmean.value[static_cast<size_t>(c)] =
              0.9 * rmean.value[static_cast<size_t>(c)] + 0.1 * mean;
          rvar.value[static_cast<size_t>(c)] =
              0.9 * rvar.value[static_cast<size_t>(c)] + 0.1 * var;
        } else {
          mean = rmean.value[static_cast<size_t>(c)];
          var = rvar.value[static_cast<size_t>(c)];
        }
        const double invstd = 1.0 / std::sqrt(var + kEps);
        n.aux1[static_cast<size_t>(c)] = mean;
        n.aux2[static_cast<size_t>(c)] = invstd;
        const double g = gamma.at(c), be = beta.at(c);
        for (int b = 0; b < B; ++b)
          for (int t = 0; t < T; ++t) {
            const size_t i = (static_cast<size_t>(b) * C + c) * T + t;
            n.value.data[i] = (x.data[i] - mean) * invstd * g + be;
          }
      }
      break;
    }
    case Op::kRelu: {
      const Tensor& x = in_val(n, 0);
      n.value = x;
      for (double& v : n.value.data) v = std::max(0.0, v);
      break;
    }
    case Op::kDropout: {
      const Tensor& x = in_val(n, 0);
      n.value = x;
      if (n.train && n.scalar > 0) {
        Rng rng(n.seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double scale = 1.0 / (1.0 - n.scalar);
        n.mask.assign(x.data.size(), 1);
        for (size_t i = 0; i < x.data.size(); ++i) {
          if (u(rng) < n.scalar) {
            n.mask[i] = 0;
            n.value.data[i] = 0;
          } else {
            n.value.data[i] = x.data[i] * scale;
          }
        }
      }
      break;
    }
    case Op::kAdd: {
      const Tensor& a = in_val(n, 0);
      const Tensor& b = in_val(n, 1);
      if (!same_shape(a, b)) throw ShapeError("add: shape mismatch");
      n.value = a;
      for (size_t i = 0; i < a.data.size(); ++i) n.value.data[i] += b.data[i];
      break;
    }
    case Op::kMul: {
      const Tensor& a = in_val(n, 0);
      const Tensor& b = in_val(n, 1);
      if (!same_shape(a, b)) throw ShapeError("mul: shape mismatch");
      n.value = a;
      for (size_t i = 0; i < a.data.size(); ++i) n.value.data[i] *= b.data[i];
      break;
    }
    case Op::kConcat: {
      const Tensor& a = in_val(n, 0);
      const Tensor& b = in_val(n, 1);
      if (a.rank() != b.rank() || a.dim(0) != b.dim(0))
        throw ShapeError("concat: shape mismatch");
      if (a.rank() == 2) {
        const int B = a.dim(0), n1 = a.dim(1), n2 = b.dim(1);
        n.value = Tensor({B, n1 + n2});
        for (int r = 0; r < B; ++r) {
          std::copy_n(&a.data[static_cast<size_t>(r) * n1], n1,
                      &n.value.data[static_cast<size_t>(r) * (n1 + n2)]);
          std::copy_n(&b.data[static_cast<size_t>(r) * n2], n2,
                      &n.value.data[static_cast<size_t>(r) * (n1 + n2) + n1]);
        }
      } else {
        if (a.dim(2) != b.dim(2)) throw ShapeError("concat: time mismatch");
        const int B = a.dim(0), C1 = a.dim(1), C2 = b.dim(1), T = a.dim(2);
        n.value = Tensor({B, C1 + C2, T});
        for (int r = 0; r < B; ++r) {
          std::copy_n(&a.data[static_cast<size_t>(r) * C1 * T], C1 * T,
                      &n.value.data[static_cast<size_t>(r) * (C1 + C2) * T]);
          std::copy_n(
              &b.data[static_cast<size_t>(r) * C2 * T], C2 * T,
              &n.value.data[static_cast<size_t>(r) * (C1 + C2) * T + C1 * T]);
        }
      }
      break;
    }
    case Op::kTileTime: {
      const Tensor& x = in_val(n, 0);
      if (x.rank() != 3 || x.dim(2) != 1)
        throw ShapeError("tile_time: expected [B,C,1]");
      const int B = x.dim(0), C = x.dim(1), times = n.stride;
      n.value = Tensor({B, C, times});
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < times; ++t)
            n.value.at(b, c, t) = x.at(b, c, 0);
      break;
    }
    case Op::kCenterSubsample: {
      const Tensor& x = in_val(n, 0);
      const int s = n.stride;
      if (x.rank() != 3 || x.dim(2) % s != 0)
        throw ShapeError("center_subsample: time not divisible by stride");
      const int B = x.dim(0), C = x.dim(1), To = x.dim(2) / s;
      n.value = Tensor({B, C, To});
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < To; ++t)
            n.value.at(b, c, t) = x.at(b, c, t * s + s / 2);
      break;
    }
    case Op::kReshape: {
      const Tensor& x = in_val(n, 0);
      std::vector<int> shape(n.rows.begin(), n.rows.end());
      if (Tensor::count(shape) != x.size())
        throw ShapeError("reshape: element count mismatch");
      n.value = Tensor(shape, x.data);
      break;
    }
    case Op::kGatherRows: {
      const Tensor& x = in_val(n, 0);
      if (x.rank() != 2) throw ShapeError("gather_rows: expected rank 2");
      const int F = x.dim(1), M = static_cast<int>(n.rows.size());
      n.value = Tensor({M, F});
      for (int r = 0; r < M; ++r) {
        if (n.rows[static_cast<size_t>(r)] < 0 ||
            n.rows[static_cast<size_t>(r)] >= x.dim(0))
          throw IndexError("gather_rows: row out of range");
        std::copy_n(
            &x.data[static_cast<size_t>(n.rows[static_cast<size_t>(r)]) * F], F,
            &n.value.data[static_cast<size_t>(r) * F]);
      }
      break;
    }
    case Op::kBoneLengths: {
      const Tensor& x = in_val(n, 0);
      const int j = n.topo->joints(), nb = n.topo->num_bones();
      if (x.rank() != 2 || x.dim(1) != 3 * j)
        throw ShapeError("bone_lengths: expected [N, 3j]");
      const int N = x.dim(0);
      n.value = Tensor({N, nb});
      n.mask.assign(static_cast<size_t>(N) * nb, 0);
      for (int r = 0; r < N; ++r) {
        const double* jr = &x.data[static_cast<size_t>(r) * 3 * j];
        for (int b = 0; b < nb; ++b) {
          const auto& [p, c] = n.topo->bones[static_cast<size_t>(b)];
          const double dx = jr[3 * c] - jr[3 * p];
          const double dy = jr[3 * c + 1] - jr[3 * p + 1];
          const double dz = jr[3 * c + 2] - jr[3 * p + 2];
          const double len = std::sqrt(dx * dx + dy * dy + dz * dz);
          if (len < n.scalar) {
            n.value.at(r, b) = n.scalar;
            n.mask[static_cast<size_t>(r) * nb + b] = 1;  // clamped
          } else {
            n.value.at(r, b) = len;
          }
        }
      }
      break;
    }
    case Op::kAttentionSoftmax: {
      const Tensor& x = in_val(n, 0);
      if (x.rank() != 3) throw ShapeError("attention_softmax: expected [B,l,k]");
      const int B = x.dim(0), L = x.dim(1), K = x.dim(2);
      n.value = Tensor(x.shape);
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k) {
          double mx = -1e300;
          for (int l = 0; l < L; ++l)
            mx = std::max(mx, n.scalar * x.at(b, l, k));
          double sum = 0;
          for (int l = 0; l < L; ++l) {
            const double e = std::exp(n.scalar * x.at(b, l, k) - mx);
            n.value.at(b, l, k) = e;
            sum += e;
          }
          for (int l = 0; l < L; ++l) n.value.at(b, l, k) /= sum;
        }
      break;
    }
    case Op::kWeightedSum: {
      const Tensor& a = in_val(n, 0);
      const Tensor& x = in_val(n, 1);
      if (!same_shape(a, x) || a.rank() != 3)
        throw ShapeError("weighted_sum: expected matching [B,l,k]");
      const int B = a.dim(0), L = a.dim(1), K = a.dim(2);
      n.value = Tensor({B, K});
      for (int b = 0; b < B; ++b)
        for (int l = 0; l < L; ++l)
          for (int k = 0; k < K; ++k)
            n.value.at(b, k) += a.at(b, l, k) * x.at(b, l, k);
      break;
    }
    case Op::kMeanFrames: {
      const Tensor& x = in_val(n, 0);
      if (x.rank() != 3) throw ShapeError("mean_frames: expected [B,l,k]");
      const int B = x.dim(0), L = x.dim(1), K = x.dim(2);
      n.value = Tensor({B, K});
      for (int b = 0; b < B; ++b)
        for (int l = 0; l < L; ++l)
          for (int k = 0; k < K; ++k) n.value.at(b, k) += x.at(b, l, k) / L;
      break;
    }
    case Op::kSqL2Loss: {
      const Tensor& p = in_val(n, 0);
      const Tensor& t = in_val(n, 1);
      if (!same_shape(p, t)) throw ShapeError("sq_l2_loss: shape mismatch");
      const int B = p.dim(0);
      double loss = 0;
      for (size_t i = 0; i < p.data.size(); ++i) {
        const double d = p.data[i] - t.data[i];
        loss += d * d;
      }
      n.value = Tensor({1}, {loss / B});
      break;
    }
    case Op::kPoseL2Loss: {
      const Tensor& p = in_val(n, 0);
      const Tensor& t = in_val(n, 1);
      if (!same_shape(p, t) || p.rank() != 2 || p.dim(1) % 3 != 0)
        throw ShapeError("pose_l2_loss: expected matching [B,3j]");
      const int B = p.dim(0), j = p.dim(1) / 3;
      double loss = 0;
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < j; ++k) {
          double s = 0;
          for (int r = 0; r < 3; ++r) {
            const double d = p.at(b, 3 * k + r) - t.at(b, 3 * k + r);
            s += d * d;
          }
          loss += std::sqrt(s);
        }
      n.value = Tensor({1}, {loss / (B * j)});
      break;
    }
    case Op::kShiftLoss: {
      const Tensor& len = in_val(n, 0);
      const Tensor& dir = in_val(n, 1);
      const Tensor& gt = in_val(n, 2);
      const int nb = n.topo->num_bones(), j = n.topo->joints();
      const int P = static_cast<int>(n.topo->nonadjacent_pairs.size());
      if (len.rank() != 2 || len.dim(1) != nb || dir.rank() != 2 ||
          dir.dim(1) != 3 * nb || len.dim(0) != dir.dim(0))
        throw ShapeError("shift_loss: bad lengths/dirs shape");
      if (gt.rank() != 3 || gt.dim(0) != len.dim(0) || gt.dim(1) != P ||
          gt.dim(2) != 3)
        throw ShapeError("shift_loss: bad gt shape");
      const int B = len.dim(0);
      n.aux1.assign(static_cast<size_t>(B) * 3 * nb, 0.0);  // unit dirs
      n.aux2.assign(static_cast<size_t>(B) * nb, 0.0);      // raw norms
      double loss = 0;
      std::vector<double> joints(static_cast<size_t>(3) * j);
      for (int b = 0; b < B; ++b) {
        double* ud = &n.aux1[static_cast<size_t>(b) * 3 * nb];
        for (int bi = 0; bi < nb; ++bi) {
          const double* v = &dir.data[static_cast<size_t>(b) * 3 * nb + 3 * bi];
          const double nm =
              std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
          n.aux2[static_cast<size_t>(b) * nb + bi] = nm;
          const double nc = std::max(nm, 1e-6);
          ud[3 * bi] = v[0] / nc;
          ud[3 * bi + 1] = v[1] / nc;
          ud[3 * bi + 2] = v[2] / nc;
        }
        std::fill(joints.begin(), joints.end(), 0.0);
        for (int bi = 0; bi < nb; ++bi) {
          const auto& [pj, cj] = n.topo->bones[static_cast<size_t>(bi)];
          for (int r = 0; r < 3; ++r)
            joints[static_cast<size_t>(3 * cj + r)] =
                joints[static_cast<size_t>(3 * pj + r)] +
                len.at(b, bi) * ud[3 * bi + r];
        }
        for (int p = 0; p < P; ++p) {
          const auto& [k1, k2] = n.topo->nonadjacent_pairs[static_cast<size_t>(p)];
          double s = 0;
          for (int r = 0; r < 3; ++r) {
            const double e = joints[static_cast<size_t>(3 * k2 + r)] -
                             joints[static_cast<size_t>(3 * k1 + r)] -
                             gt.at(b, p, r);
            s += e * e;
          }
          loss += std::sqrt(s);
        }
      }
      n.value = Tensor({1}, {loss / B});
      break;
    }
    case Op::kShiftLossFromVec: {
      const Tensor& p = in_val(n, 0);
      const Tensor& gt = in_val(n, 1);
      if (p.rank() != 2 || p.dim(1) % 3 != 0)
        throw ShapeError("shift_loss_from_vec: expected [B, 3P]");
      const int B = p.dim(0), P = p.dim(1) / 3;
      if (static_cast<int64_t>(B) * P * 3 != gt.size())
        throw ShapeError("shift_loss_from_vec: gt size mismatch");
      double loss = 0;
      for (int b = 0; b < B; ++b)
        for (int pi = 0; pi < P; ++pi) {
          double s = 0;
          for (int r = 0; r < 3; ++r) {
            const double d =
                p.at(b, 3 * pi + r) -
                gt.data[(static_cast<size_t>(b) * P + pi) * 3 + r];
            s += d * d;
          }
          loss += std::sqrt(s);
        }
      n.value = Tensor({1}, {loss / B});
      break;
    }
    case Op::kScaleAdd: {
      double s = 0;
      for (size_t i = 0; i < n.inputs.size(); ++i) {
        const Tensor& v = in_val(n, static_cast<int>(i));
        if (v.size() != 1) throw ShapeError("scale_add: inputs must be scalar");
        s += n.weights[i] * v.at(0);
      }
      n.value = Tensor({1}, {s});
      break;
    }
  }
}

void Graph::exec_backward(Node& n) {
  const Tensor& dy = n.grad;
  switch (n.op) {
    case Op::kInput:
      break;
    case Op::kParam: {
      ParamEntry& e = store_->at(n.name);
      for (size_t i = 0; i < e.grad.size(); ++i) e.grad[i] += dy.data[i];
      break;
    }
    case Op::kStopGrad:
      break;  // blocks all upstream flow
    case Op::kAffine: {
      const Tensor& x = in_val(n, 0);
      const Tensor& w = in_val(n, 1);
      Tensor& dx = in_grad(n, 0);
      Tensor& dw = in_grad(n, 1);
      const int B = x.dim(0), nf = x.dim(1), m = w.dim(0);
      for (int b = 0; b < B; ++b) {
        const double* dyr = &dy.data[static_cast<size_t>(b) * m];
        const double* xr = &x.data[static_cast<size_t>(b) * nf];
        double* dxr = &dx.data[static_cast<size_t>(b) * nf];
        for (int mi = 0; mi < m; ++mi) {
          const double g = dyr[mi];
          if (g == 0.0) continue;
          const double* wr = &w.data[static_cast<size_t>(mi) * nf];
          double* dwr = &dw.data[static_cast<size_t>(mi) * nf];
          for (int ni = 0; ni < nf; ++ni) {
            dxr[ni] += g * wr[ni];
            dwr[ni] += g * xr[ni];
          }
        }
      }
      if (n.inputs.size() == 3) {
        Tensor& db = in_grad(n, 2);
        for (int b = 0; b < B; ++b)
          for (int mi = 0; mi < m; ++mi)
            db.at(mi) += dy.data[static_cast<size_t>(b) * m + mi];
      }
      break;
    }
    case Op::kConv1d: {
      const Tensor& x = in_val(n, 0);
      const Tensor& k = in_val(n, 1);
      Tensor& dx = in_grad(n, 0);
      Tensor& dk = in_grad(n, 1);
      Tensor& db = in_grad(n, 2);
      const int B = x.dim(0), Ci = x.dim(1), T = x.dim(2);
      const int Co = k.dim(0), W = k.dim(2), s = n.stride;
      const int To = n.value.dim(2);
      for (int b = 0; b < B; ++b)
        for (int co = 0; co < Co; ++co) {
          const double* dyr = &dy.data[(static_cast<size_t>(b) * Co + co) * To];
          for (int to = 0; to < To; ++to) {
            const double g = dyr[to];
            if (g == 0.0) continue;
            db.at(co) += g;
            for (int ci = 0; ci < Ci; ++ci) {
              const double* xr =
                  &x.data[(static_cast<size_t>(b) * Ci + ci) * T + to * s];
              double* dxr =
                  &dx.data[(static_cast<size_t>(b) * Ci + ci) * T + to * s];
              const double* kr =
                  &k.data[(static_cast<size_t>(co) * Ci + ci) * W];
              double* dkr = &dk.data[(static_cast<size_t>(co) * Ci + ci) * W];
              for (int w = 0; w < W; ++w) {
                dxr[w] += g * kr[w];
                dkr[w] += g * xr[w];
              }
            }
          }
        }
      break;
    }
    case Op::kBatchNorm: {
      const Tensor& x = in_val(n, 0);
      const Tensor& gamma = in_val(n, 1);
      Tensor& dx = in_grad(n, 0);
      Tensor& dgamma = in_grad(n, 1);
      Tensor& dbeta = in_grad(n, 2);
      const int B = x.dim(0), C = x.dim(1);
      const int T = x.rank() == 3 ? x.dim(2) : 1;
      const int N = B * T;
      for (int c = 0; c < C; ++c) {
        const double mean = n.aux1[static_cast<size_t>(c)];
        const double invstd = n.aux2[static_cast<size_t>(c)];
        const double g = gamma.at(c);
        double s1 = 0, s2 = 0;
        for (int b = 0; b < B; ++b)
          for (int t = 0; t < T; ++t) {
            const size_t i = (static_cast<size_t>(b) * C + c) * T + t;
            const double xh = (x.data[i] - mean) * invstd;
            s1 += dy.data[i];
            s2 += dy.data[i] * xh;
          }
        dgamma.at(c) += s2;
        dbeta.at(c) += s1;
        for (int b = 0; b < B; ++b)
          for (int t = 0; t < T; ++t) {
            const size_t i = (static_cast<size_t>(b) * C + c) * T + t;
            const double xh = (x.data[i] - mean) * invstd;
            if (n.train) {
              dx.data[i] += g * invstd * (dy.data[i] - s1 / N - xh * s2 / N);
            } else {
              dx.data[i] += g * invstd * dy.data[i];
            }
          }
      }
      break;
    }
    case Op::kRelu: {
      const Tensor& x = in_val(n, 0);
      Tensor& dx = in_grad(n, 0);
      for (size_t i = 0; i < x.data.size(); ++i)
        if (x.data[i] > 0) dx.data[i] += dy.data[i];
      break;
    }
    case Op::kDropout: {
      Tensor& dx = in_grad(n, 0);
      if (n.train && n.scalar > 0) {
        const double scale = 1.0 / (1.0 - n.scalar);
        for (size_t i = 0; i < dx.data.size(); ++i)
          if (n.mask[i]) dx.data[i] += dy.data[i] * scale;
      } else {
        for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
      }
      break;
    }
    case Op::kAdd: {
      for (int i = 0; i < 2; ++i) {
        Tensor& d = in_grad(n, i);
        for (size_t k = 0; k < d.data.size(); ++k) d.data[k] += dy.data[k];
      }
      break;
    }
    case Op::kMul: {
      const Tensor& a = in_val(n, 0);
      const Tensor& b = in_val(n, 1);
      Tensor& da = in_grad(n, 0);
      Tensor& db = in_grad(n, 1);
      for (size_t i = 0; i < a.data.size(); ++i) {
        da.data[i] += dy.data[i] * b.data[i];
        db.data[i] += dy.data[i] * a.data[i];
      }
      break;
    }
    case Op::kConcat: {
      const Tensor& a = in_val(n, 0);
      const Tensor& b = in_val(n, 1);
      Tensor& da = in_grad(n, 0);
      Tensor& db = in_grad(n, 1);
      if (a.rank() == 2) {
        const int B = a.dim(0), n1 = a.dim(1), n2 = b.dim(1);
        for (int r = 0; r < B; ++r) {
          for (int i = 0; i < n1; ++i)
            da.data[static_cast<size_t>(r) * n1 + i] +=
                dy.data[static_cast<size_t>(r) * (n1 + n2) + i];
          for (int i = 0; i < n2; ++i)
            db.data[static_cast<size_t>(r) * n2 + i] +=
                dy.data[static_cast<size_t>(r) * (n1 + n2) + n1 + i];
        }
      } else {
        const int B = a.dim(0), C1 = a.dim(1), C2 = b.dim(1), T = a.dim(2);
        for (int r = 0; r < B; ++r) {
          for (int i = 0; i < C1 * T; ++i)
            da.data[static_cast<size_t>(r) * C1 * T + i] +=
                dy.data[static_cast<size_t>(r) * (C1 + C2) * T + i];
          for (int i = 0; i < C2 * T; ++i)
            db.data[static_cast<size_t>(r) * C2 * T + i] +=
                dy.data[static_cast<size_t>(r) * (C1 + C2) * T + C1 * T + i];
        }
      }
      break;
    }
    case Op::kTileTime: {
      Tensor& dx = in_grad(n, 0);
      const int B = dx.dim(0), C = dx.dim(1), times = n.stride;
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < times; ++t) dx.at(b, c, 0) += dy.at(b, c, t);
      break;
    }
    case Op::kCenterSubsample: {
      Tensor& dx = in_grad(n, 0);
      const int s = n.stride;
      const int B = dy.dim(0), C = dy.dim(1), To = dy.dim(2);
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < To; ++t)
            dx.at(b, c, t * s + s / 2) += dy.at(b, c, t);
      break;
    }
    case Op::kReshape: {
      Tensor& dx = in_grad(n, 0);
      for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
      break;
    }
    case Op::kGatherRows: {
      Tensor& dx = in_grad(n, 0);
      const int F = dx.dim(1);
      for (size_t r = 0; r < n.rows.size(); ++r)
        for (int i = 0; i < F; ++i)
          dx.data[static_cast<size_t>(n.rows[r]) * F + i] +=
              dy.data[r * F + i];
      break;
    }
    case Op::kBoneLengths: {
      const Tensor& x = in_val(n, 0);
      Tensor& dx = in_grad(n, 0);
      const int j = n.topo->joints(), nb = n.topo->num_bones();
      const int N = x.dim(0);
      for (int r = 0; r < N; ++r) {
        const double* jr = &x.data[static_cast<size_t>(r) * 3 * j];
        double* djr = &dx.data[static_cast<size_t>(r) * 3 * j];
        for (int b = 0; b < nb; ++b) {
          if (n.mask[static_cast<size_t>(r) * nb + b]) continue;  // clamped
          const double g = dy.at(r, b);
          if (g == 0.0) continue;
          const auto& [p, c] = n.topo->bones[static_cast<size_t>(b)];
          const double len = n.value.at(r, b);
          for (int d = 0; d < 3; ++d) {
            const double u = (jr[3 * c + d] - jr[3 * p + d]) / len;
            djr[3 * c + d] += g * u;
            djr[3 * p + d] -= g * u;
          }
        }
      }
      break;
    }
    case Op::kAttentionSoftmax: {
      Tensor& dx = in_grad(n, 0);
      const int B = dx.dim(0), L = dx.dim(1), K = dx.dim(2);
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k) {
          double dot = 0;
          for (int l = 0; l < L; ++l) dot += dy.at(b, l, k) * n.value.at(b, l, k);
          for (int l = 0; l < L; ++l)
            dx.at(b, l, k) +=
                n.scalar * n.value.at(b, l, k) * (dy.at(b, l, k) - dot);
        }
      break;
    }
    case Op::kWeightedSum: {
      const Tensor& a = in_val(n, 0);
      const Tensor& x = in_val(n, 1);
      Tensor& da = in_grad(n, 0);
      Tensor& dx = in_grad(n, 1);
      const int B = a.dim(0), L = a.dim(1), K = a.dim(2);
      for (int b = 0; b < B; ++b)
        for (int l = 0; l < L; ++l)
          for (int k = 0; k < K; ++k) {
            da.at(b, l, k) += dy.at(b, k) * x.at(b, l, k);
            dx.at(b, l, k) += dy.at(b, k) * a.at(b, l, k);
          }
      break;
    }
    case Op::kMeanFrames: {
      Tensor& dx = in_grad(n, 0);
      const int B = dx.dim(0), L = dx.dim(1), K = dx.dim(2);
      for (int b = 0; b < B; ++b)
        for (int l = 0; l < L; ++l)
          for (int k = 0; k < K; ++k) dx.at(b, l, k) += dy.at(b, k) / L;
      break;
    }
    case Op::kSqL2Loss: {
      const Tensor& p = in_val(n, 0);
      const Tensor& t = in_val(n, 1);
      Tensor& dp = in_grad(n, 0);
      Tensor& dt = in_grad(n, 1);
      const double g = dy.at(0) / p.dim(0);
      for (size_t i = 0; i < p.data.size(); ++i) {
        const double d = 2.0 * (p.data[i] - t.data[i]) * g;
        dp.data[i] += d;
        dt.data[i] -= d;
      }
      break;
    }
    case Op::kPoseL2Loss: {
      const Tensor& p = in_val(n, 0);
      const Tensor& t = in_val(n, 1);
      Tensor& dp = in_grad(n, 0);
      Tensor& dt = in_grad(n, 1);
      const int B = p.dim(0), j = p.dim(1) / 3;
      const double g = dy.at(0) / (B * j);
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < j; ++k) {
          double s = 0;
          for (int r = 0; r < 3; ++r) {
            const double d = p.at(b, 3 * k + r) - t.at(b, 3 * k + r);
            s += d * d;
          }
          const double nm = std::sqrt(s);
          if (nm == 0.0) continue;
          for (int r = 0; r < 3; ++r) {
            const double d =
                g * (p.at(b, 3 * k + r) - t.at(b, 3 * k + r)) / nm;
            dp.at(b, 3 * k + r) += d;
            dt.at(b, 3 * k + r) -= d;
          }
        }
      break;
    }
    case Op::kShiftLoss: {
      const Tensor& len = in_val(n, 0);
      const Tensor& dir = in_val(n, 1);
      const Tensor& gt = in_val(n, 2);
      Tensor& dlen = in_grad(n, 0);
      Tensor& ddir = in_grad(n, 1);
      const int nb = n.topo->num_bones(), j = n.topo->joints();
      const int P = static_cast<int>(n.topo->nonadjacent_pairs.size());
      const int B = len.dim(0);
      const double gscale = dy.at(0) / B;
      std::vector<double> joints(static_cast<size_t>(3) * j);
      std::vector<double> djoints(static_cast<size_t>(3) * j);
      std::vector<double> dud(static_cast<size_t>(3) * nb);
      for (int b = 0; b < B; ++b) {
        const double* ud = &n.aux1[static_cast<size_t>(b) * 3 * nb];
        std::fill(joints.begin(), joints.end(), 0.0);
        for (int bi = 0; bi < nb; ++bi) {
          const auto& [pj, cj] = n.topo->bones[static_cast<size_t>(bi)];
          for (int r = 0; r < 3; ++r)
            joints[static_cast<size_t>(3 * cj + r)] =
                joints[static_cast<size_t>(3 * pj + r)] +
                len.at(b, bi) * ud[3 * bi + r];
        }
        std::fill(djoints.begin(), djoints.end(), 0.0);
        for (int p = 0; p < P; ++p) {
          const auto& [k1, k2] = n.topo->nonadjacent_pairs[static_cast<size_t>(p)];
          double e[3];
          double s = 0;
          for (int r = 0; r < 3; ++r) {
            e[r] = joints[static_cast<size_t>(3 * k2 + r)] -
                   joints[static_cast<size_t>(3 * k1 + r)] - gt.at(b, p, r);
            s += e[r] * e[r];
          }
          const double nm = std::sqrt(s);
          if (nm == 0.0) continue;
          for (int r = 0; r < 3; ++r) {
            const double g = gscale * e[r] / nm;
            djoints[static_cast<size_t>(3 * k2 + r)] += g;
            djoints[static_cast<size_t>(3 * k1 + r)] -= g;
          }
        }
        // reverse the forward-kinematics accumulation
        std::fill(dud.begin(), dud.end(), 0.0);
        for (int bi = nb - 1; bi >= 0; --bi) {
          const auto& [pj, cj] = n.topo->bones[static_cast<size_t>(bi)];
          for (int r = 0; r < 3; ++r) {
            const double dj = djoints[static_cast<size_t>(3 * cj + r)];
            djoints[static_cast<size_t>(3 * pj + r)] += dj;
            dlen.at(b, bi) += dj * ud[3 * bi + r];
            dud[static_cast<size_t>(3 * bi + r)] += dj * len.at(b, bi);
          }
        }
        // through the normalization
        for (int bi = 0; bi < nb; ++bi) {
          const double nm = n.aux2[static_cast<size_t>(b) * nb + bi];
          const double* u = &ud[3 * bi];
          const double* du = &dud[static_cast<size_t>(3 * bi)];
          if (nm <= 1e-6) {
            for (int r = 0; r < 3; ++r)
              ddir.at(b, 3 * bi + r) += du[r] / 1e-6;
          } else {
            const double dot = u[0] * du[0] + u[1] * du[1] + u[2] * du[2];
            for (int r = 0; r < 3; ++r)
              ddir.at(b, 3 * bi + r) += (du[r] - u[r] * dot) / nm;
          }
        }
        (void)dir;
      }
      break;
    }
    case Op::kShiftLossFromVec: {
      const Tensor& p = in_val(n, 0);
      const Tensor& gt = in_val(n, 1);
      Tensor& dp = in_grad(n, 0);
      const int B = p.dim(0), P = p.dim(1) / 3;
      const double gscale = dy.at(0) / B;
      for (int b = 0; b < B; ++b)
        for (int pi = 0; pi < P; ++pi) {
          double e[3];
          double s = 0;
          for (int r = 0; r < 3; ++r) {
            e[r] = p.at(b, 3 * pi + r) -
                   gt.data[(static_cast<size_t>(b) * P + pi) * 3 + r];
            s += e[r] * e[r];
          }
          const double nm = std::sqrt(s);
          if (nm == 0.0) continue;
          for (int r = 0; r < 3; ++r)
            dp.at(b, 3 * pi + r) += gscale * e[r] / nm;
        }
      break;
    }
    case Op::kScaleAdd: {
      for (size_t i = 0; i < n.inputs.size(); ++i)
        in_grad(n, static_cast<int>(i)).at(0) += n.weights[i] * dy.at(0);
      break;
    }
  }
}

double grad_check(Graph& graph, int loss_node, double eps) {
  ParameterStore* store = graph.store();

  std::map<std::string, std::vector<double>> snapshot;
  for (const auto& [name, e] : store->entries()) snapshot[name] = e.value;

  store->zero_grads();
  graph.forward();
  graph.backward(loss_node);
  std::map<std::string, std::vector<double>> analytic;
  for (const auto& [name, e] : store->entries()) analytic[name] = e.grad;

  const std::set<std::string> reachable = graph.reachable_params(loss_node);
  double worst = 0;
  for (const auto& name : reachable) {
    ParamEntry& e = store->at(name);
    if (!e.trainable) continue;
    for (size_t i = 0; i < e.value.size(); ++i) {
      const double orig = e.value[i];
      e.value[i] = orig + eps;
      graph.forward();
      const double fp = graph.value(loss_node).at(0);
      e.value[i] = orig - eps;
      graph.forward();
      const double fm = graph.value(loss_node).at(0);
      e.value[i] = orig;
      const double num = (fp - fm) / (2 * eps);
      const double ana = analytic[name][i];
      const double rel =
          std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
      worst = std::max(worst, rel);
    }
  }

  for (auto& [name, e] : store->entries()) e.value = snapshot[name];
  store->zero_grads();
  return worst;
}

}  // namespace bonekin
