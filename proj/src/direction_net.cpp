#include "bonekin/direction_net.hpp"

namespace bonekin {

DirectionNet::DirectionNet(DirectionNetConfig cfg, const SkeletonTopology* topo)
    : cfg_(cfg), topo_(topo) {
  if (cfg_.s < 2) throw ConfigError("direction net: stride must be >= 2");
  int d = cfg_.d;
  while (d > 1) {
    if (d % cfg_.s != 0)
      throw ConfigError("direction net: d must equal s^m for integer m >= 1");
    d /= cfg_.s;
    ++m_;
  }
  if (m_ < 1) throw ConfigError("direction net: d must be at least s");
  if (cfg_.num_subnets < 1 || cfg_.num_subnets > m_)
    throw ConfigError("direction net: need 1 <= num_subnets <= m");
  head_dim_ = cfg_.head_dim > 0 ? cfg_.head_dim : 3 * topo_->num_bones();
}

std::string DirectionNet::pname(int subnet, const std::string& rest) const {
  return "dir.s" + std::to_string(subnet) + "." + rest;
}

void DirectionNet::init_params(ParameterStore& store, Rng& rng) const {
  const int o = cfg_.channels, s = cfg_.s;
  const int j = topo_->joints();

  auto add_conv_block = [&](const std::string& prefix, int cin, int cout) {
    store.add_uniform(prefix + ".conv.w", {cout, cin, s}, cin * s, rng);
    store.add(prefix + ".conv.b", {cout});
    ParamEntry& g = store.add(prefix + ".bn.g", {cout});
    std::fill(g.value.begin(), g.value.end(), 1.0);
    store.add(prefix + ".bn.b", {cout});
  };

  // sub-network 0: m blocks, temporal lengths d -> d/s -> ... -> 1
  if (cfg_.visibility_fusion) {
    add_conv_block(pname(0, "b0kp"), 2 * j, o);
    add_conv_block(pname(0, "b0vis"), j, o);
  } else {
    add_conv_block(pname(0, "b0"), 2 * j, o);
  }
  int ch = cfg_.visibility_fusion ? 2 * o : o;
  std::vector<int> prev_act_ch = {ch};
  for (int i = 1; i < m_; ++i) {
    add_conv_block(pname(0, "b" + std::to_string(i)), ch, o);
    ch = o;
    prev_act_ch.push_back(o);
  }
  store.add_uniform(pname(0, "head.w"), {head_dim_, ch}, ch, rng);
  store.add(pname(0, "head.b"), {head_dim_});

  // upper sub-networks: m-k blocks each, fed by the duplicated prediction and
  // skip concatenations from the sub-network below
  for (int k = 1; k < cfg_.num_subnets; ++k) {
    store.add_uniform(pname(k, "lift.w"), {o, head_dim_}, head_dim_, rng);
    store.add(pname(k, "lift.b"), {o});
    const int nblocks = m_ - k;
    std::vector<int> act_ch;
    for (int i = 0; i < nblocks; ++i) {
      const int cin = o + prev_act_ch[static_cast<size_t>(i)];
      add_conv_block(pname(k, "b" + std::to_string(i)), cin, o);
      act_ch.push_back(o);
    }
    const int head_in = o + prev_act_ch[static_cast<size_t>(nblocks)];
    store.add_uniform(pname(k, "head.w"), {head_dim_, head_in}, head_in, rng);
    store.add(pname(k, "head.b"), {head_dim_});
    prev_act_ch = act_ch;
  }
}

DirectionNet::Forward DirectionNet::build(Graph& g, int keypoints,
                                          int visibility, bool train,
                                          uint64_t dropout_seed) const {
  const int o = cfg_.channels, s = cfg_.s;
  const int batch = g.value(keypoints).dim(0);
  int seed_counter = 0;
  auto next_seed = [&]() {
    return derive_seed(dropout_seed, 0xd12,
                       static_cast<uint64_t>(seed_counter++));
  };

  auto conv_bn_relu = [&](const std::string& prefix, int x) {
    const int w = g.param(prefix + ".conv.w");
    const int b = g.param(prefix + ".conv.b");
    const int gamma = g.param(prefix + ".bn.g");
    const int beta = g.param(prefix + ".bn.b");
    const int y = g.conv1d(x, w, b, s);
    return g.relu(g.batch_norm(y, gamma, beta, prefix + ".bn", train));
  };
  auto head = [&](int subnet, int act, int act_ch) {
    const int w = g.param(pname(subnet, "head.w"));
    const int b = g.param(pname(subnet, "head.b"));
    return g.affine(g.reshape(act, {batch, act_ch}), w, b);
  };

  Forward fwd;
  std::vector<int> prev_acts;
  std::vector<int> prev_act_ch;
  int prediction = -1;

  // sub-network 0
  {
    std::vector<int> acts, act_ch;
    int cur, ch;
    if (cfg_.visibility_fusion) {
      if (visibility < 0)
        throw ConfigError("direction net: visibility input required");
      const int kp_h = conv_bn_relu(pname(0, "b0kp"), keypoints);
      const int vis_h = conv_bn_relu(pname(0, "b0vis"), visibility);
      cur = g.concat_channels(g.mul(kp_h, vis_h), kp_h);
      ch = 2 * o;
    } else {
      cur = conv_bn_relu(pname(0, "b0"), keypoints);
      ch = o;
    }
    cur = g.dropout(cur, cfg_.dropout, train, next_seed());
    acts.push_back(cur);
    act_ch.push_back(ch);
    for (int i = 1; i < m_; ++i) {
      const bool residual = ch == o;
      int y = conv_bn_relu(pname(0, "b" + std::to_string(i)), cur);
      y = g.dropout(y, cfg_.dropout, train, next_seed());
      cur = residual ? g.add(y, g.center_subsample(cur, s)) : y;
      ch = o;
      acts.push_back(cur);
      act_ch.push_back(ch);
    }
    prediction = head(0, cur, ch);
    fwd.subnet_outputs.push_back(prediction);
    prev_acts = acts;
    prev_act_ch = act_ch;
  }

  for (int k = 1; k < cfg_.num_subnets; ++k) {
    const int nblocks = m_ - k;
    const int lift_w = g.param(pname(k, "lift.w"));
    const int lift_b = g.param(pname(k, "lift.b"));
    const int lifted = g.affine(g.stop_grad(prediction), lift_w, lift_b);
    int tlen = cfg_.d;
    for (int i = 0; i < k; ++i) tlen /= s;
    int cur = g.tile_time(g.reshape(lifted, {batch, o, 1}), tlen);
    std::vector<int> acts, act_ch;
    for (int i = 0; i < nblocks; ++i) {
      const int joined = g.concat_channels(
          cur, g.stop_grad(prev_acts[static_cast<size_t>(i)]));
      int y = conv_bn_relu(pname(k, "b" + std::to_string(i)), joined);
      y = g.dropout(y, cfg_.dropout, train, next_seed());
      cur = g.add(y, g.center_subsample(cur, s));
      acts.push_back(cur);
      act_ch.push_back(o);
    }
    const int head_act = g.concat_channels(
        cur, g.stop_grad(prev_acts[static_cast<size_t>(nblocks)]));
    prediction =
        head(k, head_act, o + prev_act_ch[static_cast<size_t>(nblocks)]);
    fwd.subnet_outputs.push_back(prediction);
    prev_acts = acts;
    prev_act_ch = act_ch;
  }
  fwd.final_output = fwd.subnet_outputs.back();
  return fwd;
}

}  // namespace bonekin
