#include "bonekin/skeleton.hpp"

#include <algorithm>
#include <cmath>

namespace bonekin {

double norm(const Vec3& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

SkeletonTopology build_topology(const std::vector<int>& parent,
                                const std::vector<std::string>& names,
                                int root) {
  const int j = static_cast<int>(parent.size());
  if (j < 2 || names.size() != parent.size())
    throw ShapeError("build_topology: need j >= 2 and matching name list");
  if (root < 0 || root >= j) throw IndexError("build_topology: root out of range");
  if (parent[root] != -1)
    throw ForestError("build_topology: parent[root] must be -1");

  SkeletonTopology topo;
  topo.joint_names = names;
  topo.parent = parent;
  topo.root_index = root;
  topo.bone_of_child.assign(j, -1);

  for (int k = 0; k < j; ++k) {
    if (k == root) continue;
    const int p = parent[k];
    if (p < -1 || p >= j) throw IndexError("build_topology: parent index out of range");
    if (p == -1) throw ForestError("build_topology: more than one root");
  }

  // Walk each joint to the root; a joint that cannot reach the root within j
  // steps sits on a cycle (or a disconnected component).
  for (int k = 0; k < j; ++k) {
    int cur = k;
    int steps = 0;
    while (cur != root) {
      cur = parent[cur];
      if (++steps > j) throw CycleError("build_topology: parent relation has a cycle");
    }
  }

  for (int k = 0; k < j; ++k) {
    if (k == root) continue;
    topo.bone_of_child[k] = static_cast<int>(topo.bones.size());
    topo.bones.emplace_back(parent[k], k);
  }

  topo.bone_paths.assign(j, {});
  for (int k = 0; k < j; ++k) {
    std::vector<int> path;
    int cur = k;
    while (cur != root) {
      path.push_back(topo.bone_of_child[cur]);
      cur = parent[cur];
    }
    std::reverse(path.begin(), path.end());
    topo.bone_paths[k] = std::move(path);
  }

  std::set<std::pair<int, int>> bone_set;
  for (const auto& [p, c] : topo.bones)
    bone_set.insert({std::min(p, c), std::max(p, c)});
  for (int k1 = 0; k1 < j; ++k1)
    for (int k2 = k1 + 1; k2 < j; ++k2)
      if (!bone_set.count({k1, k2})) topo.nonadjacent_pairs.emplace_back(k1, k2);

  return topo;
}

SkeletonTopology default_topology17() {
  const std::vector<std::string> names = {
      "Pelvis",        "RightHip",   "RightKnee",  "RightAnkle", "LeftHip",
      "LeftKnee",      "LeftAnkle",  "Spine",      "Thorax",     "Neck",
      "Head",          "LeftShoulder", "LeftElbow", "LeftWrist",
      "RightShoulder", "RightElbow", "RightWrist"};
  const std::vector<int> parent = {-1, 0, 1, 2, 0, 4, 5, 0, 7,
                                   8,  9, 8, 11, 12, 8, 14, 15};
  return build_topology(parent, names, 0);
}

std::vector<std::pair<int, int>> symmetric_bone_pairs(
    const SkeletonTopology& topo) {
  std::vector<std::pair<int, int>> pairs;
  for (int b = 0; b < topo.num_bones(); ++b) {
    const std::string& name = topo.joint_names[topo.bones[b].second];
    if (name.rfind("Left", 0) != 0) continue;
    const std::string mirror = "Right" + name.substr(4);
    for (int b2 = 0; b2 < topo.num_bones(); ++b2) {
      if (topo.joint_names[topo.bones[b2].second] == mirror)
        pairs.emplace_back(b, b2);
    }
  }
  return pairs;
}

uint64_t topology_hash(const SkeletonTopology& topo) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= '\n';
    h *= 1099511628211ULL;
  };
  for (size_t k = 0; k < topo.parent.size(); ++k) {
    mix(topo.joint_names[k]);
    mix(std::to_string(topo.parent[k]));
  }
  mix(std::to_string(topo.root_index));
  return h;
}

static constexpr double kDegenerateLengthMm = 1e-6;

BoneRepresentation decompose(const Pose3D& pose, const SkeletonTopology& topo) {
  if (static_cast<int>(pose.joints.size()) != topo.joints())
    throw ShapeError("decompose: joint count mismatch");
  BoneRepresentation out;
  out.lengths.reserve(topo.num_bones());
  out.directions.reserve(topo.num_bones());
  for (const auto& [p, c] : topo.bones) {
    const Vec3 d = pose.joints[c] - pose.joints[p];
    const double len = norm(d);
    if (len < kDegenerateLengthMm)
      throw DegenerateBoneError("decompose: bone " + topo.joint_names[p] + "->" +
                                topo.joint_names[c] + " has near-zero length");
    out.lengths.push_back(len);
    out.directions.push_back(d * (1.0 / len));
  }
  return out;
}

Pose3D compose(const BoneRepresentation& bones, const SkeletonTopology& topo) {
  if (static_cast<int>(bones.lengths.size()) != topo.num_bones() ||
      static_cast<int>(bones.directions.size()) != topo.num_bones())
    throw ShapeError("compose: bone count mismatch");

  std::vector<Vec3> dirs(bones.directions);
  for (auto& d : dirs) {
    const double n = norm(d);
    if (n < 1e-6) throw ZeroDirectionError("compose: near-zero direction vector");
    if (std::abs(n - 1.0) > 1e-9) d = d * (1.0 / n);
  }

  Pose3D pose;
  pose.joints.assign(topo.joints(), {0, 0, 0});
  // Eq. 1 evaluated incrementally: child = parent + dir * length.
  for (int b = 0; b < topo.num_bones(); ++b) {
    const auto& [p, c] = topo.bones[b];
    pose.joints[c] = pose.joints[p] + dirs[b] * bones.lengths[b];
  }
  return pose;
}

std::map<std::pair<int, int>, Vec3> joint_shifts(
    const BoneRepresentation& bones, const SkeletonTopology& topo,
    const std::vector<std::pair<int, int>>& pairs) {
  const Pose3D pose = compose(bones, topo);
  std::map<std::pair<int, int>, Vec3> out;
  for (const auto& [k1, k2] : pairs) {
    if (k1 < 0 || k2 < 0 || k1 >= topo.joints() || k2 >= topo.joints())
      throw IndexError("joint_shifts: pair index out of range");
    out[{k1, k2}] = pose.joints[k2] - pose.joints[k1];
  }
  return out;
}

Pose3D rescale_pose(const Pose3D& pose, const std::vector<double>& new_lengths,
                    const SkeletonTopology& topo) {
  if (static_cast<int>(new_lengths.size()) != topo.num_bones())
    throw ShapeError("rescale_pose: length count mismatch");
  BoneRepresentation rep = decompose(pose, topo);
  rep.lengths = new_lengths;
  return compose(rep, topo);
}

std::vector<std::array<double, 2>> project(const CameraModel& camera,
                                           const Pose3D& pose,
                                           const Vec3& root_world) {
  std::vector<std::array<double, 2>> out;
  out.reserve(pose.joints.size());
  const auto& R = camera.rotation;
  for (const Vec3& joint : pose.joints) {
    const Vec3 w = root_world + joint;
    Vec3 cam;
    for (int r = 0; r < 3; ++r)
      cam[r] = R[r][0] * w[0] + R[r][1] * w[1] + R[r][2] * w[2] +
               camera.translation[r];
    if (cam[2] <= 1.0)
      throw BehindCameraError("project: joint depth <= 1 mm");
    const double u = camera.fx * cam[0] / cam[2] + camera.cx;
    const double v = camera.fy * cam[1] / cam[2] + camera.cy;
    out.push_back({2.0 * u / camera.width - 1.0, 2.0 * v / camera.height - 1.0});
  }
  return out;
}

}  // namespace bonekin
