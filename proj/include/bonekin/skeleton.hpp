#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bonekin/errors.hpp"

namespace bonekin {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(const Vec3& a, double s) {
  return {a[0] * s, a[1] * s, a[2] * s};
}
double norm(const Vec3& v);

// Rooted tree over j joints; j-1 directed bones, one per non-root joint.
// Bone index b corresponds to the bone whose child joint is bones[b].second.
struct SkeletonTopology {
  std::vector<std::string> joint_names;
  std::vector<int> parent;  // parent[root] == -1
  int root_index = 0;
  std::vector<std::pair<int, int>> bones;        // (parent, child), ordered by child
  std::vector<std::vector<int>> bone_paths;      // joint -> bone indices root..joint
  std::vector<std::pair<int, int>> nonadjacent_pairs;  // (k1, k2), k1 < k2
  std::vector<int> bone_of_child;                // joint -> bone index (-1 for root)

  int joints() const { return static_cast<int>(parent.size()); }
  int num_bones() const { return joints() - 1; }
};

SkeletonTopology build_topology(const std::vector<int>& parent,
                                const std::vector<std::string>& names,
                                int root);

// The default 17-joint layout (Pelvis-rooted, H36M-style joint set).
SkeletonTopology default_topology17();

// Indices into the bone list of left/right symmetric bone pairs, by name
// convention ("Left"/"Right" prefixes on the child joint).
std::vector<std::pair<int, int>> symmetric_bone_pairs(const SkeletonTopology& topo);

uint64_t topology_hash(const SkeletonTopology& topo);

struct Pose3D {
  std::vector<Vec3> joints;  // mm, root-relative
};

struct BoneRepresentation {
  std::vector<double> lengths;  // mm, > 0
  std::vector<Vec3> directions;  // unit
};

struct CameraModel {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  std::array<std::array<double, 3>, 3> rotation = {
      {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Vec3 translation = {0, 0, 0};
  int width = 1000, height = 1000;
};

struct PoseSequence {
  std::vector<Pose3D> poses3d;
  std::vector<Vec3> root_world;               // mm
  std::vector<std::vector<std::array<double, 2>>> keypoints2d;  // [-1,1]
  std::vector<std::vector<double>> visibility;                  // [0,1]
  CameraModel camera;
  std::string actor_id;

  int frames() const { return static_cast<int>(poses3d.size()); }
};

BoneRepresentation decompose(const Pose3D& pose, const SkeletonTopology& topo);
Pose3D compose(const BoneRepresentation& bones, const SkeletonTopology& topo);

std::map<std::pair<int, int>, Vec3> joint_shifts(
    const BoneRepresentation& bones, const SkeletonTopology& topo,
    const std::vector<std::pair<int, int>>& pairs);

Pose3D rescale_pose(const Pose3D& pose, const std::vector<double>& new_lengths,
                    const SkeletonTopology& topo);

// Projects a root-relative pose placed at root_world into normalized [-1,1]
// image coordinates.
std::vector<std::array<double, 2>> project(const CameraModel& camera,
                                           const Pose3D& pose,
                                           const Vec3& root_world);

}  // namespace bonekin
