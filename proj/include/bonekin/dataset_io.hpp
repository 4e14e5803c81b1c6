#pragma once

#include <string>
#include <vector>

#include "bonekin/skeleton.hpp"

namespace bonekin {

inline constexpr const char* kDatasetFormat = "bonekin-data-1";

// JSON-lines dataset: one object per video. poses3d is required;
// root_world / keypoints2d / visibility are optional so prediction files can
// carry poses only. Doubles roundtrip exactly.
void write_dataset(const std::vector<PoseSequence>& videos,
                   const SkeletonTopology& topo, const std::string& path);

// Raises FormatError (naming the offending line) on malformed input and
// TopologyMismatchError when the file was written for another skeleton.
std::vector<PoseSequence> read_dataset(const std::string& path,
                                       const SkeletonTopology& topo);

}  // namespace bonekin
