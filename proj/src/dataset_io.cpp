#include "bonekin/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bonekin/errors.hpp"

namespace bonekin {

namespace {

using nlohmann::json;

json camera_to_json(const CameraModel& c) {
  return {{"fx", c.fx},
          {"fy", c.fy},
          {"cx", c.cx},
          {"cy", c.cy},
          {"rotation", c.rotation},
          {"translation", c.translation},
          {"width", c.width},
          {"height", c.height}};
}

CameraModel camera_from_json(const json& j) {
  CameraModel c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.rotation = j.at("rotation").get<std::array<std::array<double, 3>, 3>>();
  c.translation = j.at("translation").get<Vec3>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  return c;
}

}  // namespace

void write_dataset(const std::vector<PoseSequence>& videos,
                   const SkeletonTopology& topo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("write_dataset: cannot open " + path);
  for (const PoseSequence& v : videos) {
    json line;
    line["format"] = kDatasetFormat;
    line["actor_id"] = v.actor_id;
    line["frames"] = v.frames();
    line["camera"] = camera_to_json(v.camera);
    line["topology_hash"] = topology_hash(topo);
    json poses = json::array();
    for (const Pose3D& p : v.poses3d) poses.push_back(p.joints);
    line["poses3d"] = std::move(poses);
    if (!v.root_world.empty()) line["root_world"] = v.root_world;
    if (!v.keypoints2d.empty()) line["keypoints2d"] = v.keypoints2d;
    if (!v.visibility.empty()) line["visibility"] = v.visibility;
    out << line.dump() << '\n';
  }
  if (!out) throw FormatError("write_dataset: write failed on " + path);
}

std::vector<PoseSequence> read_dataset(const std::string& path,
                                       const SkeletonTopology& topo) {
  std::ifstream in(path);
  if (!in) throw FormatError("read_dataset: cannot open " + path);
  std::vector<PoseSequence> videos;
  std::string text;
  int lineno = 0;
  while (std::getline(in, text)) {
    ++lineno;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + " line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw FormatError("read_dataset: " + where + ": " + e.what());
    }
    try {
      if (j.at("format").get<std::string>() != kDatasetFormat)
        throw FormatError("read_dataset: " + where + ": unsupported format \"" +
                          j.at("format").get<std::string>() + "\"");
      if (j.at("topology_hash").get<uint64_t>() != topology_hash(topo))
        throw TopologyMismatchError(
            "read_dataset: " + where +
            ": file was written for a different skeleton topology");
      PoseSequence v;
      v.actor_id = j.at("actor_id").get<std::string>();
      v.camera = camera_from_json(j.at("camera"));
      const int frames = j.at("frames").get<int>();
      const json& poses = j.at("poses3d");
      if (static_cast<int>(poses.size()) != frames)
        throw FormatError("read_dataset: " + where +
                          ": frames field disagrees with poses3d length");
      for (const json& frame : poses) {
        Pose3D p;
        p.joints = frame.get<std::vector<Vec3>>();
        if (static_cast<int>(p.joints.size()) != topo.joints())
          throw FormatError("read_dataset: " + where +
                            ": wrong joint count in poses3d");
        v.poses3d.push_back(std::move(p));
      }
      if (j.contains("root_world"))
        v.root_world = j.at("root_world").get<std::vector<Vec3>>();
      if (j.contains("keypoints2d"))
        v.keypoints2d =
            j.at("keypoints2d")
                .get<std::vector<std::vector<std::array<double, 2>>>>();
      if (j.contains("visibility"))
        v.visibility = j.at("visibility").get<std::vector<std::vector<double>>>();
      const size_t T = v.poses3d.size();
      if ((!v.root_world.empty() && v.root_world.size() != T) ||
          (!v.keypoints2d.empty() && v.keypoints2d.size() != T) ||
          (!v.visibility.empty() && v.visibility.size() != T))
        throw FormatError("read_dataset: " + where +
                          ": per-frame arrays have mismatched lengths");
      videos.push_back(std::move(v));
    } catch (const json::exception& e) {
      throw FormatError("read_dataset: " + where + ": " + e.what());
    }
  }
  return videos;
}

}  // namespace bonekin
