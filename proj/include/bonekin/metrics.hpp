#pragma once

#include <optional>
#include <vector>

#include "bonekin/skeleton.hpp"

namespace bonekin {

// Pose sequences for evaluation: [frame][joint] root-relative mm.
using JointSeq = std::vector<std::vector<Vec3>>;

struct MetricReport {
  double mpjpe_mm = 0;
  double p_mpjpe_mm = 0;
  std::optional<double> mpjve_mm;  // absent for single-frame sequences
  double pck150 = 0;
  double auc = 0;
  std::vector<double> per_frame_errors;
};

double mpjpe(const JointSeq& pred, const JointSeq& gt);
double p_mpjpe(const JointSeq& pred, const JointSeq& gt);
double mpjve(const JointSeq& pred, const JointSeq& gt);
double pck(const JointSeq& pred, const JointSeq& gt, double threshold_mm);
// Mean PCK over thresholds 0,5,...,150 mm (31 points).
double auc(const JointSeq& pred, const JointSeq& gt);

MetricReport evaluate_metrics(const JointSeq& pred, const JointSeq& gt);

}  // namespace bonekin
