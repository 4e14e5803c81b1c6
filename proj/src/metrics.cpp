#include "bonekin/metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

namespace bonekin {

static void check_shapes(const JointSeq& pred, const JointSeq& gt) {
  if (pred.size() != gt.size() || pred.empty())
    throw ShapeError("metrics: frame count mismatch or empty sequence");
  for (size_t t = 0; t < pred.size(); ++t)
    if (pred[t].size() != gt[t].size() || pred[t].empty())
      throw ShapeError("metrics: joint count mismatch");
}

double mpjpe(const JointSeq& pred, const JointSeq& gt) {
  check_shapes(pred, gt);
  double sum = 0;
  size_t n = 0;
  for (size_t t = 0; t < pred.size(); ++t)
    for (size_t k = 0; k < pred[t].size(); ++k) {
      sum += norm(pred[t][k] - gt[t][k]);
      ++n;
    }
  return sum / static_cast<double>(n);
}

// Per-frame similarity (Umeyama) alignment of pred onto gt, reflections
// forbidden, followed by MPJPE.
double p_mpjpe(const JointSeq& pred, const JointSeq& gt) {
  check_shapes(pred, gt);
  double sum = 0;
  size_t n = 0;
  for (size_t t = 0; t < pred.size(); ++t) {
    const int j = static_cast<int>(pred[t].size());
    Eigen::MatrixXd P(3, j), G(3, j);
    for (int k = 0; k < j; ++k)
      for (int r = 0; r < 3; ++r) {
        P(r, k) = pred[t][k][static_cast<size_t>(r)];
        G(r, k) = gt[t][k][static_cast<size_t>(r)];
      }
    const Eigen::Vector3d mp = P.rowwise().mean();
    const Eigen::Vector3d mg = G.rowwise().mean();
    P.colwise() -= mp;
    G.colwise() -= mg;
    const double var_g = G.squaredNorm();
    if (var_g < 1e-12)
      throw DegenerateFrameError("p_mpjpe: all ground-truth joints coincident");
    const double var_p = P.squaredNorm();

    Eigen::Matrix3d H = G * P.transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(
        H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0)
      D(2, 2) = -1;
    const Eigen::Matrix3d R = svd.matrixU() * D * svd.matrixV().transpose();
    const double scale =
        var_p > 1e-12 ? (svd.singularValues().asDiagonal() * D).trace() / var_p
                      : 1.0;

    const Eigen::MatrixXd aligned = scale * (R * P);
    for (int k = 0; k < j; ++k) {
      sum += (aligned.col(k) - G.col(k)).norm();
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

double mpjve(const JointSeq& pred, const JointSeq& gt) {
  check_shapes(pred, gt);
  if (pred.size() < 2) throw TooShortError("mpjve: need at least 2 frames");
  JointSeq vp(pred.size() - 1), vg(gt.size() - 1);
  for (size_t t = 0; t + 1 < pred.size(); ++t) {
    vp[t].resize(pred[t].size());
    vg[t].resize(gt[t].size());
    for (size_t k = 0; k < pred[t].size(); ++k) {
      vp[t][k] = pred[t + 1][k] - pred[t][k];
      vg[t][k] = gt[t + 1][k] - gt[t][k];
    }
  }
  return mpjpe(vp, vg);
}

double pck(const JointSeq& pred, const JointSeq& gt, double threshold_mm) {
  check_shapes(pred, gt);
  size_t hit = 0, n = 0;
  for (size_t t = 0; t < pred.size(); ++t)
    for (size_t k = 0; k < pred[t].size(); ++k) {
      if (norm(pred[t][k] - gt[t][k]) <= threshold_mm) ++hit;
      ++n;
    }
  return static_cast<double>(hit) / static_cast<double>(n);
}

double auc(const JointSeq& pred, const JointSeq& gt) {
  double sum = 0;
  for (int i = 0; i <= 30; ++i) sum += pck(pred, gt, 5.0 * i);
  return sum / 31.0;
}

MetricReport evaluate_metrics(const JointSeq& pred, const JointSeq& gt) {
  MetricReport rep;
  rep.mpjpe_mm = mpjpe(pred, gt);
  rep.p_mpjpe_mm = p_mpjpe(pred, gt);
  if (pred.size() >= 2) rep.mpjve_mm = mpjve(pred, gt);
  rep.pck150 = pck(pred, gt, 150.0);
  rep.auc = auc(pred, gt);
  rep.per_frame_errors.reserve(pred.size());
  for (size_t t = 0; t < pred.size(); ++t) {
    double s = 0;
    for (size_t k = 0; k < pred[t].size(); ++k) s += norm(pred[t][k] - gt[t][k]);
    rep.per_frame_errors.push_back(s / static_cast<double>(pred[t].size()));
  }
  return rep;
}

}  // namespace bonekin
