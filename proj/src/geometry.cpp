#include "elastoreg/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace elastoreg::geom {

const char* to_string(Region r) { return r == Region::Surface ? "surface" : "internal"; }
const char* to_string(Compartment c) { return c == Compartment::Rigid ? "rigid" : "soft"; }

Region region_from_string(const std::string& s) {
  if (s == "surface") return Region::Surface;
  if (s == "internal") return Region::Internal;
  throw argument_error("unknown region label: " + s);
}

Compartment compartment_from_string(const std::string& s) {
  if (s == "rigid") return Compartment::Rigid;
  if (s == "soft") return Compartment::Soft;
  throw argument_error("unknown compartment label: " + s);
}

void PointSet::validate() const {
  const auto n = points.rows();
  if (region.size() != static_cast<std::size_t>(n) ||
      compartment.size() != static_cast<std::size_t>(n)) {
    throw argument_error("point set labels not aligned with coordinates");
  }
  if (n < 4) throw argument_error("point set needs at least 4 points");
  const Points centered = points.rowwise() - centroid(points).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto& sv = svd.singularValues();
  if (sv(2) <= 1e-12 * std::max(sv(0), 1.0)) {
    throw argument_error("point set is coplanar");
  }
}

std::vector<int> PointSet::indices_where(std::optional<Region> r,
                                         std::optional<Compartment> c) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (r && region[static_cast<std::size_t>(i)] != *r) continue;
    if (c && compartment[static_cast<std::size_t>(i)] != *c) continue;
    out.push_back(i);
  }
  return out;
}

Points PointSet::rows(std::span<const int> indices) const {
  Points out(static_cast<Eigen::Index>(indices.size()), 3);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = points.row(indices[i]);
  }
  return out;
}

Points RigidTransform::apply(const Points& pts) const {
  Points out = pts * rotation.transpose();
  out.rowwise() += translation.transpose();
  return out;
}

namespace {

// Accumulating in sorted order makes the sum independent of row order, so
// permutation-invariance contracts hold bitwise.
double sorted_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

}  // namespace

Vec3 centroid(const Points& pts) {
  if (pts.rows() == 0) throw argument_error("centroid of empty point list");
  Vec3 c;
  std::vector<double> col(static_cast<std::size_t>(pts.rows()));
  for (int j = 0; j < 3; ++j) {
    for (Eigen::Index i = 0; i < pts.rows(); ++i) col[static_cast<std::size_t>(i)] = pts(i, j);
    c(j) = sorted_sum(col) / static_cast<double>(pts.rows());
  }
  return c;
}

int nearest_index_bruteforce(const Points& cloud, const Vec3& query) {
  if (cloud.rows() == 0) throw argument_error("nearest neighbour in empty cloud");
  int best = 0;
  double best_d2 = (cloud.row(0).transpose() - query).squaredNorm();
  for (Eigen::Index i = 1; i < cloud.rows(); ++i) {
    const double d2 = (cloud.row(i).transpose() - query).squaredNorm();
    if (d2 < best_d2) {  // strict: equal distances keep the lowest index
      best_d2 = d2;
      best = static_cast<int>(i);
    }
  }
  return best;
}

KdTree3::KdTree3(const Points& pts) : pts_(pts) {
  if (pts_.rows() == 0) throw argument_error("kd-tree over empty cloud");
  order_.resize(static_cast<std::size_t>(pts_.rows()));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(static_cast<std::size_t>(2 * pts_.rows() / kLeafSize + 4));
  root_ = build(0, static_cast<int>(pts_.rows()), 0);
}

int KdTree3::build(int begin, int end, int depth) {
  NodeRec rec;
  rec.begin = begin;
  rec.end = end;
  if (end - begin <= kLeafSize) {
    // keep leaves index-sorted so scans visit low indices first
    std::sort(order_.begin() + begin, order_.begin() + end);
    nodes_.push_back(rec);
    return static_cast<int>(nodes_.size() - 1);
  }
  const int axis = depth % 3;
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double va = pts_(a, axis), vb = pts_(b, axis);
                     return va < vb || (va == vb && a < b);
                   });
  rec.axis = axis;
  rec.split = pts_(order_[static_cast<std::size_t>(mid)], axis);
  nodes_.push_back(rec);
  const int self = static_cast<int>(nodes_.size() - 1);
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[static_cast<std::size_t>(self)].left = left;
  nodes_[static_cast<std::size_t>(self)].right = right;
  return self;
}

void KdTree3::search(int node, const Vec3& q, double& best_d2, int& best_idx) const {
  const NodeRec& rec = nodes_[static_cast<std::size_t>(node)];
  if (rec.left < 0) {
    for (int k = rec.begin; k < rec.end; ++k) {
      const int idx = order_[static_cast<std::size_t>(k)];
      const double d2 = (pts_.row(idx).transpose() - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
        best_d2 = d2;
        best_idx = idx;
      }
    }
    return;
  }
  const double delta = q(rec.axis) - rec.split;
  const int near = delta < 0.0 ? rec.left : rec.right;
  const int far = delta < 0.0 ? rec.right : rec.left;
  search(near, q, best_d2, best_idx);
  // the far side may hold an equal-distance point with a lower index, so
  // descend on <= rather than <
  if (delta * delta <= best_d2) search(far, q, best_d2, best_idx);
}

int KdTree3::nearest(const Vec3& query) const {
  double best_d2 = std::numeric_limits<double>::infinity();
  int best_idx = static_cast<int>(pts_.rows());
  search(root_, query, best_d2, best_idx);
  return best_idx;
}

std::vector<int> nearest_indices(const Points& from, const Points& to) {
  if (from.rows() == 0 || to.rows() == 0) {
    throw argument_error("nearest_indices: empty point subset");
  }
  std::vector<int> out(static_cast<std::size_t>(from.rows()));
  if (to.rows() <= kBruteForceLimit) {
    for (Eigen::Index i = 0; i < from.rows(); ++i) {
      out[static_cast<std::size_t>(i)] = nearest_index_bruteforce(to, from.row(i).transpose());
    }
  } else {
    KdTree3 tree(to);
    for (Eigen::Index i = 0; i < from.rows(); ++i) {
      out[static_cast<std::size_t>(i)] = tree.nearest(from.row(i).transpose());
    }
  }
  return out;
}

double chamfer_loss(const Points& warped, const Points& target) {
  const auto to_warped = nearest_indices(target, warped);
  const auto to_target = nearest_indices(warped, target);
  std::vector<double> d_t(static_cast<std::size_t>(target.rows()));
  for (Eigen::Index t = 0; t < target.rows(); ++t) {
    d_t[static_cast<std::size_t>(t)] =
        (warped.row(to_warped[static_cast<std::size_t>(t)]) - target.row(t)).squaredNorm();
  }
  std::vector<double> d_s(static_cast<std::size_t>(warped.rows()));
  for (Eigen::Index s = 0; s < warped.rows(); ++s) {
    d_s[static_cast<std::size_t>(s)] =
        (warped.row(s) - target.row(to_target[static_cast<std::size_t>(s)])).squaredNorm();
  }
  return sorted_sum(d_t) / static_cast<double>(target.rows()) +
         sorted_sum(d_s) / static_cast<double>(warped.rows());
}

double chamfer_distance(const Points& warped, const Points& target) {
  const auto to_warped = nearest_indices(target, warped);
  const auto to_target = nearest_indices(warped, target);
  std::vector<double> d_t(static_cast<std::size_t>(target.rows()));
  for (Eigen::Index t = 0; t < target.rows(); ++t) {
    d_t[static_cast<std::size_t>(t)] =
        (warped.row(to_warped[static_cast<std::size_t>(t)]) - target.row(t)).norm();
  }
  std::vector<double> d_s(static_cast<std::size_t>(warped.rows()));
  for (Eigen::Index s = 0; s < warped.rows(); ++s) {
    d_s[static_cast<std::size_t>(s)] =
        (warped.row(s) - target.row(to_target[static_cast<std::size_t>(s)])).norm();
  }
  return 0.5 * (sorted_sum(d_t) / static_cast<double>(target.rows()) +
                sorted_sum(d_s) / static_cast<double>(warped.rows()));
}

RigidTransform procrustes(const Points& source, const Points& warped) {
  if (source.rows() != warped.rows()) {
    throw argument_error("procrustes: point counts differ");
  }
  if (source.rows() < 3) {
    throw degenerate_error("procrustes needs at least 3 points");
  }
  const Vec3 cs = centroid(source);
  const Vec3 cw = centroid(warped);
  const Points a = source.rowwise() - cs.transpose();
  const Points b = warped.rowwise() - cw.transpose();
  const Eigen::Matrix3d h = a.transpose() * b;  // cross-covariance
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(2) <= 1e-12 * std::max(sv(0), 1e-300)) {
    throw degenerate_error("procrustes: rank-deficient cross-covariance");
  }
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((v * u.transpose()).determinant() < 0.0) {
    u.col(2) *= -1.0;  // Kabsch reflection fix
  }
  RigidTransform rt;
  rt.rotation = v * u.transpose();
  rt.translation = cw - rt.rotation * cs;
  return rt;
}

double procrustes_residual(const Points& source, const Points& warped, const RigidTransform& rt) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < source.rows(); ++i) {
    sum += (rt.apply(Vec3(source.row(i).transpose())) - warped.row(i).transpose()).squaredNorm();
  }
  return sum;
}

double deformation_magnitude(const Points& source, const Points& warped,
                             std::span<const int> subset) {
  if (subset.empty()) throw argument_error("deformation_magnitude: empty subset");
  const RigidTransform rt = procrustes(source, warped);
  double sum = 0.0;
  for (int i : subset) {
    sum += (rt.apply(Vec3(source.row(i).transpose())) - warped.row(i).transpose()).norm();
  }
  return sum / static_cast<double>(subset.size());
}

double deformation_magnitude(const Points& source, const Points& warped) {
  std::vector<int> all(static_cast<std::size_t>(source.rows()));
  std::iota(all.begin(), all.end(), 0);
  return deformation_magnitude(source, warped, all);
}

double tre(std::span<const LandmarkPair> landmarks,
           const std::function<Vec3(const Vec3&)>& warp) {
  if (landmarks.empty()) throw argument_error("tre: no landmark pairs");
  double sum = 0.0;
  for (const auto& lm : landmarks) {
    if (lm.source_cluster.rows() == 0 || lm.target_cluster.rows() == 0) {
      throw argument_error("tre: empty landmark cluster '" + lm.name + "'");
    }
    Points warped_cluster(lm.source_cluster.rows(), 3);
    for (Eigen::Index i = 0; i < lm.source_cluster.rows(); ++i) {
      warped_cluster.row(i) = warp(Vec3(lm.source_cluster.row(i).transpose())).transpose();
    }
    sum += (centroid(warped_cluster) - centroid(lm.target_cluster)).norm();
  }
  return sum / static_cast<double>(landmarks.size());
}

double rmse(const Points& predicted, const Points& ground_truth) {
  if (predicted.rows() != ground_truth.rows()) {
    throw argument_error("rmse: displacement field cardinality mismatch");
  }
  if (predicted.rows() == 0) throw argument_error("rmse: empty fields");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < predicted.rows(); ++i) {
    sum += (predicted.row(i) - ground_truth.row(i)).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(predicted.rows()));
}

}  // namespace elastoreg::geom
