#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elastoreg/errors.hpp"

namespace elastoreg::geom {

using Vec3 = Eigen::Vector3d;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;  // one point per row, mm

enum class Region : std::uint8_t { Surface, Internal };
enum class Compartment : std::uint8_t { Rigid, Soft };

const char* to_string(Region r);
const char* to_string(Compartment c);
Region region_from_string(const std::string& s);
Compartment compartment_from_string(const std::string& s);

// Labeled gland point cloud. Coordinates in mm; every point carries exactly
// one region label and one compartment label.
struct PointSet {
  Points points;
  std::vector<Region> region;
  std::vector<Compartment> compartment;
  std::string subject_id;

  int size() const { return static_cast<int>(points.rows()); }

  // Checks label alignment, minimum cardinality (4) and non-coplanarity.
  void validate() const;

  std::vector<int> indices_where(std::optional<Region> r,
                                 std::optional<Compartment> c = std::nullopt) const;
  Points rows(std::span<const int> indices) const;
};

struct LandmarkPair {
  Points source_cluster;
  Points target_cluster;
  std::string name;
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Points apply(const Points& pts) const;
};

// Index of the point in `cloud` closest to `query`; exhaustive scan, ties
// broken by lowest index.
int nearest_index_bruteforce(const Points& cloud, const Vec3& query);

// Median-split kd-tree over 3D points. Matches the brute-force tie rule
// exactly: equal squared distances resolve to the lowest point index.
class KdTree3 {
 public:
  explicit KdTree3(const Points& pts);
  int nearest(const Vec3& query) const;

 private:
  struct NodeRec {
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
    int axis = 0;
    double split = 0.0;
  };
  int build(int begin, int end, int depth);
  void search(int node, const Vec3& q, double& best_d2, int& best_idx) const;

  const Points pts_;
  std::vector<int> order_;
  std::vector<NodeRec> nodes_;
  int root_ = -1;
  static constexpr int kLeafSize = 16;
};

// Nearest neighbour in `to` for every row of `from`. Exhaustive for small
// clouds, kd-tree above kBruteForceLimit; both give identical indices.
std::vector<int> nearest_indices(const Points& from, const Points& to);
inline constexpr int kBruteForceLimit = 2048;

// Two-way mean of minimum squared distances, summed (mm²).
double chamfer_loss(const Points& warped, const Points& target);

// Evaluation metric: half the sum of the two mean unsquared nearest
// distances (mm).
double chamfer_distance(const Points& warped, const Points& target);

// Rigid transform minimising Σ‖R·source_i + t − warped_i‖² over
// index-corresponding rows (cross-covariance SVD with reflection fix).
RigidTransform procrustes(const Points& source, const Points& warped);

double procrustes_residual(const Points& source, const Points& warped, const RigidTransform& rt);

// Mean rigid-excluded residual ‖R·p + t − warp(p)‖ over the subset rows;
// the transform is fitted on the full point sets.
double deformation_magnitude(const Points& source, const Points& warped,
                             std::span<const int> subset);
double deformation_magnitude(const Points& source, const Points& warped);

// Mean distance between warped source-cluster centroids and target-cluster
// centroids.
double tre(std::span<const LandmarkPair> landmarks,
           const std::function<Vec3(const Vec3&)>& warp);

// √(mean ‖predicted_i − truth_i‖²) over index-corresponding displacement rows.
double rmse(const Points& predicted, const Points& ground_truth);

Vec3 centroid(const Points& pts);

}  // namespace elastoreg::geom
