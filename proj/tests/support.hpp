#pragma once

// Shared fixtures and finite-difference harnesses for the test binaries.

#include <cmath>
#include <functional>

#include "elastoreg/engine.hpp"
#include "elastoreg/geometry.hpp"
#include "elastoreg/network.hpp"
#include "elastoreg/rng.hpp"

namespace elastoreg::testsupport {

inline double rel_err(double got, double want, double floor = 1e-9) {
  return std::abs(got - want) / std::max(std::abs(want), floor);
}

// Small architecture: full structure (TNet, encoder, trunk, heads), toy
// widths, cheap enough for exhaustive finite differences.
inline net::ArchConfig tiny_arch() {
  net::ArchConfig a;
  a.encoder_widths = {8, 8};
  a.tnet_mlp_widths = {8};
  a.tnet_fc_widths = {8};
  a.trunk_widths = {16, 8};
  a.trunk_out_width = 12;
  a.coord_scale = 0.01;
  a.stress_scale_kPa = 100.0;
  return a;
}

// Desk-scale architecture for synthetic training runs.
inline net::ArchConfig desk_arch() {
  net::ArchConfig a;
  a.encoder_widths = {24, 48, 96};
  a.tnet_mlp_widths = {16, 32};
  a.tnet_fc_widths = {32};
  a.trunk_widths = {96, 48};
  a.trunk_out_width = 48;
  return a;
}

inline geom::PointSet random_cloud(int n, std::uint64_t seed, double extent_mm = 10.0) {
  Rng rng(seed);
  geom::PointSet ps;
  ps.points.resize(n, 3);
  ps.region.resize(static_cast<std::size_t>(n));
  ps.compartment.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) ps.points(i, j) = rng.uniform(-extent_mm, extent_mm);
    ps.region[static_cast<std::size_t>(i)] = (i % 2 == 0) ? geom::Region::Surface : geom::Region::Internal;
    ps.compartment[static_cast<std::size_t>(i)] =
        ps.points(i, 2) > 0.0 ? geom::Compartment::Rigid : geom::Compartment::Soft;
  }
  return ps;
}

// 16-point toy pair: smooth affine warp with a small translation.
struct ToyPair {
  geom::PointSet source;
  geom::PointSet target;
};

inline ToyPair toy_pair(std::uint64_t seed = 11) {
  ToyPair t;
  t.source = random_cloud(16, seed);
  Eigen::Matrix3d a;
  a << 0.03, 0.005, 0.0, 0.005, -0.02, 0.004, 0.0, 0.004, 0.01;
  t.target = t.source;
  t.target.points = t.source.points + t.source.points * a.transpose();
  t.target.points.rowwise() += Eigen::RowVector3d(0.8, -0.5, 0.3);
  return t;
}

// Central finite differences of a scalar function of the model parameters.
// Walks every entry of every parameter matrix.
inline std::vector<std::pair<std::string, Eigen::MatrixXd>> fd_parameter_gradients(
    net::RegModel& model, const std::function<double()>& loss_fn, double step) {
  std::vector<std::pair<std::string, Eigen::MatrixXd>> grads;
  for (auto& [name, theta] : model.params) {
    Eigen::MatrixXd g(theta.rows(), theta.cols());
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
      for (Eigen::Index j = 0; j < theta.cols(); ++j) {
        const double keep = theta(i, j);
        theta(i, j) = keep + step;
        const double up = loss_fn();
        theta(i, j) = keep - step;
        const double down = loss_fn();
        theta(i, j) = keep;
        g(i, j) = (up - down) / (2.0 * step);
      }
    }
    grads.emplace_back(name, std::move(g));
  }
  return grads;
}

}  // namespace elastoreg::testsupport
