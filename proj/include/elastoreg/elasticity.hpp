#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>

#include "elastoreg/errors.hpp"
#include "elastoreg/geometry.hpp"

namespace elastoreg::elast {

enum class TensorKind : std::uint8_t { Strain, Stress };

// Symmetric second-order tensor in 6-component ordering (xx, yy, zz, xy,
// xz, yz). Strain components are dimensionless, stress components in kPa.
struct Voigt6 {
  std::array<double, 6> c{};
  TensorKind kind = TensorKind::Strain;

  double xx() const { return c[0]; }
  double yy() const { return c[1]; }
  double zz() const { return c[2]; }
  double xy() const { return c[3]; }
  double xz() const { return c[4]; }
  double yz() const { return c[5]; }
};

struct LameParams {
  double lambda = 0.0;  // kPa
  double mu = 0.0;      // kPa
};

// λ = Eν/((1−2ν)(1+ν)), μ = E/(2(1+ν)).
LameParams lame_from_E_nu(double young_kpa, double poisson);

// Inverse map E = μ(3λ+2μ)/(λ+μ), used as the round-trip check.
double young_from_lame(const LameParams& m);

// ε = ½(∇d + ∇dᵀ); disp_grad(i, j) = ∂d_i/∂p_j.
Voigt6 strain_from_grad(const Eigen::Matrix3d& disp_grad);

// Generalised Hooke's law: the isotropic stiffness matrix applied to
// (εxx, εyy, εzz, 2εxy, 2εxz, 2εyz).
Voigt6 constitutive_stress(const Voigt6& strain, const LameParams& m);

using StressGrad = Eigen::Matrix<double, 6, 3>;  // rows Voigt, cols ∂/∂(x,y,z), kPa/mm

// Static-equilibrium residual: |div σ|₁ summed over the three components,
// using σ_yx = σ_xy etc. Zero body force.
double f1_equilibrium(const StressGrad& stress_grad);

// Constitutive residual: sum of the six absolute deviations between the
// Hooke-predicted stress of `strain` and the predicted `stress`.
double f2_constitutive(const Voigt6& strain, const Voigt6& stress, const LameParams& m);

// Elastic energy density ½ ε:σ with the factor-2 shear weighting. Signed.
double f3_energy(const Voigt6& strain, const Voigt6& stress);

// Per-point material assignment: piecewise constant per compartment.
struct MaterialConfig {
  double E_rigid_kPa = 500.0;
  double E_soft_kPa = 5.0;
  double nu = 0.49;
};

struct MaterialField {
  Eigen::VectorXd young_modulus;  // kPa
  Eigen::VectorXd poisson_ratio;
  Eigen::VectorXd lame_lambda;  // kPa
  Eigen::VectorXd lame_mu;      // kPa

  LameParams at(int i) const {
    return {lame_lambda(i), lame_mu(i)};
  }

  static MaterialField from_compartments(const geom::PointSet& ps, const MaterialConfig& cfg);
};

}  // namespace elastoreg::elast
