#include "elastoreg/elasticity.hpp"

#include <cmath>

namespace elastoreg::elast {

LameParams lame_from_E_nu(double young_kpa, double poisson) {
  if (young_kpa <= 0.0) throw argument_error("Young's modulus must be positive");
  if (poisson >= 0.5) throw argument_error("Poisson ratio at or beyond the incompressible limit");
  if (poisson <= 0.0) throw argument_error("Poisson ratio must be positive");
  LameParams m;
  m.lambda = young_kpa * poisson / ((1.0 - 2.0 * poisson) * (1.0 + poisson));
  m.mu = young_kpa / (2.0 * (1.0 + poisson));
  return m;
}

double young_from_lame(const LameParams& m) {
  return m.mu * (3.0 * m.lambda + 2.0 * m.mu) / (m.lambda + m.mu);
}

Voigt6 strain_from_grad(const Eigen::Matrix3d& g) {
  if (!g.allFinite()) throw numeric_error("non-finite displacement gradient");
  Voigt6 e;
  e.kind = TensorKind::Strain;
  e.c = {g(0, 0),
         g(1, 1),
         g(2, 2),
         0.5 * (g(0, 1) + g(1, 0)),
         0.5 * (g(0, 2) + g(2, 0)),
         0.5 * (g(1, 2) + g(2, 1))};
  return e;
}

Voigt6 constitutive_stress(const Voigt6& strain, const LameParams& m) {
  if (strain.kind != TensorKind::Strain) {
    throw argument_error("constitutive_stress expects a strain tensor");
  }
  const double trace = strain.xx() + strain.yy() + strain.zz();
  Voigt6 s;
  s.kind = TensorKind::Stress;
  s.c = {(m.lambda + 2.0 * m.mu) * strain.xx() + m.lambda * (trace - strain.xx()),
         (m.lambda + 2.0 * m.mu) * strain.yy() + m.lambda * (trace - strain.yy()),
         (m.lambda + 2.0 * m.mu) * strain.zz() + m.lambda * (trace - strain.zz()),
         2.0 * m.mu * strain.xy(),
         2.0 * m.mu * strain.xz(),
         2.0 * m.mu * strain.yz()};
  return s;
}

double f1_equilibrium(const StressGrad& g) {
  // rows: xx yy zz xy xz yz; cols: ∂/∂x ∂/∂y ∂/∂z
  const double div_x = g(0, 0) + g(3, 1) + g(4, 2);
  const double div_y = g(3, 0) + g(1, 1) + g(5, 2);
  const double div_z = g(4, 0) + g(5, 1) + g(2, 2);
  return std::abs(div_x) + std::abs(div_y) + std::abs(div_z);
}

double f2_constitutive(const Voigt6& strain, const Voigt6& stress, const LameParams& m) {
  if (strain.kind != TensorKind::Strain) {
    throw argument_error("f2_constitutive expects a strain tensor first");
  }
  const Voigt6 hooke = constitutive_stress(strain, m);
  double sum = 0.0;
  for (int i = 0; i < 6; ++i) {
    sum += std::abs(hooke.c[static_cast<std::size_t>(i)] - stress.c[static_cast<std::size_t>(i)]);
  }
  return sum;
}

double f3_energy(const Voigt6& strain, const Voigt6& stress) {
  return 0.5 * (strain.xx() * stress.xx() + strain.yy() * stress.yy() +
                strain.zz() * stress.zz() + 2.0 * strain.xy() * stress.xy() +
                2.0 * strain.xz() * stress.xz() + 2.0 * strain.yz() * stress.yz());
}

MaterialField MaterialField::from_compartments(const geom::PointSet& ps,
                                               const MaterialConfig& cfg) {
  const LameParams rigid = lame_from_E_nu(cfg.E_rigid_kPa, cfg.nu);
  const LameParams soft = lame_from_E_nu(cfg.E_soft_kPa, cfg.nu);
  const int n = ps.size();
  MaterialField f;
  f.young_modulus.resize(n);
  f.poisson_ratio.resize(n);
  f.lame_lambda.resize(n);
  f.lame_mu.resize(n);
  for (int i = 0; i < n; ++i) {
    const bool is_rigid = ps.compartment[static_cast<std::size_t>(i)] == geom::Compartment::Rigid;
    f.young_modulus(i) = is_rigid ? cfg.E_rigid_kPa : cfg.E_soft_kPa;
    f.poisson_ratio(i) = cfg.nu;
    f.lame_lambda(i) = is_rigid ? rigid.lambda : soft.lambda;
    f.lame_mu(i) = is_rigid ? rigid.mu : soft.mu;
  }
  return f;
}

}  // namespace elastoreg::elast
