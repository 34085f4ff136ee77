#include "elastoreg/synthdata.hpp"

#include <cmath>
#include <numbers>

#include "elastoreg/rng.hpp"

namespace elastoreg::synth {

const char* to_string(FieldKind k) {
  switch (k) {
    case FieldKind::Rigid: return "rigid";
    case FieldKind::Affine: return "affine";
    case FieldKind::ProbeIndentation: return "probe-indentation";
    case FieldKind::UniformStrain: return "uniform-strain";
  }
  return "?";
}

FieldKind field_kind_from_string(const std::string& s) {
  if (s == "rigid") return FieldKind::Rigid;
  if (s == "affine") return FieldKind::Affine;
  if (s == "probe-indentation") return FieldKind::ProbeIndentation;
  if (s == "uniform-strain") return FieldKind::UniformStrain;
  throw config_error("unknown deformation kind: " + s);
}

geom::Vec3 probe_indentation_field(const geom::Vec3& point, double amplitude,
                                   const geom::Vec3& contact_center, double falloff) {
  if (falloff <= 0.0) throw argument_error("probe field falloff must be positive");
  const double cc = contact_center.norm();
  if (cc <= 0.0) {
    throw argument_error("probe contact center must be away from the origin");
  }
  const geom::Vec3 push = -contact_center / cc;  // away from the contact, toward the body
  const double r2 = (point - contact_center).squaredNorm();
  return amplitude * std::exp(-r2 / (2.0 * falloff * falloff)) * push;
}

Eigen::Matrix3d probe_indentation_grad(const geom::Vec3& point, double amplitude,
                                       const geom::Vec3& contact_center, double falloff) {
  const double cc = contact_center.norm();
  if (falloff <= 0.0 || cc <= 0.0) throw argument_error("invalid probe field parameters");
  const geom::Vec3 push = -contact_center / cc;
  const geom::Vec3 d = point - contact_center;
  const double g = amplitude * std::exp(-d.squaredNorm() / (2.0 * falloff * falloff));
  // u_i = g(p)·push_i  ⇒  ∂u_i/∂p_j = push_i · g · (−d_j/f²)
  return push * (-g / (falloff * falloff)) * d.transpose();
}

geom::Vec3 ResolvedField::displacement(const geom::Vec3& p) const {
  geom::Vec3 deformed = p;
  switch (kind) {
    case FieldKind::Rigid:
      deformed = rotation * p + translation;
      break;
    case FieldKind::Affine:
      deformed = p + linear * p + translation;
      break;
    case FieldKind::UniformStrain:
      deformed = p + linear * p;
      break;
    case FieldKind::ProbeIndentation:
      deformed = p + probe_indentation_field(p, amplitude, contact, falloff);
      break;
  }
  return offset_rotation * deformed + offset_translation - p;
}

namespace {

using geom::Points;
using geom::Vec3;

// Golden-angle spiral on the unit sphere, scaled to the ellipsoid.
Points ellipsoid_surface(const Vec3& radii, int n) {
  Points pts(n, 3);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = (n == 1) ? 0.0 : 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden * static_cast<double>(i);
    pts.row(i) = Vec3(radii(0) * r * std::cos(a), radii(1) * r * std::sin(a), radii(2) * z)
                     .transpose();
  }
  return pts;
}

Points ellipsoid_interior(const Vec3& radii, int n, Rng& rng) {
  Points pts(n, 3);
  int have = 0;
  while (have < n) {
    const Vec3 p(rng.uniform(-radii(0), radii(0)), rng.uniform(-radii(1), radii(1)),
                 rng.uniform(-radii(2), radii(2)));
    const Vec3 q = p.cwiseQuotient(radii);
    if (q.squaredNorm() < 1.0) {
      pts.row(have++) = p.transpose();
    }
  }
  return pts;
}

Eigen::Matrix3d rotation_about(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Vec3 random_unit(Rng& rng) {
  while (true) {
    const Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-6) return v / n;
  }
}

Points apply_field(const ResolvedField& f, const Points& pts) {
  Points out(pts.rows(), 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    out.row(i) = f.displacement(Vec3(pts.row(i).transpose())).transpose();
  }
  return out;
}

double realized_dm(const ResolvedField& f, const Points& pts) {
  const Points warped = pts + apply_field(f, pts);
  return geom::deformation_magnitude(pts, warped);
}

}  // namespace

GeneratedPair generate(const Scenario& scenario_in) {
  Scenario sc = scenario_in;
  if (sc.radii.minCoeff() <= 0.0) throw config_error("scenario radii must be positive");
  if (sc.n_surface + sc.n_internal < 4) throw config_error("scenario needs at least 4 points");
  if (sc.soft_fraction <= 0.0 || sc.soft_fraction >= 1.0) {
    throw config_error("soft_fraction must lie in (0, 1)");
  }
  if (sc.deformation == FieldKind::Rigid && sc.magnitude_mm != 0.0) {
    throw config_error(
        "rigid fields have zero deformation magnitude by definition; "
        "set magnitude_mm to 0");
  }
  if (sc.falloff_mm <= 0.0) sc.falloff_mm = 0.5 * sc.radii.mean();

  Rng rng(sc.seed);

  Points surface = ellipsoid_surface(sc.radii, sc.n_surface);
  Points interior = ellipsoid_interior(sc.radii, sc.n_internal, rng);

  geom::PointSet source;
  source.subject_id = sc.name;
  source.points.resize(sc.n_surface + sc.n_internal, 3);
  source.points.topRows(sc.n_surface) = surface;
  source.points.bottomRows(sc.n_internal) = interior;
  source.region.assign(static_cast<std::size_t>(sc.n_surface), geom::Region::Surface);
  source.region.insert(source.region.end(), static_cast<std::size_t>(sc.n_internal),
                       geom::Region::Internal);

  // lower `soft_fraction` of the axial (z) extent is the soft compartment
  const double z_min = source.points.col(2).minCoeff();
  const double z_max = source.points.col(2).maxCoeff();
  const double z_split = z_min + sc.soft_fraction * (z_max - z_min);
  source.compartment.resize(static_cast<std::size_t>(source.size()));
  for (int i = 0; i < source.size(); ++i) {
    source.compartment[static_cast<std::size_t>(i)] =
        source.points(i, 2) < z_split ? geom::Compartment::Soft : geom::Compartment::Rigid;
  }

  // seeded field parameters
  ResolvedField field;
  field.kind = sc.deformation;
  switch (sc.deformation) {
    case FieldKind::Rigid: {
      const double angle = rng.uniform(0.05, 0.18);  // rad
      field.rotation = rotation_about(random_unit(rng), angle);
      field.translation = 3.0 * random_unit(rng);
      break;
    }
    case FieldKind::Affine: {
      Eigen::Matrix3d a;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
      }
      a = 0.5 * (a + a.transpose()) + 0.3 * (a - a.transpose());
      field.linear = a / a.norm();
      field.translation = 2.0 * random_unit(rng);
      break;
    }
    case FieldKind::UniformStrain: {
      Eigen::Matrix3d a;
      if (sc.strain_matrix) {
        a = *sc.strain_matrix;
      } else {
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
        }
        a = 0.5 * (a + a.transpose());
        a /= a.norm();
      }
      field.linear = a;
      break;
    }
    case FieldKind::ProbeIndentation: {
      if (sc.contact_direction.norm() < 1e-9) {
        throw config_error("contact_direction must be a nonzero vector");
      }
      const Vec3 dir =
          (sc.contact_direction.normalized() + 0.15 * random_unit(rng)).normalized();
      field.contact = dir.cwiseProduct(sc.radii);
      field.falloff = sc.falloff_mm;
      field.amplitude = 1.0;
      break;
    }
  }

  if (sc.rigid_offset_mm < 0.0) throw config_error("rigid_offset_mm must be nonnegative");
  if (sc.rigid_offset_mm > 0.0) {
    field.offset_rotation = rotation_about(random_unit(rng), rng.uniform(0.04, 0.10));
    field.offset_translation = sc.rigid_offset_mm * random_unit(rng);
  }

  double resolved_amplitude = 1.0;
  if (sc.deformation != FieldKind::Rigid &&
      !(sc.deformation == FieldKind::UniformStrain && sc.strain_matrix && sc.magnitude_mm == 0.0)) {
    if (sc.magnitude_mm < 0.0) throw config_error("magnitude_mm must be nonnegative");
    if (sc.magnitude_mm > 0.0) {
      const Eigen::Matrix3d base_linear = field.linear;
      auto dm_at = [&](double s) {
        if (sc.deformation == FieldKind::ProbeIndentation) {
          field.amplitude = s;
        } else {
          field.linear = s * base_linear;
        }
        return realized_dm(field, source.points);
      };
      double hi = 1.0;
      int guard = 0;
      while (dm_at(hi) < sc.magnitude_mm) {
        hi *= 2.0;
        if (++guard > 60) throw config_error("deformation magnitude target unattainable");
      }
      double lo = 0.0;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (dm_at(mid) < sc.magnitude_mm) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      resolved_amplitude = hi;
      dm_at(hi);
    }
  }

  GeneratedPair out;
  out.scenario = sc;
  out.field = field;
  out.resolved_amplitude = resolved_amplitude;
  out.source = source;

  out.truth.displacement_field = apply_field(field, source.points);
  out.target = source;
  out.target.points = source.points + out.truth.displacement_field;
  out.realized_dm = geom::deformation_magnitude(source.points, out.target.points);

  // landmark clusters: two poles plus two interior blobs, 8 points each,
  // Gaussian σ = 1 mm, carried through the exact field
  const std::array<std::pair<std::string, Vec3>, 4> centers{
      std::pair{std::string("apex"), Vec3(0.0, 0.0, 0.92 * sc.radii(2))},
      std::pair{std::string("base"), Vec3(0.0, 0.0, -0.92 * sc.radii(2))},
      std::pair{std::string("blob1"), Vec3(0.45 * sc.radii(0), 0.2 * sc.radii(1), 0.3 * sc.radii(2))},
      std::pair{std::string("blob2"),
                Vec3(-0.3 * sc.radii(0), -0.4 * sc.radii(1), -0.35 * sc.radii(2))}};
  for (const auto& [name, c] : centers) {
    geom::LandmarkPair lm;
    lm.name = name;
    lm.source_cluster.resize(8, 3);
    lm.target_cluster.resize(8, 3);
    for (int i = 0; i < 8; ++i) {
      const Vec3 p = c + Vec3(rng.normal(), rng.normal(), rng.normal());
      lm.source_cluster.row(i) = p.transpose();
      lm.target_cluster.row(i) = (p + field.displacement(p)).transpose();
    }
    out.truth.landmark_pairs.push_back(std::move(lm));
  }
  return out;
}

}  // namespace elastoreg::synth
