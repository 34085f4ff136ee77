#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "elastoreg/geometry.hpp"

namespace elastoreg::synth {

enum class FieldKind : std::uint8_t { Rigid, Affine, ProbeIndentation, UniformStrain };

const char* to_string(FieldKind k);
FieldKind field_kind_from_string(const std::string& s);

// Deterministic gland-like benchmark scenario: ellipsoid cloud, axial
// compartment split, analytic deformation field with a target deformation
// magnitude.
struct Scenario {
  std::string name = "scenario";
  geom::Vec3 radii{22.0, 18.0, 25.0};  // ellipsoid semi-axes, mm
  int n_surface = 256;
  int n_internal = 256;
  double soft_fraction = 1.0 / 3.0;  // lower axial fraction labeled soft
  FieldKind deformation = FieldKind::ProbeIndentation;
  double magnitude_mm = 6.0;  // target DM; 0 disables the amplitude search
  std::uint64_t seed = 7;
  double falloff_mm = 0.0;  // probe field; 0 → half the mean semi-axis
  geom::Vec3 contact_direction{0.0, -0.8, -0.6};  // probe contact side (jittered per seed)
  // global rigid misalignment composed on top of the deformation (seeded
  // rotation of a few degrees plus a translation of this magnitude);
  // excluded from DM by construction
  double rigid_offset_mm = 0.0;
  std::optional<Eigen::Matrix3d> strain_matrix;  // uniform-strain override
};

struct GroundTruth {
  geom::Points displacement_field;  // exact analytic field at the source points
  std::vector<geom::LandmarkPair> landmark_pairs;
};

// The fully-resolved analytic field (after seeding and amplitude search),
// evaluable anywhere. A configured rigid offset wraps the deformation:
// warped = R_off·(p + u_def(p)) + t_off.
struct ResolvedField {
  FieldKind kind = FieldKind::Rigid;
  Eigen::Matrix3d linear = Eigen::Matrix3d::Zero();      // affine / uniform-strain
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // rigid
  geom::Vec3 translation = geom::Vec3::Zero();
  geom::Vec3 contact = geom::Vec3::Zero();  // probe
  double falloff = 1.0;
  double amplitude = 0.0;
  Eigen::Matrix3d offset_rotation = Eigen::Matrix3d::Identity();
  geom::Vec3 offset_translation = geom::Vec3::Zero();

  geom::Vec3 displacement(const geom::Vec3& p) const;
};

struct GeneratedPair {
  geom::PointSet source;
  geom::PointSet target;
  GroundTruth truth;
  Scenario scenario;  // input scenario with the resolved falloff
  ResolvedField field;
  double resolved_amplitude = 0.0;
  double realized_dm = 0.0;
};

GeneratedPair generate(const Scenario& scenario);

// Smooth compactly-decaying indentation: magnitude amplitude·e^{−r²/(2f²)}
// along the fixed push axis from the contact point toward the origin.
geom::Vec3 probe_indentation_field(const geom::Vec3& point, double amplitude,
                                   const geom::Vec3& contact_center, double falloff);

// Analytic spatial gradient of the field above: grad(i, j) = ∂u_i/∂p_j.
Eigen::Matrix3d probe_indentation_grad(const geom::Vec3& point, double amplitude,
                                       const geom::Vec3& contact_center, double falloff);

}  // namespace elastoreg::synth
