#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "elastoreg/autodiff.hpp"
#include "elastoreg/geometry.hpp"

namespace elastoreg::net {

// Layer widths and input conditioning. Defaults are the paper-scale
// architecture; every width is overridable for desk-scale experiments.
struct ArchConfig {
  std::vector<int> encoder_widths{64, 64, 64, 128, 1024};  // shared per-point MLP before pooling
  std::vector<int> tnet_mlp_widths{64, 128, 1024};
  std::vector<int> tnet_fc_widths{512, 256};
  std::vector<int> trunk_widths{1024, 512, 256, 128, 64};  // shared MLP after concatenation
  int trunk_out_width = 256;                               // final shared layer, no ReLU
  bool use_tnet = true;
  bool concat_transformed_coords = false;  // concatenate TNet-transformed instead of raw coords
  double coord_scale = 0.01;               // mm⁻¹ applied after centering on the source centroid
  double stress_scale_kPa = 100.0;         // kPa per unit of raw stress-head output

  int global_width() const { return encoder_widths.back(); }
  int trunk_input_width() const { return 2 * global_width() + 3; }
};

// Trainable state: named parameter matrices in a fixed order. Affine
// weights are stored fan_in × fan_out, biases 1 × fan_out.
struct RegModel {
  ArchConfig arch;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> params;

  Eigen::MatrixXd& param(const std::string& name);
  const Eigen::MatrixXd& param(const std::string& name) const;
  std::size_t parameter_count() const;
};

// Deterministic seeded initialisation: uniform ±√(1/fan_in) everywhere
// except the TNet output layer (zero weights, identity-flattening bias) and
// the displacement / stress heads (zeroed, so a fresh model warps nothing).
RegModel init_model(std::uint64_t seed, ArchConfig arch = {});

inline constexpr int kCheckpointVersion = 1;
void save_checkpoint(const RegModel& model, const std::filesystem::path& path);
RegModel load_checkpoint(const std::filesystem::path& path);

// Per-point spatial derivatives in physical units (mm, kPa):
// disp_grad[i](r, c) = ∂d_r/∂p_c, stress_grad[i](v, c) = ∂σ_v/∂p_c.
struct SpatialGradients {
  std::vector<Eigen::Matrix3d> disp_grad;
  std::vector<Eigen::Matrix<double, 6, 3>> stress_grad;
};

struct HeadOutput {
  geom::Points displacements;                   // N_s×3, mm
  Eigen::Matrix<double, Eigen::Dynamic, 6> stresses;  // N_s×6 Voigt, kPa
  std::optional<SpatialGradients> gradients;
};

// Handles into the taped forward pass, for loss assembly and backward.
struct ForwardNodes {
  ad::NodeId displacements = -1;            // B×3, mm
  ad::NodeId stresses = -1;                 // B×6, kPa
  ad::NodeId warped = -1;                   // B×3, mm
  std::array<ad::NodeId, 3> disp_jac{-1, -1, -1};    // ∂d/∂(x,y,z), per tangent
  std::array<ad::NodeId, 3> stress_jac{-1, -1, -1};  // ∂σ/∂(x,y,z), per tangent
  bool has_jacobians = false;
};

struct ForwardOptions {
  bool want_gradients = true;
  // Points the per-point trunk is evaluated at; defaults to the source
  // cloud. Global features always come from the full source/target clouds.
  std::optional<geom::Points> query_points;
};

// Builds the full registration network on the tape: TNet, shared encoder on
// both clouds, max-pooled global features, per-point trunk and both heads.
ForwardNodes forward(ad::Tape& tape, const RegModel& model, const geom::Points& source,
                     const geom::Points& target, const ForwardOptions& opts = {});

// Plain-value wrappers over a scratch tape.
HeadOutput predict(const RegModel& model, const geom::Points& source, const geom::Points& target,
                   bool want_gradients = true);

// Standalone encoder ops. Coordinates are shifted by `center` and scaled by
// arch.coord_scale; forward() uses the source centroid as the center, the
// default here keeps the caller's frame so pooling semantics (permutation
// and duplication invariance) hold exactly.
Eigen::Matrix4d tnet4(const RegModel& model, const geom::Points& points,
                      const geom::Vec3& center = geom::Vec3::Zero());
Eigen::VectorXd encode(const RegModel& model, const geom::Points& points,
                       const geom::Vec3& center = geom::Vec3::Zero());

// Displacements evaluated at arbitrary query points (global features frozen
// from the given clouds); used for landmark warping.
geom::Points displacements_at(const RegModel& model, const geom::Points& source,
                              const geom::Points& target, const geom::Points& queries);

}  // namespace elastoreg::net
