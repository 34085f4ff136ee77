#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elastoreg/elasticity.hpp"
#include "elastoreg/geometry.hpp"
#include "elastoreg/network.hpp"

namespace elastoreg::engine {

// One training step's loss terms. total = w·l_r + l_s + l_c + l_e in that
// exact association order.
struct LossBreakdown {
  double l_r = 0.0;    // mm² (Chamfer or supervised)
  double l_s = 0.0;    // kPa/mm
  double l_c = 0.0;    // kPa
  double l_e = 0.0;    // kPa
  double total = 0.0;
  double weight_w = 1.0;
};

struct OptimizerConfig {
  std::string kind = "adam";  // adam | sgd
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

enum class ChamferSubset : std::uint8_t { All, Surface };

struct TrainConfig {
  double weight_w = 1e3;
  OptimizerConfig optimizer;
  int steps = 3000;
  std::uint64_t seed = 0;
  ChamferSubset chamfer_subset = ChamferSubset::All;
  elast::MaterialConfig material;
  bool use_pde_terms = true;                    // --no-pinn sets this false
  std::array<double, 3> pde_term_weights{1.0, 1.0, 1.0};  // experimentation only
  net::ArchConfig arch;
  int epochs = 200;     // population training
  int batch_size = 1;   // subjects per population step
  std::optional<geom::Points> supervised_truth;  // replaces the Chamfer l_r
};

struct Metrics {
  double cd = 0.0;
  double cd_pre = 0.0;
  std::optional<double> cd_surface;
  double dm_all = 0.0;
  std::optional<double> dm_rigid;
  std::optional<double> dm_soft;
  std::optional<double> dm_ratio;
  std::optional<double> tre;
  std::optional<double> rmse;
};

struct RegistrationResult {
  geom::PointSet warped;        // source labels carried over
  geom::Points displacement;    // N_s×3 mm, row-aligned with the source
  std::vector<LossBreakdown> history;
  Metrics metrics;
  LossBreakdown final_loss;     // evaluated on the returned warp
  LossBreakdown identity_loss;  // evaluated at zero displacement
};

// Optional evaluation context for metrics.
struct EvalData {
  std::vector<geom::LandmarkPair> landmarks;
  std::optional<geom::Points> truth_displacements;
};

// Eq.-faithful loss terms from plain head outputs: Chamfer (or supervised)
// alignment plus the three per-point PDE residual sums.
LossBreakdown assemble_loss(const net::HeadOutput& output, const geom::PointSet& source,
                            const geom::PointSet& target, const elast::MaterialField& material,
                            const TrainConfig& config);

// Σ‖d_s − d_s^gt‖² over index-corresponding rows (mm²).
double supervised_loss(const net::HeadOutput& output, const geom::Points& ground_truth);

// One differentiable evaluation of the training objective at fixed
// parameters: the loss breakdown plus ∂total/∂θ for every parameter slot.
struct LossAndGradients {
  LossBreakdown loss;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> gradients;
};
LossAndGradients loss_gradients(const net::RegModel& model, const geom::PointSet& source,
                                const geom::PointSet& target, const TrainConfig& config);

RegistrationResult train_single_pair(const geom::PointSet& source, const geom::PointSet& target,
                                     const TrainConfig& config, const EvalData& eval = {});

struct Subject {
  geom::PointSet source;
  geom::PointSet target;
  std::string id;
};

struct EpochLoss {
  int epoch = 0;
  LossBreakdown mean;  // mean per-subject loss, Eq.-(11) objective
};

// Amortized multi-subject training: one shared model, per-epoch subject
// order shuffled by seed, mini-batch gradients reduced in subject order.
net::RegModel train_population(std::span<const Subject> subjects, const TrainConfig& config,
                               std::vector<EpochLoss>* log = nullptr);

// Mean per-subject loss at fixed parameters (the Eq.-(11) objective).
LossBreakdown population_loss(const net::RegModel& model, std::span<const Subject> subjects,
                              const TrainConfig& config);

// Forward-only registration of one pair; also evaluates the training loss
// on the pair for reporting.
RegistrationResult register_pair(const net::RegModel& model, const geom::PointSet& source,
                                 const geom::PointSet& target, const TrainConfig& config,
                                 const EvalData& eval = {});

// Worker-thread cap honoured by population training (ELASTOREG_THREADS).
int max_worker_threads();

}  // namespace elastoreg::engine
