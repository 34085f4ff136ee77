#include "elastoreg/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <thread>

#include "elastoreg/rng.hpp"

namespace elastoreg::engine {

using ad::NodeId;
using ad::Tape;
using geom::Points;

int max_worker_threads() {
  if (const char* env = std::getenv("ELASTOREG_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

std::vector<int> all_indices(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::vector<int> chamfer_indices(const geom::PointSet& ps, ChamferSubset subset) {
  if (subset == ChamferSubset::All) return all_indices(ps.size());
  auto idx = ps.indices_where(geom::Region::Surface);
  if (idx.empty()) throw argument_error("chamfer surface subset is empty");
  return idx;
}

struct TapedLoss {
  NodeId l_r = -1, l_s = -1, l_c = -1, l_e = -1, total = -1;
  LossBreakdown breakdown(const Tape& t, const TrainConfig& cfg) const {
    LossBreakdown b;
    b.weight_w = cfg.weight_w;
    b.l_r = t.scalar_value(l_r);
    if (l_s >= 0) {
      b.l_s = t.scalar_value(l_s);
      b.l_c = t.scalar_value(l_c);
      b.l_e = t.scalar_value(l_e);
    }
    b.total = t.scalar_value(total);
    return b;
  }
};

// Chamfer loss on the tape. Nearest-neighbour assignments are recomputed
// from the current warped values and treated as fixed for the step's
// gradient (the standard subgradient through the min).
NodeId taped_chamfer(Tape& t, NodeId warped, const Points& target,
                     const std::vector<int>& sub_s, const std::vector<int>& sub_t) {
  const ad::Matrix& w = t.value(warped);
  Points ws(static_cast<Eigen::Index>(sub_s.size()), 3);
  for (std::size_t i = 0; i < sub_s.size(); ++i) ws.row(static_cast<Eigen::Index>(i)) = w.row(sub_s[i]);
  Points ts(static_cast<Eigen::Index>(sub_t.size()), 3);
  for (std::size_t i = 0; i < sub_t.size(); ++i) ts.row(static_cast<Eigen::Index>(i)) = target.row(sub_t[i]);

  // target → nearest warped
  const auto nn_tw = geom::nearest_indices(ts, ws);
  std::vector<int> rows_tw(sub_t.size());
  for (std::size_t i = 0; i < sub_t.size(); ++i) rows_tw[i] = sub_s[static_cast<std::size_t>(nn_tw[i])];
  const NodeId d1 = t.sub(t.gather_rows(warped, rows_tw), t.constant(ts));
  const NodeId term_t = t.scale(t.sum(t.mul(d1, d1)), 1.0 / static_cast<double>(sub_t.size()));

  // warped → nearest target
  const auto nn_wt = geom::nearest_indices(ws, ts);
  Points ts_matched(static_cast<Eigen::Index>(sub_s.size()), 3);
  for (std::size_t i = 0; i < sub_s.size(); ++i) {
    ts_matched.row(static_cast<Eigen::Index>(i)) = ts.row(nn_wt[i]);
  }
  const NodeId d2 = t.sub(t.gather_rows(warped, sub_s), t.constant(ts_matched));
  const NodeId term_s = t.scale(t.sum(t.mul(d2, d2)), 1.0 / static_cast<double>(sub_s.size()));

  return t.add(term_t, term_s);
}

NodeId col_of(Tape& t, NodeId m, int c) {
  return t.block(m, 0, c, static_cast<int>(t.value(m).rows()), 1);
}

NodeId weighted(Tape& t, NodeId x, double w) { return w == 1.0 ? x : t.scale(x, w); }

// The three PDE residual sums of the loss, assembled column-wise over all
// source points from the head Jacobians.
struct PdeNodes {
  NodeId l_s, l_c, l_e;
};

PdeNodes taped_pde_terms(Tape& t, const net::ForwardNodes& fwd,
                         const elast::MaterialField& material) {
  if (!fwd.has_jacobians) {
    throw structural_error("PDE terms requested but the forward pass carries no Jacobians");
  }
  const NodeId jxd = fwd.disp_jac[0], jyd = fwd.disp_jac[1], jzd = fwd.disp_jac[2];
  const NodeId jxs = fwd.stress_jac[0], jys = fwd.stress_jac[1], jzs = fwd.stress_jac[2];
  const auto b = t.value(fwd.displacements).rows();
  if (material.lame_lambda.size() != b) {
    throw argument_error("material field not aligned with the source points");
  }

  // strain components from the displacement Jacobians (Voigt order)
  const NodeId exx = col_of(t, jxd, 0);
  const NodeId eyy = col_of(t, jyd, 1);
  const NodeId ezz = col_of(t, jzd, 2);
  const NodeId exy = t.scale(t.add(col_of(t, jyd, 0), col_of(t, jxd, 1)), 0.5);
  const NodeId exz = t.scale(t.add(col_of(t, jzd, 0), col_of(t, jxd, 2)), 0.5);
  const NodeId eyz = t.scale(t.add(col_of(t, jzd, 1), col_of(t, jyd, 2)), 0.5);

  std::array<NodeId, 6> sig;
  for (int i = 0; i < 6; ++i) sig[static_cast<std::size_t>(i)] = col_of(t, fwd.stresses, i);

  const NodeId lam = t.constant(material.lame_lambda);
  const NodeId mu = t.constant(material.lame_mu);
  const NodeId lam2mu = t.constant(ad::Matrix(material.lame_lambda + 2.0 * material.lame_mu));

  // static equilibrium: divergence components with σ_yx = σ_xy etc.
  const NodeId div_x = t.add(t.add(col_of(t, jxs, 0), col_of(t, jys, 3)), col_of(t, jzs, 4));
  const NodeId div_y = t.add(t.add(col_of(t, jxs, 3), col_of(t, jys, 1)), col_of(t, jzs, 5));
  const NodeId div_z = t.add(t.add(col_of(t, jxs, 4), col_of(t, jys, 5)), col_of(t, jzs, 2));
  const NodeId f1 = t.add(t.add(t.abs(div_x), t.abs(div_y)), t.abs(div_z));

  // constitutive residuals against the stress head
  const NodeId r_xx = t.sub(t.add(t.mul(lam2mu, exx), t.mul(lam, t.add(eyy, ezz))), sig[0]);
  const NodeId r_yy = t.sub(t.add(t.mul(lam2mu, eyy), t.mul(lam, t.add(exx, ezz))), sig[1]);
  const NodeId r_zz = t.sub(t.add(t.mul(lam2mu, ezz), t.mul(lam, t.add(exx, eyy))), sig[2]);
  const NodeId r_xy = t.sub(t.scale(t.mul(mu, exy), 2.0), sig[3]);
  const NodeId r_xz = t.sub(t.scale(t.mul(mu, exz), 2.0), sig[4]);
  const NodeId r_yz = t.sub(t.scale(t.mul(mu, eyz), 2.0), sig[5]);
  const NodeId f2 = t.add(
      t.add(t.add(t.add(t.add(t.abs(r_xx), t.abs(r_yy)), t.abs(r_zz)), t.abs(r_xy)), t.abs(r_xz)),
      t.abs(r_yz));

  // elastic energy density magnitude
  const NodeId e_diag =
      t.add(t.add(t.mul(exx, sig[0]), t.mul(eyy, sig[1])), t.mul(ezz, sig[2]));
  const NodeId e_shear =
      t.add(t.add(t.mul(exy, sig[3]), t.mul(exz, sig[4])), t.mul(eyz, sig[5]));
  const NodeId f3 = t.scale(t.add(e_diag, t.scale(e_shear, 2.0)), 0.5);

  return {t.sum(f1), t.sum(f2), t.sum(t.abs(f3))};
}

TapedLoss taped_loss(Tape& t, const net::ForwardNodes& fwd, const geom::PointSet& source,
                     const geom::PointSet& target, const elast::MaterialField& material,
                     const TrainConfig& cfg) {
  TapedLoss out;
  if (cfg.supervised_truth) {
    if (cfg.supervised_truth->rows() != source.points.rows()) {
      throw argument_error("supervised truth cardinality mismatch");
    }
    const NodeId diff = t.sub(fwd.displacements, t.constant(*cfg.supervised_truth));
    out.l_r = t.sum(t.mul(diff, diff));
  } else {
    out.l_r = taped_chamfer(t, fwd.warped, target.points,
                            chamfer_indices(source, cfg.chamfer_subset),
                            chamfer_indices(target, cfg.chamfer_subset));
  }
  const NodeId wlr = weighted(t, out.l_r, cfg.weight_w);
  if (cfg.use_pde_terms) {
    const PdeNodes pde = taped_pde_terms(t, fwd, material);
    out.l_s = weighted(t, pde.l_s, cfg.pde_term_weights[0]);
    out.l_c = weighted(t, pde.l_c, cfg.pde_term_weights[1]);
    out.l_e = weighted(t, pde.l_e, cfg.pde_term_weights[2]);
    out.total = t.add(t.add(t.add(wlr, out.l_s), out.l_c), out.l_e);
  } else {
    out.total = wlr;
  }
  return out;
}

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, const net::RegModel& model) : cfg_(cfg) {
    for (const auto& [name, m] : model.params) {
      m1_.emplace_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
      m2_.emplace_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
    }
  }

  void step(net::RegModel& model, const std::vector<std::pair<std::string, ad::Matrix>>& grads) {
    ++t_;
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      auto& [name, theta] = model.params[i];
      const ad::Matrix* g = nullptr;
      for (const auto& [gname, gm] : grads) {
        if (gname == name) {
          g = &gm;
          break;
        }
      }
      const ad::Matrix zero = ad::Matrix::Zero(theta.rows(), theta.cols());
      const ad::Matrix& grad = g ? *g : zero;
      if (cfg_.kind == "adam") {
        m1_[i] = cfg_.beta1 * m1_[i] + (1.0 - cfg_.beta1) * grad;
        m2_[i] = cfg_.beta2 * m2_[i] + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
        theta -= (cfg_.step_size * (m1_[i] / c1).array() /
                  ((m2_[i] / c2).array().sqrt() + cfg_.eps))
                     .matrix();
      } else {  // sgd with momentum beta1
        m1_[i] = cfg_.beta1 * m1_[i] + grad;
        theta -= cfg_.step_size * m1_[i];
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<Eigen::MatrixXd> m1_, m2_;
  double t_ = 0.0;
};

[[noreturn]] void abort_non_finite(int step, const LossBreakdown& b) {
  std::ostringstream os;
  os << "non-finite loss at step " << step << ": l_r=" << b.l_r << " l_s=" << b.l_s
     << " l_c=" << b.l_c << " l_e=" << b.l_e << " total=" << b.total;
  throw numeric_error(os.str());
}

struct StepOutcome {
  LossBreakdown loss;
  std::vector<std::pair<std::string, ad::Matrix>> grads;
};

StepOutcome evaluate_step(const net::RegModel& model, const geom::PointSet& source,
                          const geom::PointSet& target, const elast::MaterialField& material,
                          const TrainConfig& cfg) {
  Tape tape;
  const net::ForwardNodes fwd = net::forward(tape, model, source.points, target.points,
                                             {.want_gradients = cfg.use_pde_terms});
  const TapedLoss tl = taped_loss(tape, fwd, source, target, material, cfg);
  StepOutcome out;
  out.loss = tl.breakdown(tape, cfg);
  if (!std::isfinite(out.loss.total)) abort_non_finite(-1, out.loss);
  tape.backward(tl.total);
  out.grads = tape.parameter_gradients();
  return out;
}

Metrics compute_metrics(const geom::PointSet& source, const Points& warped,
                        const geom::PointSet& target, const net::RegModel* model,
                        const EvalData& eval) {
  Metrics m;
  m.cd = geom::chamfer_distance(warped, target.points);
  m.cd_pre = geom::chamfer_distance(source.points, target.points);

  const auto src_surf = source.indices_where(geom::Region::Surface);
  const auto tgt_surf = target.indices_where(geom::Region::Surface);
  if (!src_surf.empty() && !tgt_surf.empty()) {
    Points ws(static_cast<Eigen::Index>(src_surf.size()), 3);
    for (std::size_t i = 0; i < src_surf.size(); ++i) {
      ws.row(static_cast<Eigen::Index>(i)) = warped.row(src_surf[i]);
    }
    m.cd_surface = geom::chamfer_distance(ws, target.rows(tgt_surf));
  }

  m.dm_all = geom::deformation_magnitude(source.points, warped);
  auto dm_of = [&](geom::Compartment c) -> std::optional<double> {
    auto idx = source.indices_where(geom::Region::Internal, c);
    if (idx.empty()) idx = source.indices_where(std::nullopt, c);
    if (idx.empty()) return std::nullopt;
    return geom::deformation_magnitude(source.points, warped, idx);
  };
  m.dm_rigid = dm_of(geom::Compartment::Rigid);
  m.dm_soft = dm_of(geom::Compartment::Soft);
  if (m.dm_rigid && m.dm_soft && *m.dm_soft > 0.0) {
    m.dm_ratio = *m.dm_rigid / *m.dm_soft;
  }

  if (!eval.landmarks.empty() && model) {
    // one stacked query pass per landmark set
    Eigen::Index total = 0;
    for (const auto& lm : eval.landmarks) total += lm.source_cluster.rows();
    Points queries(total, 3);
    Eigen::Index at = 0;
    for (const auto& lm : eval.landmarks) {
      queries.middleRows(at, lm.source_cluster.rows()) = lm.source_cluster;
      at += lm.source_cluster.rows();
    }
    const Points disp = net::displacements_at(*model, source.points, target.points, queries);
    double sum = 0.0;
    at = 0;
    for (const auto& lm : eval.landmarks) {
      const auto n = lm.source_cluster.rows();
      const Points warped_cluster = lm.source_cluster + disp.middleRows(at, n);
      sum += (geom::centroid(warped_cluster) - geom::centroid(lm.target_cluster)).norm();
      at += n;
    }
    m.tre = sum / static_cast<double>(eval.landmarks.size());
  }

  if (eval.truth_displacements) {
    m.rmse = geom::rmse(warped - source.points, *eval.truth_displacements);
  }
  return m;
}

net::HeadOutput zero_output(const geom::PointSet& source, bool with_gradients) {
  net::HeadOutput out;
  out.displacements = Points::Zero(source.points.rows(), 3);
  out.stresses = Eigen::Matrix<double, Eigen::Dynamic, 6>::Zero(source.points.rows(), 6);
  if (with_gradients) {
    net::SpatialGradients g;
    g.disp_grad.assign(static_cast<std::size_t>(source.size()), Eigen::Matrix3d::Zero());
    g.stress_grad.assign(static_cast<std::size_t>(source.size()),
                         Eigen::Matrix<double, 6, 3>::Zero());
    out.gradients = std::move(g);
  }
  return out;
}

RegistrationResult finalize_result(const net::RegModel& model, const geom::PointSet& source,
                                   const geom::PointSet& target, const TrainConfig& cfg,
                                   const EvalData& eval, std::vector<LossBreakdown> history) {
  const net::HeadOutput out = net::predict(model, source.points, target.points, cfg.use_pde_terms);
  const elast::MaterialField material = elast::MaterialField::from_compartments(source, cfg.material);

  RegistrationResult res;
  res.displacement = out.displacements;
  res.warped = source;
  res.warped.points = source.points + out.displacements;
  res.history = std::move(history);
  res.final_loss = assemble_loss(out, source, target, material, cfg);
  res.identity_loss = assemble_loss(zero_output(source, cfg.use_pde_terms), source, target,
                                    material, cfg);
  res.metrics = compute_metrics(source, res.warped.points, target, &model, eval);
  return res;
}

}  // namespace

LossAndGradients loss_gradients(const net::RegModel& model, const geom::PointSet& source,
                                const geom::PointSet& target, const TrainConfig& config) {
  const elast::MaterialField material =
      elast::MaterialField::from_compartments(source, config.material);
  StepOutcome outcome = evaluate_step(model, source, target, material, config);
  return {outcome.loss, std::move(outcome.grads)};
}

double supervised_loss(const net::HeadOutput& output, const geom::Points& ground_truth) {
  if (output.displacements.rows() != ground_truth.rows()) {
    throw argument_error("supervised_loss: cardinality mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < ground_truth.rows(); ++i) {
    sum += (output.displacements.row(i) - ground_truth.row(i)).squaredNorm();
  }
  return sum;
}

LossBreakdown assemble_loss(const net::HeadOutput& output, const geom::PointSet& source,
                            const geom::PointSet& target, const elast::MaterialField& material,
                            const TrainConfig& cfg) {
  if (output.displacements.rows() != source.points.rows()) {
    throw argument_error("head output not aligned with the source points");
  }
  LossBreakdown b;
  b.weight_w = cfg.weight_w;

  if (cfg.supervised_truth) {
    b.l_r = supervised_loss(output, *cfg.supervised_truth);
  } else {
    const Points warped = source.points + output.displacements;
    const auto sub_s = chamfer_indices(source, cfg.chamfer_subset);
    const auto sub_t = chamfer_indices(target, cfg.chamfer_subset);
    Points ws(static_cast<Eigen::Index>(sub_s.size()), 3);
    for (std::size_t i = 0; i < sub_s.size(); ++i) ws.row(static_cast<Eigen::Index>(i)) = warped.row(sub_s[i]);
    b.l_r = geom::chamfer_loss(ws, target.rows(sub_t));
  }

  if (cfg.use_pde_terms) {
    if (!output.gradients) {
      throw structural_error("PDE loss terms requested but spatial gradients are missing");
    }
    double ls = 0.0, lc = 0.0, le = 0.0;
    for (int i = 0; i < source.size(); ++i) {
      const auto& g = *output.gradients;
      const elast::Voigt6 strain = elast::strain_from_grad(g.disp_grad[static_cast<std::size_t>(i)]);
      elast::Voigt6 stress;
      stress.kind = elast::TensorKind::Stress;
      for (int v = 0; v < 6; ++v) stress.c[static_cast<std::size_t>(v)] = output.stresses(i, v);
      const elast::LameParams mat = material.at(i);
      ls += elast::f1_equilibrium(g.stress_grad[static_cast<std::size_t>(i)]);
      lc += elast::f2_constitutive(strain, stress, mat);
      le += std::abs(elast::f3_energy(strain, stress));
    }
    b.l_s = cfg.pde_term_weights[0] * ls;
    b.l_c = cfg.pde_term_weights[1] * lc;
    b.l_e = cfg.pde_term_weights[2] * le;
  }

  b.total = ((cfg.weight_w * b.l_r + b.l_s) + b.l_c) + b.l_e;
  return b;
}

RegistrationResult train_single_pair(const geom::PointSet& source, const geom::PointSet& target,
                                     const TrainConfig& config, const EvalData& eval) {
  source.validate();
  target.validate();
  if (config.supervised_truth && config.supervised_truth->rows() != source.points.rows()) {
    throw argument_error("supervised truth cardinality mismatch");
  }
  const elast::MaterialField material =
      elast::MaterialField::from_compartments(source, config.material);

  net::RegModel model = net::init_model(config.seed, config.arch);
  Optimizer opt(config.optimizer, model);

  std::vector<LossBreakdown> history;
  history.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    StepOutcome outcome;
    try {
      outcome = evaluate_step(model, source, target, material, config);
    } catch (const numeric_error& e) {
      throw numeric_error("step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(outcome.loss.total)) abort_non_finite(step, outcome.loss);
    history.push_back(outcome.loss);
    opt.step(model, outcome.grads);
  }
  return finalize_result(model, source, target, config, eval, std::move(history));
}

net::RegModel train_population(std::span<const Subject> subjects, const TrainConfig& config,
                               std::vector<EpochLoss>* log) {
  if (subjects.size() < 2) {
    throw argument_error("population training needs at least 2 subjects");
  }
  for (const auto& s : subjects) {
    s.source.validate();
    s.target.validate();
  }
  std::vector<elast::MaterialField> materials;
  materials.reserve(subjects.size());
  for (const auto& s : subjects) {
    materials.push_back(elast::MaterialField::from_compartments(s.source, config.material));
  }

  net::RegModel model = net::init_model(config.seed, config.arch);
  Optimizer opt(config.optimizer, model);
  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<std::size_t> order(subjects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const int threads = max_worker_threads();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    LossBreakdown epoch_sum;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t batch_end = std::min(order.size(), at + static_cast<std::size_t>(config.batch_size));
      const std::size_t batch_n = batch_end - at;
      std::vector<StepOutcome> outcomes(batch_n);

      // independent tapes per subject; reduction below is in batch order so
      // the result does not depend on the thread count
      const int workers = std::min<int>(threads, static_cast<int>(batch_n));
      if (workers <= 1) {
        for (std::size_t i = 0; i < batch_n; ++i) {
          const auto& subj = subjects[order[at + i]];
          outcomes[i] = evaluate_step(model, subj.source, subj.target, materials[order[at + i]], config);
        }
      } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
          pool.emplace_back([&, w] {
            try {
              for (std::size_t i = static_cast<std::size_t>(w); i < batch_n;
                   i += static_cast<std::size_t>(workers)) {
                const auto& subj = subjects[order[at + i]];
                outcomes[i] =
                    evaluate_step(model, subj.source, subj.target, materials[order[at + i]], config);
              }
            } catch (...) {
              errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
          });
        }
        for (auto& th : pool) th.join();
        for (const auto& err : errors) {
          if (err) std::rethrow_exception(err);
        }
      }

      // mean gradient over the batch, reduced in batch order
      auto grads = std::move(outcomes[0].grads);
      for (std::size_t i = 1; i < batch_n; ++i) {
        for (std::size_t k = 0; k < grads.size(); ++k) {
          grads[k].second += outcomes[i].grads[k].second;
        }
      }
      const double inv = 1.0 / static_cast<double>(batch_n);
      for (auto& [name, g] : grads) g *= inv;
      opt.step(model, grads);

      for (const auto& o : outcomes) {
        epoch_sum.l_r += o.loss.l_r;
        epoch_sum.l_s += o.loss.l_s;
        epoch_sum.l_c += o.loss.l_c;
        epoch_sum.l_e += o.loss.l_e;
        epoch_sum.total += o.loss.total;
      }
    }
    if (log) {
      const double inv = 1.0 / static_cast<double>(subjects.size());
      EpochLoss el;
      el.epoch = epoch;
      el.mean = {epoch_sum.l_r * inv, epoch_sum.l_s * inv, epoch_sum.l_c * inv,
                 epoch_sum.l_e * inv, epoch_sum.total * inv, config.weight_w};
      log->push_back(el);
    }
  }
  return model;
}

LossBreakdown population_loss(const net::RegModel& model, std::span<const Subject> subjects,
                              const TrainConfig& config) {
  if (subjects.empty()) throw argument_error("population_loss: no subjects");
  LossBreakdown mean;
  mean.weight_w = config.weight_w;
  for (const auto& s : subjects) {
    const auto material = elast::MaterialField::from_compartments(s.source, config.material);
    const auto out = net::predict(model, s.source.points, s.target.points, config.use_pde_terms);
    const LossBreakdown b = assemble_loss(out, s.source, s.target, material, config);
    mean.l_r += b.l_r;
    mean.l_s += b.l_s;
    mean.l_c += b.l_c;
    mean.l_e += b.l_e;
    mean.total += b.total;
  }
  const double inv = 1.0 / static_cast<double>(subjects.size());
  mean.l_r *= inv;
  mean.l_s *= inv;
  mean.l_c *= inv;
  mean.l_e *= inv;
  mean.total *= inv;
  return mean;
}

RegistrationResult register_pair(const net::RegModel& model, const geom::PointSet& source,
                                 const geom::PointSet& target, const TrainConfig& config,
                                 const EvalData& eval) {
  source.validate();
  target.validate();
  return finalize_result(model, source, target, config, eval, {});
}

}  // namespace elastoreg::engine
