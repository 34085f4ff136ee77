#include "elastoreg/network.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <map>

#include "elastoreg/jsoncfg.hpp"
#include "elastoreg/rng.hpp"
#include "elastoreg/textio.hpp"

namespace elastoreg::net {

using ad::NodeId;
using ad::Tape;
using Eigen::MatrixXd;

Eigen::MatrixXd& RegModel::param(const std::string& name) {
  for (auto& [n, m] : params) {
    if (n == name) return m;
  }
  throw structural_error("unknown parameter slot: " + name);
}

const Eigen::MatrixXd& RegModel::param(const std::string& name) const {
  for (const auto& [n, m] : params) {
    if (n == name) return m;
  }
  throw structural_error("unknown parameter slot: " + name);
}

std::size_t RegModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : params) n += static_cast<std::size_t>(m.size());
  return n;
}

namespace {

enum class InitKind { Uniform, Zero, TnetIdentity };

void add_affine(RegModel& model, Rng& rng, const std::string& name, int fan_in, int fan_out,
                InitKind kind) {
  MatrixXd w(fan_in, fan_out);
  MatrixXd b(1, fan_out);
  switch (kind) {
    case InitKind::Uniform: {
      const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
      }
      for (Eigen::Index j = 0; j < b.cols(); ++j) b(0, j) = rng.uniform(-bound, bound);
      break;
    }
    case InitKind::Zero:
      w.setZero();
      b.setZero();
      break;
    case InitKind::TnetIdentity: {
      // zero weights plus the row-major flattening of the 4×4 identity, so a
      // fresh model emits the exact identity transform
      w.setZero();
      b.setZero();
      for (int d = 0; d < 4; ++d) b(0, 4 * d + d) = 1.0;
      break;
    }
  }
  model.params.emplace_back(name + ".W", std::move(w));
  model.params.emplace_back(name + ".b", std::move(b));
}

struct LayerStack {
  std::vector<std::string> names;  // affine prefixes, in order
};

}  // namespace

RegModel init_model(std::uint64_t seed, ArchConfig arch) {
  if (arch.encoder_widths.empty() || arch.trunk_widths.empty()) {
    throw config_error("architecture needs at least one encoder and one trunk layer");
  }
  RegModel model;
  model.arch = arch;
  model.seed = seed;
  Rng rng(seed);

  if (arch.use_tnet) {
    int width = 3;
    for (std::size_t i = 0; i < arch.tnet_mlp_widths.size(); ++i) {
      add_affine(model, rng, "tnet.mlp" + std::to_string(i), width, arch.tnet_mlp_widths[i],
                 InitKind::Uniform);
      width = arch.tnet_mlp_widths[i];
    }
    for (std::size_t i = 0; i < arch.tnet_fc_widths.size(); ++i) {
      add_affine(model, rng, "tnet.fc" + std::to_string(i), width, arch.tnet_fc_widths[i],
                 InitKind::Uniform);
      width = arch.tnet_fc_widths[i];
    }
    add_affine(model, rng, "tnet.out", width, 16, InitKind::TnetIdentity);
  }

  int width = 3;
  for (std::size_t i = 0; i < arch.encoder_widths.size(); ++i) {
    add_affine(model, rng, "enc" + std::to_string(i), width, arch.encoder_widths[i],
               InitKind::Uniform);
    width = arch.encoder_widths[i];
  }

  width = arch.trunk_input_width();
  for (std::size_t i = 0; i < arch.trunk_widths.size(); ++i) {
    add_affine(model, rng, "trunk" + std::to_string(i), width, arch.trunk_widths[i],
               InitKind::Uniform);
    width = arch.trunk_widths[i];
  }
  add_affine(model, rng, "trunk_out", width, arch.trunk_out_width, InitKind::Uniform);

  add_affine(model, rng, "head.disp", arch.trunk_out_width, 3, InitKind::Zero);
  for (int i = 0; i < 6; ++i) {
    add_affine(model, rng, "head.stress" + std::to_string(i), arch.trunk_out_width, 1,
               InitKind::Zero);
  }
  return model;
}

namespace {

// Per-forward bookkeeping: parameter leaves on the tape, created lazily in
// model order so gradient slots line up with the model.
struct TapedParams {
  Tape& tape;
  const RegModel& model;
  std::map<std::string, NodeId> leaves;

  NodeId operator()(const std::string& name) {
    auto it = leaves.find(name);
    if (it != leaves.end()) return it->second;
    const NodeId id = tape.parameter(name, model.param(name));
    leaves.emplace(name, id);
    return id;
  }
  ad::AffineLayer affine(const std::string& prefix) {
    return {(*this)(prefix + ".W"), (*this)(prefix + ".b")};
  }
};

NodeId value_affine(Tape& t, const ad::AffineLayer& l, NodeId x) {
  return t.add_rowvec(t.matmul(x, l.weight), l.bias);
}

// TNet 4×4: shared per-point MLP, max pool, FC stack, 16-wide output
// reshaped row-major. Returns the 4×4 matrix node.
NodeId tnet_matrix(Tape& t, TapedParams& p, NodeId coords) {
  const auto& arch = p.model.arch;
  NodeId h = coords;
  for (std::size_t i = 0; i < arch.tnet_mlp_widths.size(); ++i) {
    h = t.relu(value_affine(t, p.affine("tnet.mlp" + std::to_string(i)), h));
  }
  h = t.colmax(h);
  for (std::size_t i = 0; i < arch.tnet_fc_widths.size(); ++i) {
    h = t.relu(value_affine(t, p.affine("tnet.fc" + std::to_string(i)), h));
  }
  return t.reshape_rowmajor(value_affine(t, p.affine("tnet.out"), h), 4, 4);
}

// Applies the affine part of a 4×4 homogeneous matrix to B×3 row-points.
NodeId apply_tnet(Tape& t, NodeId m4, NodeId coords) {
  const NodeId a_t = t.transpose(t.block(m4, 0, 0, 3, 3));
  const NodeId trans_row = t.transpose(t.block(m4, 0, 3, 3, 1));
  return t.add_rowvec(t.matmul(coords, a_t), trans_row);
}

// Shared per-point MLP followed by coordinate-wise max pooling → 1×G.
NodeId encode_pooled(Tape& t, TapedParams& p, NodeId coords) {
  NodeId h = coords;
  for (std::size_t i = 0; i < p.model.arch.encoder_widths.size(); ++i) {
    h = t.relu(value_affine(t, p.affine("enc" + std::to_string(i)), h));
  }
  return t.colmax(h);
}

}  // namespace

ForwardNodes forward(Tape& tape, const RegModel& model, const geom::Points& source,
                     const geom::Points& target, const ForwardOptions& opts) {
  if (source.rows() == 0 || target.rows() == 0) {
    throw argument_error("forward: empty point cloud");
  }
  const auto& arch = model.arch;
  const double s = arch.coord_scale;
  TapedParams params{tape, model};

  const geom::Vec3 center = geom::centroid(source);
  auto normalized = [&](const geom::Points& pts) {
    geom::Points n = pts;
    n.rowwise() -= center.transpose();
    return ad::Matrix(n * s);
  };

  const NodeId xs = tape.constant(normalized(source));
  const NodeId xt = tape.constant(normalized(target));

  NodeId m_src = -1;
  NodeId xs_feat = xs;
  NodeId xt_feat = xt;
  if (arch.use_tnet) {
    m_src = tnet_matrix(tape, params, xs);
    xs_feat = apply_tnet(tape, m_src, xs);
    xt_feat = apply_tnet(tape, tnet_matrix(tape, params, xt), xt);
  }

  const NodeId pooled = tape.hconcat(encode_pooled(tape, params, xs_feat),
                                     encode_pooled(tape, params, xt_feat));

  const geom::Points& queries = opts.query_points ? *opts.query_points : source;
  const auto bq = queries.rows();
  const NodeId q_norm = tape.constant(normalized(queries));
  const NodeId q_raw = tape.constant(queries);

  NodeId q_feat = q_norm;
  if (arch.concat_transformed_coords && arch.use_tnet) {
    q_feat = apply_tnet(tape, m_src, q_norm);
  }
  const NodeId repeated = tape.repeat_row(pooled, static_cast<int>(bq));
  const NodeId trunk_in = tape.hconcat(repeated, q_feat);

  // Pooled features are constants with respect to one point's coordinates;
  // only the concatenated per-point coordinate channel carries tangents.
  ad::DualBatch h;
  const bool wg = opts.want_gradients;
  if (wg) {
    std::array<NodeId, 3> jac;
    const int gw = 2 * arch.global_width();
    for (int k = 0; k < 3; ++k) {
      ad::Matrix jk = ad::Matrix::Zero(bq, gw + 3);
      if (arch.concat_transformed_coords && arch.use_tnet) {
        // ∂(A·p_n)_i/∂p_k = s·A(i, k); copy the matrix value since pushing
        // the constants below reallocates tape storage
        const Eigen::Matrix4d m4 = tape.value(m_src);
        for (int i = 0; i < 3; ++i) jk.col(gw + i).setConstant(s * m4(i, k));
      } else {
        jk.col(gw + k).setConstant(s);
      }
      jac[static_cast<std::size_t>(k)] = tape.constant(std::move(jk));
    }
    h = dual_input(tape, trunk_in, jac);
  } else {
    h.values = trunk_in;
  }

  auto affine_step = [&](const std::string& prefix) {
    const auto layer = params.affine(prefix);
    if (wg) {
      h = forward_with_jacobian(tape, layer, h);
    } else {
      h.values = value_affine(tape, layer, h.values);
    }
  };
  auto relu_step = [&] {
    if (wg) {
      h = forward_with_jacobian(tape, ad::ReluLayer{}, h);
    } else {
      h.values = tape.relu(h.values);
    }
  };

  for (std::size_t i = 0; i < arch.trunk_widths.size(); ++i) {
    affine_step("trunk" + std::to_string(i));
    relu_step();
  }
  affine_step("trunk_out");  // no ReLU on the last shared layer

  const ad::DualBatch trunk_feat = h;

  // Displacement branch: rescale from normalized units back to mm. The
  // spatial Jacobian picks up the same 1/s factor, so strains stay
  // dimensionless in physical coordinates.
  ad::DualBatch disp = trunk_feat;
  {
    const auto layer = params.affine("head.disp");
    if (wg) {
      disp = forward_with_jacobian(tape, layer, disp);
      disp = dual_scale(tape, disp, 1.0 / s);
    } else {
      disp.values = tape.scale(value_affine(tape, layer, disp.values), 1.0 / s);
    }
  }

  // Six independent stress branches, concatenated in Voigt order.
  ad::DualBatch stress;
  for (int i = 0; i < 6; ++i) {
    const auto layer = params.affine("head.stress" + std::to_string(i));
    if (wg) {
      ad::DualBatch si = forward_with_jacobian(tape, layer, trunk_feat);
      stress = (i == 0) ? si : dual_hconcat(tape, stress, si);
    } else {
      const NodeId si = value_affine(tape, layer, trunk_feat.values);
      stress.values = (i == 0) ? si : tape.hconcat(stress.values, si);
    }
  }
  if (wg) {
    stress = dual_scale(tape, stress, arch.stress_scale_kPa);
  } else {
    stress.values = tape.scale(stress.values, arch.stress_scale_kPa);
  }

  ForwardNodes out;
  out.displacements = disp.values;
  out.stresses = stress.values;
  out.warped = tape.add(q_raw, disp.values);
  out.has_jacobians = wg;
  if (wg) {
    out.disp_jac = disp.jac;
    out.stress_jac = stress.jac;
  }
  return out;
}

HeadOutput predict(const RegModel& model, const geom::Points& source, const geom::Points& target,
                   bool want_gradients) {
  Tape tape;
  const ForwardNodes nodes = forward(tape, model, source, target, {.want_gradients = want_gradients});
  HeadOutput out;
  out.displacements = tape.value(nodes.displacements);
  out.stresses = tape.value(nodes.stresses);
  if (want_gradients) {
    SpatialGradients g;
    const auto n = source.rows();
    g.disp_grad.resize(static_cast<std::size_t>(n));
    g.stress_grad.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < 3; ++k) {
      const auto& jd = tape.value(nodes.disp_jac[static_cast<std::size_t>(k)]);
      const auto& js = tape.value(nodes.stress_jac[static_cast<std::size_t>(k)]);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int r = 0; r < 3; ++r) g.disp_grad[static_cast<std::size_t>(i)](r, k) = jd(i, r);
        for (int v = 0; v < 6; ++v) g.stress_grad[static_cast<std::size_t>(i)](v, k) = js(i, v);
      }
    }
    out.gradients = std::move(g);
  }
  return out;
}

Eigen::Matrix4d tnet4(const RegModel& model, const geom::Points& points, const geom::Vec3& center) {
  if (points.rows() == 0) throw argument_error("tnet4: empty cloud");
  if (!model.arch.use_tnet) throw structural_error("model built without a TNet");
  Tape tape;
  TapedParams params{tape, model};
  geom::Points n = points;
  n.rowwise() -= center.transpose();
  const NodeId coords = tape.constant(ad::Matrix(n * model.arch.coord_scale));
  return tape.value(tnet_matrix(tape, params, coords));
}

Eigen::VectorXd encode(const RegModel& model, const geom::Points& points, const geom::Vec3& center) {
  if (points.rows() == 0) throw argument_error("encode: empty cloud");
  Tape tape;
  TapedParams params{tape, model};
  geom::Points n = points;
  n.rowwise() -= center.transpose();
  NodeId coords = tape.constant(ad::Matrix(n * model.arch.coord_scale));
  if (model.arch.use_tnet) {
    coords = apply_tnet(tape, tnet_matrix(tape, params, coords), coords);
  }
  return tape.value(encode_pooled(tape, params, coords)).row(0).transpose();
}

geom::Points displacements_at(const RegModel& model, const geom::Points& source,
                              const geom::Points& target, const geom::Points& queries) {
  Tape tape;
  ForwardOptions opts;
  opts.want_gradients = false;
  opts.query_points = queries;
  const ForwardNodes nodes = forward(tape, model, source, target, opts);
  return tape.value(nodes.displacements);
}

void save_checkpoint(const RegModel& model, const std::filesystem::path& path) {
  std::string out = "{\n";
  out += "  \"format_version\": " + std::to_string(kCheckpointVersion) + ",\n";
  out += "  \"seed\": " + std::to_string(model.seed) + ",\n";
  out += "  \"arch\": " + jsoncfg::to_json(model.arch).dump() + ",\n";
  out += "  \"params\": [\n";
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    const auto& [name, m] = model.params[p];
    out += "    {\"name\": \"" + name + "\", \"rows\": " + std::to_string(m.rows()) +
           ", \"cols\": " + std::to_string(m.cols()) + ", \"data\": [";
    bool first = true;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (!first) out += ",";
        out += textio::format_double(m(i, j));
        first = false;
      }
    }
    out += "]}";
    out += (p + 1 < model.params.size()) ? ",\n" : "\n";
  }
  out += "  ]\n}\n";
  textio::write_text_file(path, out);
}

RegModel load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(textio::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw config_error("cannot parse checkpoint " + path.string() + ": " + e.what());
  }
  if (!doc.contains("format_version")) {
    throw version_error("checkpoint missing format_version: " + path.string());
  }
  if (doc["format_version"].get<int>() != kCheckpointVersion) {
    throw version_error("unsupported checkpoint version " + doc["format_version"].dump() +
                        " in " + path.string());
  }
  RegModel model;
  try {
    model.seed = doc["seed"].get<std::uint64_t>();
    model.arch = jsoncfg::arch_from_json(doc["arch"]);
    for (const auto& p : doc["params"]) {
      const auto rows = p["rows"].get<Eigen::Index>();
      const auto cols = p["cols"].get<Eigen::Index>();
      const auto& data = p["data"];
      if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw config_error("checkpoint parameter '" + p["name"].get<std::string>() +
                           "' has wrong element count");
      }
      MatrixXd m(rows, cols);
      Eigen::Index k = 0;
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data[static_cast<std::size_t>(k++)].get<double>();
      }
      model.params.emplace_back(p["name"].get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace elastoreg::net
