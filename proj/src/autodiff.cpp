#include "elastoreg/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace elastoreg::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Parameter: return "parameter";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::AddRowVec: return "add_rowvec";
    case Op::Scale: return "scale";
    case Op::Relu: return "relu";
    case Op::GatePos: return "gate_pos";
    case Op::Abs: return "abs";
    case Op::ColMax: return "colmax";
    case Op::RepeatRow: return "repeat_row";
    case Op::HConcat: return "hconcat";
    case Op::Block: return "block";
    case Op::Transpose: return "transpose";
    case Op::Reshape: return "reshape";
    case Op::GatherRows: return "gather_rows";
    case Op::Sum: return "sum";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_fail(const char* what, const Matrix& a, const Matrix& b) {
  std::ostringstream os;
  os << what << ": " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x" << b.cols();
  throw structural_error(os.str());
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::check(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw structural_error("tape node id out of range");
  }
  return id;
}

void Tape::require_same_shape(NodeId a, NodeId b, const char* what) const {
  const Matrix& va = nodes_[check(a)].value;
  const Matrix& vb = nodes_[check(b)].value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_fail(what, va, vb);
}

NodeId Tape::constant(Matrix v) {
  Node n{.op = Op::Constant};
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::parameter(std::string name, Matrix v) {
  Node n{.op = Op::Parameter};
  n.value = std::move(v);
  n.param_slot = static_cast<int>(slots_.size());
  const NodeId id = push(std::move(n));
  slots_.emplace_back(std::move(name), id);
  return id;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Matrix& va = nodes_[check(a)].value;
  const Matrix& vb = nodes_[check(b)].value;
  if (va.cols() != vb.rows()) shape_fail("matmul inner dimensions", va, vb);
  Node n{.op = Op::MatMul, .a = a, .b = b};
  n.value.noalias() = va * vb;
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  require_same_shape(a, b, "add shapes");
  Node n{.op = Op::Add, .a = a, .b = b};
  n.value = nodes_[a].value + nodes_[b].value;
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  require_same_shape(a, b, "sub shapes");
  Node n{.op = Op::Sub, .a = a, .b = b};
  n.value = nodes_[a].value - nodes_[b].value;
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  require_same_shape(a, b, "mul shapes");
  Node n{.op = Op::Mul, .a = a, .b = b};
  n.value = nodes_[a].value.cwiseProduct(nodes_[b].value);
  return push(std::move(n));
}

NodeId Tape::add_rowvec(NodeId a, NodeId row) {
  const Matrix& va = nodes_[check(a)].value;
  const Matrix& vr = nodes_[check(row)].value;
  if (vr.rows() != 1 || vr.cols() != va.cols()) shape_fail("add_rowvec shapes", va, vr);
  Node n{.op = Op::AddRowVec, .a = a, .b = row};
  n.value = va.rowwise() + vr.row(0);
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) {
  Node n{.op = Op::Scale, .a = check(a)};
  n.scalar = c;
  n.value = nodes_[a].value * c;
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  Node n{.op = Op::Relu, .a = check(a)};
  n.value = nodes_[a].value.cwiseMax(0.0);
  return push(std::move(n));
}

NodeId Tape::gate_pos(NodeId a, NodeId gate_source) {
  require_same_shape(a, gate_source, "gate_pos shapes");
  Node n{.op = Op::GatePos, .a = a, .b = gate_source};
  n.value = (nodes_[gate_source].value.array() > 0.0)
                .select(nodes_[a].value, Matrix::Zero(nodes_[a].value.rows(), nodes_[a].value.cols()));
  return push(std::move(n));
}

NodeId Tape::abs(NodeId a) {
  Node n{.op = Op::Abs, .a = check(a)};
  n.value = nodes_[a].value.cwiseAbs();
  return push(std::move(n));
}

NodeId Tape::colmax(NodeId a) {
  const Matrix& va = nodes_[check(a)].value;
  if (va.rows() < 1) throw structural_error("colmax of empty matrix");
  Node n{.op = Op::ColMax, .a = a};
  n.value.resize(1, va.cols());
  n.indices.resize(static_cast<std::size_t>(va.cols()));
  for (Eigen::Index j = 0; j < va.cols(); ++j) {
    int arg = 0;
    double best = va(0, j);
    for (Eigen::Index i = 1; i < va.rows(); ++i) {
      if (va(i, j) > best) {  // strict: ties keep the lowest row index
        best = va(i, j);
        arg = static_cast<int>(i);
      }
    }
    n.value(0, j) = best;
    n.indices[static_cast<std::size_t>(j)] = arg;
  }
  return push(std::move(n));
}

NodeId Tape::repeat_row(NodeId row, int count) {
  const Matrix& vr = nodes_[check(row)].value;
  if (vr.rows() != 1) throw structural_error("repeat_row expects a 1-row matrix");
  if (count < 1) throw structural_error("repeat_row count must be >= 1");
  Node n{.op = Op::RepeatRow, .a = row};
  n.i0 = count;
  n.value = vr.replicate(count, 1);
  return push(std::move(n));
}

NodeId Tape::hconcat(NodeId a, NodeId b) {
  const Matrix& va = nodes_[check(a)].value;
  const Matrix& vb = nodes_[check(b)].value;
  if (va.rows() != vb.rows()) shape_fail("hconcat row counts", va, vb);
  Node n{.op = Op::HConcat, .a = a, .b = b};
  n.value.resize(va.rows(), va.cols() + vb.cols());
  n.value.leftCols(va.cols()) = va;
  n.value.rightCols(vb.cols()) = vb;
  return push(std::move(n));
}

NodeId Tape::block(NodeId a, int r0, int c0, int rows, int cols) {
  const Matrix& va = nodes_[check(a)].value;
  if (r0 < 0 || c0 < 0 || rows < 1 || cols < 1 || r0 + rows > va.rows() || c0 + cols > va.cols()) {
    throw structural_error("block out of range");
  }
  Node n{.op = Op::Block, .a = a};
  n.i0 = r0;
  n.i1 = c0;
  n.i2 = rows;
  n.i3 = cols;
  n.value = va.block(r0, c0, rows, cols);
  return push(std::move(n));
}

NodeId Tape::transpose(NodeId a) {
  Node n{.op = Op::Transpose, .a = check(a)};
  n.value = nodes_[a].value.transpose();
  return push(std::move(n));
}

NodeId Tape::reshape_rowmajor(NodeId a, int rows, int cols) {
  const Matrix& va = nodes_[check(a)].value;
  if (static_cast<Eigen::Index>(rows) * cols != va.size()) {
    throw structural_error("reshape element count mismatch");
  }
  Node n{.op = Op::Reshape, .a = a};
  n.i0 = rows;
  n.i1 = cols;
  n.value.resize(rows, cols);
  const Eigen::Index in_cols = va.cols();
  for (Eigen::Index k = 0; k < va.size(); ++k) {
    // row-major flat index on both sides
    n.value(k / cols, k % cols) = va(k / in_cols, k % in_cols);
  }
  return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId a, std::vector<int> rows) {
  const Matrix& va = nodes_[check(a)].value;
  if (rows.empty()) throw argument_error("gather_rows: empty index list");
  Node n{.op = Op::GatherRows, .a = a};
  n.value.resize(static_cast<Eigen::Index>(rows.size()), va.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= va.rows()) throw structural_error("gather_rows index out of range");
    n.value.row(static_cast<Eigen::Index>(i)) = va.row(rows[i]);
  }
  n.indices = std::move(rows);
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  Node n{.op = Op::Sum, .a = check(a)};
  n.value.resize(1, 1);
  n.value(0, 0) = nodes_[a].value.sum();
  return push(std::move(n));
}

double Tape::scalar_value(NodeId id) const {
  const Matrix& v = value(id);
  if (v.rows() != 1 || v.cols() != 1) throw structural_error("scalar_value on non-scalar node");
  return v(0, 0);
}

void Tape::backward(NodeId loss) {
  const Matrix& lv = nodes_[check(loss)].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw argument_error("backward: loss must be a 1x1 scalar node");
  }
  grads_.assign(nodes_.size(), Matrix());

  auto acc = [&](NodeId id, auto&& contribution) {
    Matrix& g = grads_[static_cast<std::size_t>(id)];
    if (g.size() == 0) {
      const Matrix& v = nodes_[static_cast<std::size_t>(id)].value;
      g = Matrix::Zero(v.rows(), v.cols());
    }
    g += contribution;
  };

  grads_[static_cast<std::size_t>(loss)] = Matrix::Ones(1, 1);

  for (NodeId id = loss; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const Matrix& g = grads_[static_cast<std::size_t>(id)];
    if (g.size() == 0) continue;  // not on any path to the loss
    switch (n.op) {
      case Op::Constant:
      case Op::Parameter:
        break;
      case Op::MatMul:
        acc(n.a, g * nodes_[n.b].value.transpose());
        acc(n.b, nodes_[n.a].value.transpose() * g);
        break;
      case Op::Add:
        acc(n.a, g);
        acc(n.b, g);
        break;
      case Op::Sub:
        acc(n.a, g);
        acc(n.b, -g);
        break;
      case Op::Mul:
        acc(n.a, g.cwiseProduct(nodes_[n.b].value));
        acc(n.b, g.cwiseProduct(nodes_[n.a].value));
        break;
      case Op::AddRowVec:
        acc(n.a, g);
        acc(n.b, g.colwise().sum());
        break;
      case Op::Scale:
        acc(n.a, g * n.scalar);
        break;
      case Op::Relu:
        acc(n.a, (nodes_[n.a].value.array() > 0.0).select(g, Matrix::Zero(g.rows(), g.cols())));
        break;
      case Op::GatePos:
        acc(n.a, (nodes_[n.b].value.array() > 0.0).select(g, Matrix::Zero(g.rows(), g.cols())));
        break;
      case Op::Abs:
        acc(n.a, g.cwiseProduct(nodes_[n.a].value.unaryExpr(
                     [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); })));
        break;
      case Op::ColMax: {
        Matrix ga = Matrix::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        for (Eigen::Index j = 0; j < ga.cols(); ++j) {
          ga(n.indices[static_cast<std::size_t>(j)], j) = g(0, j);
        }
        acc(n.a, ga);
        break;
      }
      case Op::RepeatRow:
        acc(n.a, g.colwise().sum());
        break;
      case Op::HConcat:
        acc(n.a, g.leftCols(nodes_[n.a].value.cols()));
        acc(n.b, g.rightCols(nodes_[n.b].value.cols()));
        break;
      case Op::Block: {
        Matrix ga = Matrix::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        ga.block(n.i0, n.i1, n.i2, n.i3) = g;
        acc(n.a, ga);
        break;
      }
      case Op::Transpose:
        acc(n.a, g.transpose());
        break;
      case Op::Reshape: {
        const Matrix& va = nodes_[n.a].value;
        Matrix ga(va.rows(), va.cols());
        const Eigen::Index in_cols = va.cols();
        for (Eigen::Index k = 0; k < va.size(); ++k) {
          ga(k / in_cols, k % in_cols) = g(k / n.i1, k % n.i1);
        }
        acc(n.a, ga);
        break;
      }
      case Op::GatherRows: {
        Matrix ga = Matrix::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        for (std::size_t i = 0; i < n.indices.size(); ++i) {
          ga.row(n.indices[i]) += g.row(static_cast<Eigen::Index>(i));
        }
        acc(n.a, ga);
        break;
      }
      case Op::Sum:
        acc(n.a, Matrix::Constant(nodes_[n.a].value.rows(), nodes_[n.a].value.cols(), g(0, 0)));
        break;
    }
  }

  bool bad = !std::isfinite(lv(0, 0));
  for (const auto& [name, id] : slots_) {
    const Matrix& g = grads_[static_cast<std::size_t>(id)];
    if (g.size() != 0 && !g.allFinite()) bad = true;
  }
  if (bad) {
    // slow path: locate the first offending node for the diagnostic
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const bool v_bad = !nodes_[k].value.allFinite();
      const bool g_bad = grads_[k].size() != 0 && !grads_[k].allFinite();
      if (v_bad || g_bad) {
        std::ostringstream os;
        os << "non-finite " << (v_bad ? "value" : "gradient") << " at tape node " << k << " (op "
           << op_name(nodes_[k].op) << ")";
        throw numeric_error(os.str());
      }
    }
    throw numeric_error("non-finite loss value");
  }
}

Matrix Tape::grad(NodeId id) const {
  check(id);
  if (grads_.size() != nodes_.size()) throw structural_error("grad() before backward()");
  const Matrix& g = grads_[static_cast<std::size_t>(id)];
  if (g.size() == 0) {
    const Matrix& v = nodes_[static_cast<std::size_t>(id)].value;
    return Matrix::Zero(v.rows(), v.cols());
  }
  return g;
}

std::vector<std::pair<std::string, Matrix>> Tape::parameter_gradients() const {
  std::vector<std::pair<std::string, Matrix>> out;
  out.reserve(slots_.size());
  for (const auto& [name, id] : slots_) {
    out.emplace_back(name, grad(id));
  }
  return out;
}

DualBatch dual_input(Tape& tape, NodeId points) {
  // copy the shape out: pushing nodes below may reallocate the tape storage
  const Eigen::Index rows = tape.value(points).rows();
  if (tape.value(points).cols() != 3) {
    throw structural_error("dual_input expects a Bx3 coordinate matrix");
  }
  DualBatch d;
  d.values = points;
  for (int k = 0; k < 3; ++k) {
    Matrix jk = Matrix::Zero(rows, 3);
    jk.col(k).setOnes();
    d.jac[static_cast<std::size_t>(k)] = tape.constant(std::move(jk));
  }
  return d;
}

DualBatch dual_input(Tape& tape, NodeId values, std::array<NodeId, 3> jac) {
  DualBatch d;
  d.values = values;
  d.jac = jac;
  const Matrix& v = tape.value(values);
  for (NodeId j : jac) {
    const Matrix& vj = tape.value(j);
    if (vj.rows() != v.rows() || vj.cols() != v.cols()) {
      throw structural_error("dual_input: jacobian block shape mismatch");
    }
  }
  return d;
}

DualBatch forward_with_jacobian(Tape& tape, const AffineLayer& layer, const DualBatch& input) {
  const Matrix& w = tape.value(layer.weight);
  if (tape.value(input.values).cols() != w.rows()) {
    throw structural_error("affine layer fan-in does not match input width");
  }
  DualBatch out;
  out.values = tape.add_rowvec(tape.matmul(input.values, layer.weight), layer.bias);
  for (std::size_t k = 0; k < 3; ++k) {
    out.jac[k] = tape.matmul(input.jac[k], layer.weight);
  }
  return out;
}

DualBatch forward_with_jacobian(Tape& tape, const ReluLayer&, const DualBatch& input) {
  DualBatch out;
  out.values = tape.relu(input.values);
  for (std::size_t k = 0; k < 3; ++k) {
    out.jac[k] = tape.gate_pos(input.jac[k], input.values);
  }
  return out;
}

DualBatch dual_hconcat(Tape& tape, const DualBatch& a, const DualBatch& b) {
  DualBatch out;
  out.values = tape.hconcat(a.values, b.values);
  for (std::size_t k = 0; k < 3; ++k) {
    out.jac[k] = tape.hconcat(a.jac[k], b.jac[k]);
  }
  return out;
}

DualBatch dual_scale(Tape& tape, const DualBatch& a, double c) {
  DualBatch out;
  out.values = tape.scale(a.values, c);
  for (std::size_t k = 0; k < 3; ++k) {
    out.jac[k] = tape.scale(a.jac[k], c);
  }
  return out;
}

}  // namespace elastoreg::ad
