#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "elastoreg/errors.hpp"

namespace elastoreg::ad {

using Matrix = Eigen::MatrixXd;
using NodeId = std::int32_t;

enum class Op : std::uint8_t {
  Constant,
  Parameter,
  MatMul,      // A (m×k) · B (k×n)
  Add,         // elementwise, same shape
  Sub,
  Mul,         // Hadamard product
  AddRowVec,   // A (m×n) + broadcast of b (1×n)
  Scale,       // c · A
  Relu,        // max(0, x); subgradient at 0 is 0
  GatePos,     // A ⊙ [value(g) > 0]; no gradient to g
  Abs,         // |x|; subgradient at 0 is 0
  ColMax,      // column-wise max over rows → 1×n; ties to lowest row index
  RepeatRow,   // 1×n → m×n
  HConcat,     // [A | B]
  Block,       // submatrix
  Transpose,
  Reshape,     // row-major reinterpretation
  GatherRows,  // rows picked by index list (repeats allowed)
  Sum,         // full reduction → 1×1
};

const char* op_name(Op op);

// Single node of the eagerly-evaluated computation record. Values are
// computed at construction; backward() replays the record in reverse
// creation order, which is a valid reverse topological order because
// operands always precede their consumers.
struct Node {
  Op op;
  NodeId a = -1;
  NodeId b = -1;
  double scalar = 0.0;
  int i0 = 0, i1 = 0, i2 = 0, i3 = 0;  // Block: r0,c0,rows,cols; Reshape: rows,cols; RepeatRow: count
  std::vector<int> indices;            // GatherRows rows / ColMax argmax rows
  int param_slot = -1;
  Matrix value;
};

class Tape {
 public:
  NodeId constant(Matrix v);
  NodeId parameter(std::string name, Matrix v);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId add_rowvec(NodeId a, NodeId row);
  NodeId scale(NodeId a, double c);
  NodeId relu(NodeId a);
  NodeId gate_pos(NodeId a, NodeId gate_source);
  NodeId abs(NodeId a);
  NodeId colmax(NodeId a);
  NodeId repeat_row(NodeId row, int count);
  NodeId hconcat(NodeId a, NodeId b);
  NodeId block(NodeId a, int r0, int c0, int rows, int cols);
  NodeId transpose(NodeId a);
  NodeId reshape_rowmajor(NodeId a, int rows, int cols);
  NodeId gather_rows(NodeId a, std::vector<int> rows);
  NodeId sum(NodeId a);

  const Matrix& value(NodeId id) const { return nodes_[check(id)].value; }
  double scalar_value(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar (1×1) loss node. Fills per-node gradients;
  // a parameter used k times accumulates the sum of its k contributions.
  // Throws numeric_error naming the first offending node if non-finite
  // values or gradients are produced.
  void backward(NodeId loss);

  // Gradient of the last backward() pass. Zero matrix if the node did not
  // participate in the loss.
  Matrix grad(NodeId id) const;

  // name → ∂loss/∂parameter for every registered parameter slot, in
  // registration order; unused parameters get zero gradients.
  std::vector<std::pair<std::string, Matrix>> parameter_gradients() const;

 private:
  NodeId push(Node n);
  NodeId check(NodeId id) const;
  void require_same_shape(NodeId a, NodeId b, const char* what) const;

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;               // aligned with nodes_ after backward
  std::vector<std::pair<std::string, NodeId>> slots_;
};

// Batched activations paired with the Jacobian of each row with respect to
// the 3 spatial coordinates of that row's originating point. jac[k] has the
// same shape as values; jac[k](s, i) = ∂values(s, i)/∂coordinate_k.
struct DualBatch {
  NodeId values = -1;
  std::array<NodeId, 3> jac{-1, -1, -1};
};

// Seeds a DualBatch from a raw B×3 coordinate node: the Jacobian of the
// input layer is the 3×3 identity per sample.
DualBatch dual_input(Tape& tape, NodeId points);

// Seeds with explicit Jacobian nodes (e.g. scaled or transformed inputs).
DualBatch dual_input(Tape& tape, NodeId values, std::array<NodeId, 3> jac);

struct AffineLayer {
  NodeId weight;  // fan_in × fan_out
  NodeId bias;    // 1 × fan_out
};

struct ReluLayer {};

// Applies a per-point layer to values and propagates the per-sample
// Jacobian blocks: affine multiplies them by the weight matrix, ReLU gates
// them on the sign of the pre-activation.
DualBatch forward_with_jacobian(Tape& tape, const AffineLayer& layer, const DualBatch& input);
DualBatch forward_with_jacobian(Tape& tape, const ReluLayer& layer, const DualBatch& input);

DualBatch dual_hconcat(Tape& tape, const DualBatch& a, const DualBatch& b);
DualBatch dual_scale(Tape& tape, const DualBatch& a, double c);

}  // namespace elastoreg::ad
