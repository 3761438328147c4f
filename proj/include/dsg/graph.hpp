#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dsg/tensor.hpp"

namespace dsg {

enum class OpKind : std::uint8_t {
  kLeaf,  // constants and parameters
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScalarMul,
  kPow,
  kLog,
  kExp,
  kSigmoid,
  kSoftmax,
  kConcat,
  kGather,
  kSum,
  kMean,
  kTranspose,
  kLayerNorm,
  kRelu,
  kReshape,
};

const char* op_name(OpKind kind);

struct NodeId {
  int index = -1;
  bool valid() const { return index >= 0; }
};

// Probabilities are clamped into [kProbEps, 1 - kProbEps] at the sigmoid
// output and below at the log input, which keeps every loss gradient finite.
inline constexpr double kProbEps = 1e-7;
inline constexpr double kLayerNormEps = 1e-5;

// Reverse-mode tape, rebuilt from scratch every training step. Nodes are
// appended in topological order (inputs exist before their consumers), so
// backward is a single reverse sweep over the arena. Single-threaded.
class Graph {
 public:
  struct OpAttrs {
    double scalar = 0.0;
    int axis = -1;
    std::vector<int> ints;  // gather row indices or reshape target shape
  };

  NodeId constant(Tensor value);   // leaf, never receives a gradient
  NodeId parameter(Tensor value);  // leaf, gradient tracked

  NodeId matmul(NodeId a, NodeId b);
  // add/sub/mul accept equal shapes, or a [1,n] second operand broadcast
  // over the rows of an [m,n] first operand.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scalar_mul(NodeId a, double factor);
  NodeId pow(NodeId a, double exponent);  // elementwise; base must stay > 0
  NodeId log(NodeId a);                   // input clamped below at kProbEps
  NodeId exp(NodeId a);
  NodeId sigmoid(NodeId a);  // output clamped into [kProbEps, 1 - kProbEps]
  NodeId softmax(NodeId a, int axis = -1);  // -1 selects the last axis
  NodeId concat(std::span<const NodeId> parts, int axis);
  NodeId gather_rows(NodeId a, std::vector<int> rows);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId transpose(NodeId a);
  NodeId layer_norm(NodeId a);  // per row, epsilon kLayerNormEps
  NodeId relu(NodeId a);
  NodeId reshape(NodeId a, std::vector<int> shape);

  // Generic dispatch used by the op-level gradient checks.
  NodeId apply(OpKind kind, std::span<const NodeId> inputs, const OpAttrs& attrs);
  NodeId apply(OpKind kind, std::span<const NodeId> inputs) {
    return apply(kind, inputs, OpAttrs());
  }

  // Populates gradients of every grad-tracked node reachable from `loss`;
  // unreachable parameters keep a zero gradient. `loss` must be scalar.
  void backward(NodeId loss);
  void zero_grad();

  const Tensor& value(NodeId id) const;
  const Tensor& grad(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    OpAttrs attrs;
  };

  NodeId push(Node node);
  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  bool any_needs_grad(std::span<const NodeId> inputs) const;
  void accumulate_backward(int index);

  std::vector<Node> nodes_;
};

}  // namespace dsg
