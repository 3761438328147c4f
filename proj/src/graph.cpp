#include "dsg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dsg {

namespace {

double stable_sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kProbEps, 1.0 - kProbEps);
}

// True when b is a [1,n] (or [n]) row broadcastable over a's [m,n] rows.
bool row_broadcastable(const Tensor& a, const Tensor& b) {
  return a.rank() == 2 && b.rows() == 1 && b.cols() == a.cols() && !a.same_shape(b);
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "elementwise-mul";
    case OpKind::kScalarMul: return "scalar-mul";
    case OpKind::kPow: return "power";
    case OpKind::kLog: return "log";
    case OpKind::kExp: return "exp";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kConcat: return "concat";
    case OpKind::kGather: return "gather";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kLayerNorm: return "layer-normalize";
    case OpKind::kRelu: return "relu";
    case OpKind::kReshape: return "reshape";
  }
  return "?";
}

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<int>(nodes_.size()) - 1};
}

Graph::Node& Graph::node(NodeId id) {
  if (!id.valid() || id.index >= static_cast<int>(nodes_.size())) {
    throw ContractError("invalid node id");
  }
  return nodes_[static_cast<std::size_t>(id.index)];
}

const Graph::Node& Graph::node(NodeId id) const {
  if (!id.valid() || id.index >= static_cast<int>(nodes_.size())) {
    throw ContractError("invalid node id");
  }
  return nodes_[static_cast<std::size_t>(id.index)];
}

bool Graph::any_needs_grad(std::span<const NodeId> inputs) const {
  for (NodeId id : inputs) {
    if (node(id).needs_grad) return true;
  }
  return false;
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = node(id);
  if (!n.needs_grad) throw ContractError("node does not track a gradient");
  if (n.grad.empty()) throw ContractError("backward() has not run for this graph");
  return n.grad;
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.needs_grad = false;
  return push(std::move(n));
}

NodeId Graph::parameter(Tensor value) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0]) {
    throw ShapeError(std::string("matmul: shapes ") + A.shape_str() + " and " + B.shape_str() +
                     " do not conform");
  }
  const int m = A.shape[0], k = A.shape[1], p = B.shape[1];
  Tensor C({m, p}, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = &A.data[static_cast<std::size_t>(i) * k];
    double* crow = &C.data[static_cast<std::size_t>(i) * p];
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = &B.data[static_cast<std::size_t>(kk) * p];
      for (int j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
  Node n;
  n.kind = OpKind::kMatmul;
  n.inputs = {a, b};
  n.value = std::move(C);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  Tensor out;
  if (A.same_shape(B)) {
    out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
  } else if (row_broadcastable(A, B)) {
    out = A;
    const int c = A.cols();
    for (int r = 0; r < A.rows(); ++r)
      for (int j = 0; j < c; ++j) out.data[static_cast<std::size_t>(r) * c + j] += B.data[j];
  } else {
    throw ShapeError(std::string("add: shapes ") + A.shape_str() + " and " + B.shape_str() +
                     " do not conform");
  }
  Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {a, b};
  n.value = std::move(out);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  Tensor out;
  if (A.same_shape(B)) {
    out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
  } else if (row_broadcastable(A, B)) {
    out = A;
    const int c = A.cols();
    for (int r = 0; r < A.rows(); ++r)
      for (int j = 0; j < c; ++j) out.data[static_cast<std::size_t>(r) * c + j] -= B.data[j];
  } else {
    throw ShapeError(std::string("sub: shapes ") + A.shape_str() + " and " + B.shape_str() +
                     " do not conform");
  }
  Node n;
  n.kind = OpKind::kSub;
  n.inputs = {a, b};
  n.value = std::move(out);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  Tensor out;
  if (A.same_shape(B)) {
    out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
  } else if (row_broadcastable(A, B)) {
    out = A;
    const int c = A.cols();
    for (int r = 0; r < A.rows(); ++r)
      for (int j = 0; j < c; ++j) out.data[static_cast<std::size_t>(r) * c + j] *= B.data[j];
  } else {
    throw ShapeError(std::string("elementwise-mul: shapes ") + A.shape_str() + " and " +
                     B.shape_str() + " do not conform");
  }
  Node n;
  n.kind = OpKind::kMul;
  n.inputs = {a, b};
  n.value = std::move(out);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::scalar_mul(NodeId a, double factor) {
  Tensor out = value(a);
  for (double& v : out.data) v *= factor;
  Node n;
  n.kind = OpKind::kScalarMul;
  n.inputs = {a};
  n.value = std::move(out);
  n.attrs.scalar = factor;
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::pow(NodeId a, double exponent) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::pow(v, exponent);
  Node n;
  n.kind = OpKind::kPow;
  n.inputs = {a};
  n.value = std::move(out);
  n.attrs.scalar = exponent;
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::log(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::log(std::max(v, kProbEps));
  Node n;
  n.kind = OpKind::kLog;
  n.inputs = {a};
  n.value = std::move(out);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::exp(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::exp(v);
  Node n;
  n.kind = OpKind::kExp;
  n.inputs = {a};
  n.value = std::move(out);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = stable_sigmoid(v);
  Node n;
  n.kind = OpKind::kSigmoid;
  n.inputs = {a};
  n.value = std::move(out);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId a, int axis) {
  const Tensor& A = value(a);
  if (A.rank() > 2) throw ShapeError("softmax: rank must be 1 or 2, got " + A.shape_str());
  if (axis == -1) axis = A.rank() == 2 ? 1 : 0;
  if (A.rank() == 1) axis = 0;
  Tensor out = A;
  const bool by_rows = (A.rank() == 1) || axis == 1;
  const int rows = by_rows ? A.rows() : A.cols();
  const int cols = by_rows ? A.cols() : A.rows();
  auto idx = [&](int r, int c) -> std::size_t {
    return by_rows ? static_cast<std::size_t>(r) * cols + c
                   : static_cast<std::size_t>(c) * rows + r;
  };
  for (int r = 0; r < rows; ++r) {
    double mx = out.data[idx(r, 0)];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, out.data[idx(r, c)]);
    double denom = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double e = std::exp(out.data[idx(r, c)] - mx);
      out.data[idx(r, c)] = e;
      denom += e;
    }
    for (int c = 0; c < cols; ++c) out.data[idx(r, c)] /= denom;
  }
  Node n;
  n.kind = OpKind::kSoftmax;
  n.inputs = {a};
  n.value = std::move(out);
  n.attrs.axis = by_rows ? 1 : 0;
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::concat(std::span<const NodeId> parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
  const Tensor& first = value(parts[0]);
  if (first.rank() != 2) throw ShapeError("concat: inputs must be rank 2");
  int rows = first.shape[0], cols = first.shape[1];
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const Tensor& t = value(parts[i]);
    if (t.rank() != 2) throw ShapeError("concat: inputs must be rank 2");
    if (axis == 0) {
      if (t.shape[1] != cols)
        throw ShapeError(std::string("concat: column mismatch ") + t.shape_str());
      rows += t.shape[0];
    } else {
      if (t.shape[0] != rows)
        throw ShapeError(std::string("concat: row mismatch ") + t.shape_str());
      cols += t.shape[1];
    }
  }
  Tensor out({rows, cols}, 0.0);
  if (axis == 0) {
    std::size_t off = 0;
    for (NodeId id : parts) {
      const Tensor& t = value(id);
      std::copy(t.data.begin(), t.data.end(), out.data.begin() + off);
      off += t.data.size();
    }
  } else {
    int col_off = 0;
    for (NodeId id : parts) {
      const Tensor& t = value(id);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < t.shape[1]; ++c)
          out.at(r, col_off + c) = t.at(r, c);
      col_off += t.shape[1];
    }
  }
  Node n;
  n.kind = OpKind::kConcat;
  n.inputs.assign(parts.begin(), parts.end());
  n.value = std::move(out);
  n.attrs.axis = axis;
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::gather_rows(NodeId a, std::vector<int> rows) {
  const Tensor& A = value(a);
  if (A.rank() != 2) throw ShapeError("gather: input must be rank 2, got " + A.shape_str());
  if (rows.empty()) throw ContractError("gather: empty row list");
  const int c = A.shape[1];
  Tensor out({static_cast<int>(rows.size()), c}, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    if (r < 0 || r >= A.shape[0]) {
      throw ContractError("gather: row index " + std::to_string(r) + " out of range for " +
                          A.shape_str());
    }
    std::copy_n(&A.data[static_cast<std::size_t>(r) * c], c, &out.data[i * c]);
  }
  Node n;
  n.kind = OpKind::kGather;
  n.inputs = {a};
  n.value = std::move(out);
  n.attrs.ints = std::move(rows);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  const Tensor& A = value(a);
  double acc = 0.0;
  for (double v : A.data) acc += v;
  Node n;
  n.kind = OpKind::kSum;
  n.inputs = {a};
  n.value = Tensor::scalar(acc);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
  const Tensor& A = value(a);
  double acc = 0.0;
  for (double v : A.data) acc += v;
  Node n;
  n.kind = OpKind::kMean;
  n.inputs = {a};
  n.value = Tensor::scalar(acc / static_cast<double>(A.numel()));
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  const Tensor& A = value(a);
  if (A.rank() != 2) throw ShapeError("transpose: input must be rank 2, got " + A.shape_str());
  Tensor out({A.shape[1], A.shape[0]}, 0.0);
  for (int r = 0; r < A.shape[0]; ++r)
    for (int c = 0; c < A.shape[1]; ++c) out.at(c, r) = A.at(r, c);
  Node n;
  n.kind = OpKind::kTranspose;
  n.inputs = {a};
  n.value = std::move(out);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::layer_norm(NodeId a) {
  const Tensor& A = value(a);
  if (A.rank() > 2) throw ShapeError("layer-normalize: rank must be 1 or 2");
  Tensor out = A;
  const int rows = A.rows(), cols = A.cols();
  for (int r = 0; r < rows; ++r) {
    double* row = &out.data[static_cast<std::size_t>(r) * cols];
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += row[c];
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double d = row[c] - mu;
      var += d * d;
    }
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (int c = 0; c < cols; ++c) row[c] = (row[c] - mu) * inv;
  }
  Node n;
  n.kind = OpKind::kLayerNorm;
  n.inputs = {a};
  n.value = std::move(out);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::relu(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::max(v, 0.0);
  Node n;
  n.kind = OpKind::kRelu;
  n.inputs = {a};
  n.value = std::move(out);
  n.needs_grad = any_needs_grad(n.inputs);
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, std::vector<int> shape) {
  const Tensor& A = value(a);
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ContractError("reshape: shape entries must be >= 1");
    n *= static_cast<std::size_t>(d);
  }
  if (n != A.numel()) {
    throw ShapeError("reshape: element count mismatch for " + A.shape_str());
  }
  Tensor out;
  out.shape = shape;
  out.data = A.data;
  Node node_;
  node_.kind = OpKind::kReshape;
  node_.inputs = {a};
  node_.value = std::move(out);
  node_.attrs.ints = std::move(shape);
  node_.needs_grad = any_needs_grad(node_.inputs);
  return push(std::move(node_));
}

NodeId Graph::apply(OpKind kind, std::span<const NodeId> inputs, const OpAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ContractError(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                          " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::kMatmul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::kAdd: need(2); return add(inputs[0], inputs[1]);
    case OpKind::kSub: need(2); return sub(inputs[0], inputs[1]);
    case OpKind::kMul: need(2); return mul(inputs[0], inputs[1]);
    case OpKind::kScalarMul: need(1); return scalar_mul(inputs[0], attrs.scalar);
    case OpKind::kPow: need(1); return pow(inputs[0], attrs.scalar);
    case OpKind::kLog: need(1); return log(inputs[0]);
    case OpKind::kExp: need(1); return exp(inputs[0]);
    case OpKind::kSigmoid: need(1); return sigmoid(inputs[0]);
    case OpKind::kSoftmax: need(1); return softmax(inputs[0], attrs.axis);
    case OpKind::kConcat: return concat(inputs, attrs.axis);
    case OpKind::kGather: need(1); return gather_rows(inputs[0], attrs.ints);
    case OpKind::kSum: need(1); return sum(inputs[0]);
    case OpKind::kMean: need(1); return mean(inputs[0]);
    case OpKind::kTranspose: need(1); return transpose(inputs[0]);
    case OpKind::kLayerNorm: need(1); return layer_norm(inputs[0]);
    case OpKind::kRelu: need(1); return relu(inputs[0]);
    case OpKind::kReshape: need(1); return reshape(inputs[0], attrs.ints);
    case OpKind::kLeaf: break;
  }
  throw ContractError("apply: unsupported op kind");
}

void Graph::zero_grad() {
  for (Node& n : nodes_) {
    if (!n.grad.empty()) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  }
}

void Graph::backward(NodeId loss) {
  Node& top = node(loss);
  if (top.value.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got " + top.value.shape_str());
  }
  // Leaf gradients accumulate across backward calls; intermediate gradients
  // are scratch space for the sweep and start from zero every time.
  for (Node& n : nodes_) {
    if (!n.needs_grad) continue;
    if (n.grad.empty()) {
      n.grad = Tensor(n.value.shape, 0.0);
    } else if (n.kind != OpKind::kLeaf) {
      std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    }
  }
  if (!top.needs_grad) return;  // loss does not depend on any parameter
  top.grad.data[0] += 1.0;
  for (int i = loss.index; i >= 0; --i) accumulate_backward(i);
}

void Graph::accumulate_backward(int index) {
  Node& n = nodes_[static_cast<std::size_t>(index)];
  if (!n.needs_grad || n.kind == OpKind::kLeaf) return;
  const Tensor& g = n.grad;
  auto in = [&](std::size_t i) -> Node& { return node(n.inputs[i]); };
  auto wants = [&](std::size_t i) { return in(i).needs_grad; };

  switch (n.kind) {
    case OpKind::kMatmul: {
      const Tensor& A = in(0).value;
      const Tensor& B = in(1).value;
      const int m = A.shape[0], k = A.shape[1], p = B.shape[1];
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < p; ++j) {
            const double gv = g.data[static_cast<std::size_t>(i) * p + j];
            if (gv == 0.0) continue;
            for (int kk = 0; kk < k; ++kk)
              dA.data[static_cast<std::size_t>(i) * k + kk] +=
                  gv * B.data[static_cast<std::size_t>(kk) * p + j];
          }
      }
      if (wants(1)) {
        Tensor& dB = in(1).grad;
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const double av = A.data[static_cast<std::size_t>(i) * k + kk];
            if (av == 0.0) continue;
            for (int j = 0; j < p; ++j)
              dB.data[static_cast<std::size_t>(kk) * p + j] +=
                  av * g.data[static_cast<std::size_t>(i) * p + j];
          }
      }
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub: {
      const double sign = n.kind == OpKind::kAdd ? 1.0 : -1.0;
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) dA.data[i] += g.data[i];
      }
      if (wants(1)) {
        Tensor& dB = in(1).grad;
        if (in(1).value.same_shape(n.value)) {
          for (std::size_t i = 0; i < g.data.size(); ++i) dB.data[i] += sign * g.data[i];
        } else {  // row broadcast: reduce over rows
          const int c = n.value.cols();
          for (int r = 0; r < n.value.rows(); ++r)
            for (int j = 0; j < c; ++j)
              dB.data[j] += sign * g.data[static_cast<std::size_t>(r) * c + j];
        }
      }
      break;
    }
    case OpKind::kMul: {
      const Tensor& A = in(0).value;
      const Tensor& B = in(1).value;
      const bool bcast = !B.same_shape(n.value);
      const int c = n.value.cols();
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        if (!bcast) {
          for (std::size_t i = 0; i < g.data.size(); ++i) dA.data[i] += g.data[i] * B.data[i];
        } else {
          for (int r = 0; r < n.value.rows(); ++r)
            for (int j = 0; j < c; ++j)
              dA.data[static_cast<std::size_t>(r) * c + j] +=
                  g.data[static_cast<std::size_t>(r) * c + j] * B.data[j];
        }
      }
      if (wants(1)) {
        Tensor& dB = in(1).grad;
        if (!bcast) {
          for (std::size_t i = 0; i < g.data.size(); ++i) dB.data[i] += g.data[i] * A.data[i];
        } else {
          for (int r = 0; r < n.value.rows(); ++r)
            for (int j = 0; j < c; ++j)
              dB.data[j] += g.data[static_cast<std::size_t>(r) * c + j] *
                            A.data[static_cast<std::size_t>(r) * c + j];
        }
      }
      break;
    }
    case OpKind::kScalarMul: {
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) dA.data[i] += n.attrs.scalar * g.data[i];
      }
      break;
    }
    case OpKind::kPow: {
      if (wants(0) && n.attrs.scalar != 0.0) {
        const double p = n.attrs.scalar;
        const Tensor& A = in(0).value;
        Tensor& dA = in(0).grad;
        for (std::size_t i = 0; i < g.data.size(); ++i)
          dA.data[i] += g.data[i] * p * std::pow(A.data[i], p - 1.0);
      }
      break;
    }
    case OpKind::kLog: {
      if (wants(0)) {
        const Tensor& A = in(0).value;
        Tensor& dA = in(0).grad;
        for (std::size_t i = 0; i < g.data.size(); ++i)
          dA.data[i] += g.data[i] / std::max(A.data[i], kProbEps);
      }
      break;
    }
    case OpKind::kExp: {
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) dA.data[i] += g.data[i] * n.value.data[i];
      }
      break;
    }
    case OpKind::kSigmoid: {
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const double s = n.value.data[i];
          dA.data[i] += g.data[i] * s * (1.0 - s);
        }
      }
      break;
    }
    case OpKind::kSoftmax: {
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        const Tensor& S = n.value;
        const bool by_rows = n.attrs.axis == 1 || S.rank() == 1;
        const int rows = by_rows ? S.rows() : S.cols();
        const int cols = by_rows ? S.cols() : S.rows();
        auto idx = [&](int r, int c) -> std::size_t {
          return by_rows ? static_cast<std::size_t>(r) * cols + c
                         : static_cast<std::size_t>(c) * rows + r;
        };
        for (int r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (int c = 0; c < cols; ++c) dot += g.data[idx(r, c)] * S.data[idx(r, c)];
          for (int c = 0; c < cols; ++c)
            dA.data[idx(r, c)] += S.data[idx(r, c)] * (g.data[idx(r, c)] - dot);
        }
      }
      break;
    }
    case OpKind::kConcat: {
      if (n.attrs.axis == 0) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const std::size_t sz = in(i).value.numel();
          if (wants(i)) {
            Tensor& d = in(i).grad;
            for (std::size_t j = 0; j < sz; ++j) d.data[j] += g.data[off + j];
          }
          off += sz;
        }
      } else {
        const int rows = n.value.shape[0];
        int col_off = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const int w = in(i).value.shape[1];
          if (wants(i)) {
            Tensor& d = in(i).grad;
            for (int r = 0; r < rows; ++r)
              for (int c = 0; c < w; ++c) d.at(r, c) += g.at(r, col_off + c);
          }
          col_off += w;
        }
      }
      break;
    }
    case OpKind::kGather: {
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        const int c = n.value.shape[1];
        for (std::size_t i = 0; i < n.attrs.ints.size(); ++i) {
          const int r = n.attrs.ints[i];
          for (int j = 0; j < c; ++j)
            dA.data[static_cast<std::size_t>(r) * c + j] += g.data[i * c + j];
        }
      }
      break;
    }
    case OpKind::kSum: {
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        const double gv = g.data[0];
        for (double& v : dA.data) v += gv;
      }
      break;
    }
    case OpKind::kMean: {
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        const double gv = g.data[0] / static_cast<double>(in(0).value.numel());
        for (double& v : dA.data) v += gv;
      }
      break;
    }
    case OpKind::kTranspose: {
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        const int r0 = in(0).value.shape[0], c0 = in(0).value.shape[1];
        for (int r = 0; r < r0; ++r)
          for (int c = 0; c < c0; ++c)
            dA.data[static_cast<std::size_t>(r) * c0 + c] +=
                g.data[static_cast<std::size_t>(c) * r0 + r];
      }
      break;
    }
    case OpKind::kLayerNorm: {
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        const Tensor& X = in(0).value;
        const Tensor& Y = n.value;
        const int rows = X.rows(), cols = X.cols();
        for (int r = 0; r < rows; ++r) {
          const std::size_t base = static_cast<std::size_t>(r) * cols;
          double mu = 0.0;
          for (int c = 0; c < cols; ++c) mu += X.data[base + c];
          mu /= cols;
          double var = 0.0;
          for (int c = 0; c < cols; ++c) {
            const double d = X.data[base + c] - mu;
            var += d * d;
          }
          var /= cols;
          const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
          double gmean = 0.0, gymean = 0.0;
          for (int c = 0; c < cols; ++c) {
            gmean += g.data[base + c];
            gymean += g.data[base + c] * Y.data[base + c];
          }
          gmean /= cols;
          gymean /= cols;
          for (int c = 0; c < cols; ++c)
            dA.data[base + c] += inv * (g.data[base + c] - gmean - Y.data[base + c] * gymean);
        }
      }
      break;
    }
    case OpKind::kRelu: {
      if (wants(0)) {
        const Tensor& A = in(0).value;
        Tensor& dA = in(0).grad;
        for (std::size_t i = 0; i < g.data.size(); ++i)
          if (A.data[i] > 0.0) dA.data[i] += g.data[i];
      }
      break;
    }
    case OpKind::kReshape: {
      if (wants(0)) {
        Tensor& dA = in(0).grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) dA.data[i] += g.data[i];
      }
      break;
    }
    case OpKind::kLeaf:
      break;
  }
}

}  // namespace dsg
