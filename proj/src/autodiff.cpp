#include "framesel/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "framesel/errors.hpp"

namespace framesel {
namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_mismatch(Op op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_of(a) + " vs " +
                   shape_of(b));
}

void require_vector(Op op, const Matrix& x) {
  if (x.cols() != 1 || x.rows() == 0) {
    throw ShapeError(std::string(op_name(op)) + ": expected a non-empty column vector, got " +
                     shape_of(x));
  }
}

void require_same_shape(Op op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(op, a, b);
}

void require_arity(Op op, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ContractError(std::string(op_name(op)) + ": expected " + std::to_string(want) +
                        " inputs, got " + std::to_string(got));
  }
}

Matrix stable_softmax(const Matrix& x, double tau) {
  const double top = x.maxCoeff();
  Matrix e = ((x.array() - top) / tau).exp().matrix();
  return e / e.sum();
}

double log_sum_exp(const Matrix& x) {
  const double top = x.maxCoeff();
  return top + std::log((x.array() - top).exp().sum());
}

void accumulate(Matrix& slot, const Matrix& delta) {
  if (slot.size() == 0) {
    slot = delta;
  } else {
    slot += delta;
  }
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kParameter: return "parameter";
    case Op::kAdd: return "add";
    case Op::kSubtract: return "subtract";
    case Op::kScalarMultiply: return "scalar-multiply";
    case Op::kElementwiseMultiply: return "elementwise-multiply";
    case Op::kMatVec: return "matrix-vector-product";
    case Op::kMatMul: return "matrix-matrix-product";
    case Op::kDot: return "dot";
    case Op::kL2Norm: return "l2-norm";
    case Op::kL2Normalize: return "l2-normalize";
    case Op::kCosineSimilarity: return "cosine-similarity";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kLog: return "log";
    case Op::kExp: return "exp";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kConcat: return "concat";
    case Op::kSoftmax: return "softmax-with-temperature";
    case Op::kCrossEntropy: return "cross-entropy-with-logits";
    case Op::kClampMin: return "clamp-min";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// ParameterStore

void ParameterStore::add(std::string name, Matrix initial) {
  if (entries_.contains(name)) throw ContractError("parameter '" + name + "' already exists");
  Matrix zeros = Matrix::Zero(initial.rows(), initial.cols());
  entries_.emplace(std::move(name), Entry{std::move(initial), std::move(zeros)});
}

bool ParameterStore::contains(std::string_view name) const {
  return entries_.find(name) != entries_.end();
}

const ParameterStore::Entry& ParameterStore::entry(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

ParameterStore::Entry& ParameterStore::entry(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const Matrix& ParameterStore::value(std::string_view name) const { return entry(name).value; }
Matrix& ParameterStore::mutable_value(std::string_view name) { return entry(name).value; }
const Matrix& ParameterStore::gradient(std::string_view name) const { return entry(name).gradient; }
Matrix& ParameterStore::mutable_gradient(std::string_view name) { return entry(name).gradient; }

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::coordinate_count() const {
  std::size_t total = 0;
  for (const auto& [_, e] : entries_) total += static_cast<std::size_t>(e.value.size());
  return total;
}

void ParameterStore::zero_gradients() {
  for (auto& [_, e] : entries_) e.gradient.setZero();
}

void ParameterStore::apply_gradient_descent(double learning_rate) {
  if (learning_rate == 0.0) return;
  for (auto& [_, e] : entries_) e.value -= learning_rate * e.gradient;
}

// ---------------------------------------------------------------------------
// Gradients

Gradients::Gradients(std::vector<Matrix> adjoints, std::vector<Eigen::Index> rows,
                     std::vector<Eigen::Index> cols)
    : adjoints_(std::move(adjoints)), rows_(std::move(rows)), cols_(std::move(cols)) {}

Matrix Gradients::of(NodeId node) const {
  if (node.index >= rows_.size()) throw ContractError("gradient requested for unknown node");
  if (node.index < adjoints_.size() && adjoints_[node.index].size() != 0) {
    return adjoints_[node.index];
  }
  return Matrix::Zero(rows_[node.index], cols_[node.index]);
}

// ---------------------------------------------------------------------------
// Graph construction

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw ContractError("node id " + std::to_string(id.index) + " is not in the graph");
  }
  return nodes_[id.index];
}

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId{nodes_.size() - 1};
}

NodeId Graph::constant(Matrix value) {
  Node n{Op::kConstant, {}, std::move(value), {}, {}};
  return push(std::move(n));
}

NodeId Graph::scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

NodeId Graph::parameter(const ParameterStore& store, std::string_view name) {
  Node n{Op::kParameter, {}, store.value(name), {}, std::string(name)};
  return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double factor) {
  OpAttrs attrs;
  attrs.scalar = factor;
  return apply(Op::kScalarMultiply, {x}, attrs);
}

NodeId Graph::concat(std::span<const NodeId> parts, Axis axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return apply(Op::kConcat, parts, attrs);
}

NodeId Graph::softmax(NodeId x, double tau) {
  OpAttrs attrs;
  attrs.tau = tau;
  return apply(Op::kSoftmax, {x}, attrs);
}

NodeId Graph::cross_entropy(NodeId logits, std::size_t target) {
  OpAttrs attrs;
  attrs.target = target;
  return apply(Op::kCrossEntropy, {logits}, attrs);
}

NodeId Graph::clamp_min(NodeId x, double floor) {
  OpAttrs attrs;
  attrs.floor = floor;
  return apply(Op::kClampMin, {x}, attrs);
}

const Matrix& Graph::value(NodeId id) const { return node(id).value; }

double Graph::scalar_value(NodeId id) const {
  const Matrix& v = value(id);
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("scalar_value: node is " + shape_of(v) + ", not 1x1");
  }
  return v(0, 0);
}

Op Graph::op(NodeId id) const { return node(id).op; }

std::span<const NodeId> Graph::inputs(NodeId id) const { return node(id).inputs; }

std::size_t Graph::count(Op op) const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [op](const Node& n) { return n.op == op; }));
}

NodeId Graph::apply(Op op, std::span<const NodeId> inputs, const OpAttrs& attrs) {
  for (NodeId in : inputs) node(in);  // validates ids

  Node out{op, std::vector<NodeId>(inputs.begin(), inputs.end()), Matrix(), attrs, {}};
  auto in = [&](std::size_t i) -> const Matrix& { return nodes_[inputs[i].index].value; };

  switch (op) {
    case Op::kConstant:
    case Op::kParameter:
      throw ContractError("leaf nodes are created with constant() or parameter()");

    case Op::kAdd:
    case Op::kSubtract:
    case Op::kElementwiseMultiply: {
      require_arity(op, inputs.size(), 2);
      require_same_shape(op, in(0), in(1));
      if (op == Op::kAdd) {
        out.value = in(0) + in(1);
      } else if (op == Op::kSubtract) {
        out.value = in(0) - in(1);
      } else {
        out.value = in(0).cwiseProduct(in(1));
      }
      break;
    }

    case Op::kScalarMultiply: {
      if (inputs.size() == 1) {
        out.value = attrs.scalar * in(0);
      } else {
        require_arity(op, inputs.size(), 2);
        if (in(0).size() != 1) {
          throw ShapeError("scalar-multiply: first operand must be 1x1, got " + shape_of(in(0)));
        }
        out.value = in(0)(0, 0) * in(1);
      }
      break;
    }

    case Op::kMatVec: {
      require_arity(op, inputs.size(), 2);
      require_vector(op, in(1));
      if (in(0).cols() != in(1).rows()) shape_mismatch(op, in(0), in(1));
      out.value = in(0) * in(1);
      break;
    }

    case Op::kMatMul: {
      require_arity(op, inputs.size(), 2);
      if (in(0).cols() != in(1).rows()) shape_mismatch(op, in(0), in(1));
      out.value = in(0) * in(1);
      break;
    }

    case Op::kDot: {
      require_arity(op, inputs.size(), 2);
      require_same_shape(op, in(0), in(1));
      out.value = Matrix::Constant(1, 1, in(0).cwiseProduct(in(1)).sum());
      break;
    }

    case Op::kL2Norm: {
      require_arity(op, inputs.size(), 1);
      out.value = Matrix::Constant(1, 1, in(0).norm());
      break;
    }

    case Op::kL2Normalize: {
      require_arity(op, inputs.size(), 1);
      out.aux0 = in(0).norm();
      out.value = in(0) / std::max(out.aux0, kNormalizeEpsilon);
      break;
    }

    case Op::kCosineSimilarity: {
      require_arity(op, inputs.size(), 2);
      require_same_shape(op, in(0), in(1));
      out.aux0 = in(0).norm();
      out.aux1 = in(1).norm();
      const double denom =
          std::max(out.aux0, kNormalizeEpsilon) * std::max(out.aux1, kNormalizeEpsilon);
      out.value = Matrix::Constant(1, 1, in(0).cwiseProduct(in(1)).sum() / denom);
      break;
    }

    case Op::kSigmoid: {
      require_arity(op, inputs.size(), 1);
      out.value = in(0).unaryExpr([](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
      break;
    }

    case Op::kTanh: {
      require_arity(op, inputs.size(), 1);
      out.value = in(0).array().tanh().matrix();
      break;
    }

    case Op::kLog: {
      require_arity(op, inputs.size(), 1);
      const Matrix& x = in(0);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!(x.data()[i] >= kLogDomainFloor)) {
          throw DomainError("log: argument " + std::to_string(x.data()[i]) +
                            " below domain floor 1e-300");
        }
      }
      out.value = x.array().log().matrix();
      break;
    }

    case Op::kExp: {
      require_arity(op, inputs.size(), 1);
      out.value = in(0).array().exp().matrix();
      if (!out.value.allFinite()) throw DomainError("exp: result overflows a 64-bit float");
      break;
    }

    case Op::kSum:
    case Op::kMean: {
      require_arity(op, inputs.size(), 1);
      if (in(0).size() == 0) throw ShapeError(std::string(op_name(op)) + ": empty input");
      const double total = in(0).sum();
      out.value = Matrix::Constant(
          1, 1, op == Op::kSum ? total : total / static_cast<double>(in(0).size()));
      break;
    }

    case Op::kConcat: {
      if (inputs.empty()) throw ContractError("concat: needs at least one input");
      Eigen::Index rows = 0;
      Eigen::Index cols = 0;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Matrix& part = in(i);
        if (attrs.axis == Axis::kRows) {
          if (i > 0 && part.cols() != cols) shape_mismatch(op, in(0), part);
          cols = part.cols();
          rows += part.rows();
        } else {
          if (i > 0 && part.rows() != rows) shape_mismatch(op, in(0), part);
          rows = part.rows();
          cols += part.cols();
        }
      }
      out.value.resize(rows, cols);
      Eigen::Index offset = 0;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Matrix& part = in(i);
        if (attrs.axis == Axis::kRows) {
          out.value.middleRows(offset, part.rows()) = part;
          offset += part.rows();
        } else {
          out.value.middleCols(offset, part.cols()) = part;
          offset += part.cols();
        }
      }
      break;
    }

    case Op::kSoftmax: {
      require_arity(op, inputs.size(), 1);
      if (!(attrs.tau > 0.0)) {
        throw DomainError("softmax-with-temperature: tau must be > 0, got " +
                          std::to_string(attrs.tau));
      }
      if (in(0).size() == 0) throw ShapeError("softmax-with-temperature: empty input");
      if (!in(0).allFinite()) throw DomainError("softmax-with-temperature: non-finite input");
      out.value = stable_softmax(in(0), attrs.tau);
      break;
    }

    case Op::kCrossEntropy: {
      require_arity(op, inputs.size(), 1);
      require_vector(op, in(0));
      if (attrs.target >= static_cast<std::size_t>(in(0).rows())) {
        throw ContractError("cross-entropy-with-logits: target " + std::to_string(attrs.target) +
                            " out of range for " + std::to_string(in(0).rows()) + " classes");
      }
      const auto t = static_cast<Eigen::Index>(attrs.target);
      out.value = Matrix::Constant(1, 1, log_sum_exp(in(0)) - in(0)(t, 0));
      break;
    }

    case Op::kClampMin: {
      require_arity(op, inputs.size(), 1);
      out.value = in(0).cwiseMax(attrs.floor);
      break;
    }
  }
  return push(std::move(out));
}

// ---------------------------------------------------------------------------
// Reverse sweep

std::vector<Matrix> Graph::sweep(NodeId root) const {
  const Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw ContractError("backward: root must be a scalar node, got " + shape_of(r.value));
  }

  std::vector<Matrix> adj(root.index + 1);
  adj[root.index] = Matrix::Ones(1, 1);

  for (std::size_t idx = root.index + 1; idx-- > 0;) {
    if (adj[idx].size() == 0) continue;
    const Node& n = nodes_[idx];
    const Matrix& g = adj[idx];
    auto x = [&](std::size_t i) -> const Matrix& { return nodes_[n.inputs[i].index].value; };
    auto slot = [&](std::size_t i) -> Matrix& { return adj[n.inputs[i].index]; };

    switch (n.op) {
      case Op::kConstant:
      case Op::kParameter: break;

      case Op::kAdd:
        accumulate(slot(0), g);
        accumulate(slot(1), g);
        break;

      case Op::kSubtract:
        accumulate(slot(0), g);
        accumulate(slot(1), -g);
        break;

      case Op::kScalarMultiply:
        if (n.inputs.size() == 1) {
          accumulate(slot(0), n.attrs.scalar * g);
        } else {
          accumulate(slot(0), Matrix::Constant(1, 1, g.cwiseProduct(x(1)).sum()));
          accumulate(slot(1), x(0)(0, 0) * g);
        }
        break;

      case Op::kElementwiseMultiply:
        accumulate(slot(0), g.cwiseProduct(x(1)));
        accumulate(slot(1), g.cwiseProduct(x(0)));
        break;

      case Op::kMatVec:
      case Op::kMatMul:
        accumulate(slot(0), g * x(1).transpose());
        accumulate(slot(1), x(0).transpose() * g);
        break;

      case Op::kDot: {
        const double s = g(0, 0);
        accumulate(slot(0), s * x(1));
        accumulate(slot(1), s * x(0));
        break;
      }

      case Op::kL2Norm: {
        const double nrm = n.value(0, 0);
        if (nrm > 0.0) {
          accumulate(slot(0), (g(0, 0) / nrm) * x(0));
        } else {
          accumulate(slot(0), Matrix::Zero(x(0).rows(), x(0).cols()));
        }
        break;
      }

      case Op::kL2Normalize: {
        const double nrm = n.aux0;
        if (nrm > kNormalizeEpsilon) {
          const Matrix& y = n.value;
          const double yg = y.cwiseProduct(g).sum();
          accumulate(slot(0), (g - yg * y) / nrm);
        } else {
          accumulate(slot(0), g / kNormalizeEpsilon);
        }
        break;
      }

      case Op::kCosineSimilarity: {
        const double s = g(0, 0);
        const double c = n.value(0, 0);
        const double na = std::max(n.aux0, kNormalizeEpsilon);
        const double nb = std::max(n.aux1, kNormalizeEpsilon);
        Matrix da = x(1) / (na * nb);
        Matrix db = x(0) / (na * nb);
        if (n.aux0 > kNormalizeEpsilon) da -= (c / (na * na)) * x(0);
        if (n.aux1 > kNormalizeEpsilon) db -= (c / (nb * nb)) * x(1);
        accumulate(slot(0), s * da);
        accumulate(slot(1), s * db);
        break;
      }

      case Op::kSigmoid:
        accumulate(slot(0), g.cwiseProduct((n.value.array() * (1.0 - n.value.array())).matrix()));
        break;

      case Op::kTanh:
        accumulate(slot(0), g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;

      case Op::kLog: accumulate(slot(0), g.cwiseQuotient(x(0))); break;

      case Op::kExp: accumulate(slot(0), g.cwiseProduct(n.value)); break;

      case Op::kSum:
        accumulate(slot(0), Matrix::Constant(x(0).rows(), x(0).cols(), g(0, 0)));
        break;

      case Op::kMean:
        accumulate(slot(0), Matrix::Constant(x(0).rows(), x(0).cols(),
                                             g(0, 0) / static_cast<double>(x(0).size())));
        break;

      case Op::kConcat: {
        Eigen::Index offset = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const Matrix& part = x(i);
          if (n.attrs.axis == Axis::kRows) {
            accumulate(slot(i), g.middleRows(offset, part.rows()));
            offset += part.rows();
          } else {
            accumulate(slot(i), g.middleCols(offset, part.cols()));
            offset += part.cols();
          }
        }
        break;
      }

      case Op::kSoftmax: {
        const Matrix& y = n.value;
        const double yg = y.cwiseProduct(g).sum();
        accumulate(slot(0), (y.array() * (g.array() - yg)).matrix() / n.attrs.tau);
        break;
      }

      case Op::kCrossEntropy: {
        Matrix p = stable_softmax(x(0), 1.0);
        p(static_cast<Eigen::Index>(n.attrs.target), 0) -= 1.0;
        accumulate(slot(0), g(0, 0) * p);
        break;
      }

      case Op::kClampMin: {
        const Matrix& in = x(0);
        Matrix pass = g;
        for (Eigen::Index i = 0; i < in.size(); ++i) {
          if (!(in.data()[i] > n.attrs.floor)) pass.data()[i] = 0.0;
        }
        accumulate(slot(0), pass);
        break;
      }
    }
  }
  return adj;
}

Gradients Graph::backward(NodeId root) const {
  std::vector<Matrix> adj = sweep(root);
  std::vector<Eigen::Index> rows(nodes_.size());
  std::vector<Eigen::Index> cols(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    rows[i] = nodes_[i].value.rows();
    cols[i] = nodes_[i].value.cols();
  }
  return Gradients(std::move(adj), std::move(rows), std::move(cols));
}

Gradients Graph::backward(NodeId root, ParameterStore& store) const {
  Gradients grads = backward(root);
  for (std::size_t i = 0; i <= root.index; ++i) {
    const Node& n = nodes_[i];
    if (n.op != Op::kParameter) continue;
    Matrix& slot = store.mutable_gradient(n.parameter);
    const Matrix g = grads.of(NodeId{i});
    if (slot.rows() != g.rows() || slot.cols() != g.cols()) {
      throw ShapeError("backward: parameter '" + n.parameter + "' changed shape to " +
                       shape_of(slot) + " since it was bound as " + shape_of(g));
    }
    slot += g;
  }
  return grads;
}

}  // namespace framesel
