#pragma once

// Reverse-mode automatic differentiation over dense 64-bit matrices.
//
// A Graph is an append-only tape. Every node stores its forward value at
// construction time, so inputs always precede the nodes that consume them and
// backward() is a single reverse sweep. Parameter leaves are bound by name to
// a ParameterStore; backward() accumulates into the store's gradient slots.

#include <Eigen/Dense>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace framesel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class Op {
  kConstant,
  kParameter,
  kAdd,
  kSubtract,
  kScalarMultiply,
  kElementwiseMultiply,
  kMatVec,
  kMatMul,
  kDot,
  kL2Norm,
  kL2Normalize,
  kCosineSimilarity,
  kSigmoid,
  kTanh,
  kLog,
  kExp,
  kSum,
  kMean,
  kConcat,
  kSoftmax,
  kCrossEntropy,
  kClampMin,
};

std::string_view op_name(Op op);

enum class Axis { kRows, kCols };

struct OpAttrs {
  double scalar = 1.0;      // kScalarMultiply with a single input
  double tau = 1.0;         // kSoftmax temperature
  std::size_t target = 0;   // kCrossEntropy class index
  Axis axis = Axis::kRows;  // kConcat stacking direction
  double floor = 0.0;       // kClampMin lower bound
};

inline constexpr double kNormalizeEpsilon = 1e-12;
inline constexpr double kLogDomainFloor = 1e-300;

// Named parameter tensors with same-shaped gradient accumulators.
class ParameterStore {
 public:
  void add(std::string name, Matrix initial);

  [[nodiscard]] bool contains(std::string_view name) const;
  [[nodiscard]] const Matrix& value(std::string_view name) const;
  [[nodiscard]] Matrix& mutable_value(std::string_view name);
  [[nodiscard]] const Matrix& gradient(std::string_view name) const;
  [[nodiscard]] Matrix& mutable_gradient(std::string_view name);

  // Sorted lexicographically; iteration order is stable across runs.
  [[nodiscard]] std::vector<std::string> names() const;
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] std::size_t coordinate_count() const;

  void zero_gradients();
  // value -= learning_rate * gradient for every parameter.
  void apply_gradient_descent(double learning_rate);

 private:
  struct Entry {
    Matrix value;
    Matrix gradient;
  };
  const Entry& entry(std::string_view name) const;
  Entry& entry(std::string_view name);

  std::map<std::string, Entry, std::less<>> entries_;
};

// Adjoints of every node reachable backwards from a scalar root.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Matrix> adjoints, std::vector<Eigen::Index> rows,
            std::vector<Eigen::Index> cols);

  // d(root)/d(node); zeros when the node does not influence the root.
  [[nodiscard]] Matrix of(NodeId node) const;

 private:
  std::vector<Matrix> adjoints_;
  std::vector<Eigen::Index> rows_;
  std::vector<Eigen::Index> cols_;
};

class Graph {
 public:
  NodeId constant(Matrix value);
  NodeId scalar(double value);
  // Leaf holding a copy of the named parameter's current value.
  NodeId parameter(const ParameterStore& store, std::string_view name);

  NodeId apply(Op op, std::span<const NodeId> inputs, const OpAttrs& attrs = {});
  NodeId apply(Op op, std::initializer_list<NodeId> inputs, const OpAttrs& attrs = {}) {
    return apply(op, std::span<const NodeId>(inputs.begin(), inputs.size()), attrs);
  }

  // Convenience wrappers over apply().
  NodeId add(NodeId a, NodeId b) { return apply(Op::kAdd, {a, b}); }
  NodeId subtract(NodeId a, NodeId b) { return apply(Op::kSubtract, {a, b}); }
  NodeId scale(NodeId x, double factor);
  NodeId scale(NodeId s, NodeId x) { return apply(Op::kScalarMultiply, {s, x}); }
  NodeId multiply(NodeId a, NodeId b) { return apply(Op::kElementwiseMultiply, {a, b}); }
  NodeId matvec(NodeId m, NodeId x) { return apply(Op::kMatVec, {m, x}); }
  NodeId matmul(NodeId a, NodeId b) { return apply(Op::kMatMul, {a, b}); }
  NodeId dot(NodeId a, NodeId b) { return apply(Op::kDot, {a, b}); }
  NodeId norm(NodeId x) { return apply(Op::kL2Norm, {x}); }
  NodeId normalize(NodeId x) { return apply(Op::kL2Normalize, {x}); }
  NodeId cosine(NodeId a, NodeId b) { return apply(Op::kCosineSimilarity, {a, b}); }
  NodeId sigmoid(NodeId x) { return apply(Op::kSigmoid, {x}); }
  NodeId tanh(NodeId x) { return apply(Op::kTanh, {x}); }
  NodeId log(NodeId x) { return apply(Op::kLog, {x}); }
  NodeId exp(NodeId x) { return apply(Op::kExp, {x}); }
  NodeId sum(NodeId x) { return apply(Op::kSum, {x}); }
  NodeId mean(NodeId x) { return apply(Op::kMean, {x}); }
  NodeId concat(std::span<const NodeId> parts, Axis axis = Axis::kRows);
  NodeId softmax(NodeId x, double tau);
  NodeId cross_entropy(NodeId logits, std::size_t target);
  NodeId clamp_min(NodeId x, double floor);

  [[nodiscard]] const Matrix& value(NodeId id) const;
  [[nodiscard]] double scalar_value(NodeId id) const;
  [[nodiscard]] Op op(NodeId id) const;
  [[nodiscard]] std::span<const NodeId> inputs(NodeId id) const;
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] std::size_t count(Op op) const;

  // Reverse sweep from a 1x1 root. The store overload also accumulates
  // d(root)/d(p) into every bound parameter's gradient slot.
  Gradients backward(NodeId root) const;
  Gradients backward(NodeId root, ParameterStore& store) const;

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Matrix value;
    OpAttrs attrs;
    std::string parameter;
    // Cached forward intermediates (norms for normalize/cosine).
    double aux0 = 0.0;
    double aux1 = 0.0;
  };

  const Node& node(NodeId id) const;
  NodeId push(Node node);
  std::vector<Matrix> sweep(NodeId root) const;

  std::vector<Node> nodes_;
};

}  // namespace framesel
