#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace anglseg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Raised by every tensor operation whose inputs have incompatible shapes.
/// `dimension()` names the offending axis (e.g. "channels", "kernel height").
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string op, std::string dimension, std::size_t expected, std::size_t actual)
      : std::invalid_argument(op + ": " + dimension + " mismatch (expected " + std::to_string(expected) +
                              ", got " + std::to_string(actual) + ")"),
        op_(std::move(op)), dimension_(std::move(dimension)) {}
  ShapeError(std::string op, std::string message)
      : std::invalid_argument(op + ": " + message), op_(std::move(op)), dimension_("rank") {}

  const std::string& op() const noexcept { return op_; }
  const std::string& dimension() const noexcept { return dimension_; }

 private:
  std::string op_;
  std::string dimension_;
};

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
struct TensorNode {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Shape shape;
  Array value;
  Array grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void accumulate(const Array& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
  Array& grad_buffer() {
    if (grad.size() == 0) grad = Array::Zero(value.size());
    return grad;
  }
};

/// Dense row-major tensor handle. Copies share the underlying node, so a
/// parameter tensor held by a layer and by the optimizer is the same storage.
template <typename Scalar>
class BasicTensor {
 public:
  using Node = TensorNode<Scalar>;
  using Array = typename Node::Array;
  using scalar_type = Scalar;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), Array::Zero(static_cast<Eigen::Index>(n)), requires_grad);
  }

  static BasicTensor full(Shape shape, Scalar value, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), Array::Constant(static_cast<Eigen::Index>(n), value), requires_grad);
  }

  static BasicTensor from(Shape shape, Array values, bool requires_grad = false) {
    if (static_cast<std::size_t>(values.size()) != shape_numel(shape)) {
      throw ShapeError("tensor", "element count", shape_numel(shape), static_cast<std::size_t>(values.size()));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return BasicTensor(std::move(node));
  }

  static BasicTensor from(Shape shape, const std::vector<Scalar>& values, bool requires_grad = false) {
    Array a = Eigen::Map<const Array>(values.data(), static_cast<Eigen::Index>(values.size()));
    return from(std::move(shape), std::move(a), requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return static_cast<std::size_t>(node_->value.size()); }

  Array& values() { return node_->value; }
  const Array& values() const { return node_->value; }
  Scalar* data() { return node_->value.data(); }
  const Scalar* data() const { return node_->value.data(); }
  Scalar item() const {
    if (numel() != 1) throw ShapeError("item", "element count", 1, numel());
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Array& grad() const { return node_->grad; }
  Array& grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.resize(0); }

  const std::string& op() const { return node_->op; }
  const std::vector<std::shared_ptr<Node>>& parents() const { return node_->parents; }
  const std::shared_ptr<Node>& node() const { return node_; }

  /// A new leaf sharing no graph history; values are copied.
  BasicTensor detach() const { return from(shape(), values(), false); }

  /// Reverse pass from a scalar output (seed 1).
  void backward() {
    if (numel() != 1) throw ShapeError("backward", "scalar output required; seed explicitly for non-scalar tensors");
    backward(Array::Ones(1));
  }

  /// Reverse pass seeded with d(loss)/d(this) = `seed`.
  void backward(const Array& seed) {
    if (seed.size() != node_->value.size()) {
      throw ShapeError("backward", "seed size", numel(), static_cast<std::size_t>(seed.size()));
    }
    std::vector<Node*> order;
    topo_sort(order);
    node_->accumulate(seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
    }
  }

 private:
  void topo_sort(std::vector<Node*>& order) const {
    std::unordered_set<const Node*> seen;
    // iterative post-order DFS; the graph is a DAG by construction
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

using Tensor = BasicTensor<float>;

namespace detail {

/// Builds an op result. When no input requires grad (or grad mode is off)
/// no graph edge is recorded and `backward_fn` is dropped.
template <typename Scalar>
BasicTensor<Scalar> make_result(Shape shape, typename BasicTensor<Scalar>::Array value, std::string op,
                                std::initializer_list<const BasicTensor<Scalar>*> inputs,
                                std::function<void(TensorNode<Scalar>&)> backward_fn) {
  auto node = std::make_shared<TensorNode<Scalar>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(op);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto* in : inputs) needs = needs || (in->defined() && in->requires_grad());
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto* in : inputs) {
      if (in->defined()) node->parents.push_back(in->node());
    }
    node->backward_fn = std::move(backward_fn);
  }
  return BasicTensor<Scalar>(std::move(node));
}

}  // namespace detail
}  // namespace anglseg
