#include "dggx/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "dggx/errors.hpp"

namespace dggx {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

std::vector<double>& Node::grad_slot() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

thread_local bool t_grad_enabled = true;

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
}

detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw StateError("use of an undefined tensor");
  return *node;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) {
  check_shape(shape);
  node_ = std::make_shared<detail::Node>();
  node_->data.assign(dggx::numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  check_shape(shape);
  if (dggx::numel(shape) != values.size()) {
    throw ShapeError("shape " + dggx::to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + dggx::to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() {
  auto& n = checked(node_);
  if (n.backward) throw StateError("cannot mutate the output of a recorded op");
  return n.data;
}

double Tensor::item() const {
  const auto& n = checked(node_);
  if (n.data.size() != 1) throw ShapeError("item() requires a single-element tensor");
  return n.data[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  auto& n = checked(node_);
  if (n.backward && !flag) throw StateError("cannot clear requires_grad on a recorded op output");
  n.requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return !checked(node_).backward; }

std::string_view Tensor::op() const { return checked(node_).op; }

bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& n = checked(node_);
  if (n.grad.empty()) return std::vector<double>(n.data.size(), 0.0);
  return n.grad;
}

void Tensor::zero_grad() { checked(node_).grad.clear(); }

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  return Tensor(n.shape, n.data);
}

Tensor Tensor::clone() const {
  Tensor copy = detach();
  copy.node_->requires_grad = checked(node_).requires_grad;
  copy.node_->grad = node_->grad;
  return copy;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> values, std::string_view op,
                   std::vector<Tensor> inputs,
                   std::function<void(const Node& self)> backward_rule) {
  Tensor out(std::move(shape), std::move(values));
  const bool track =
      t_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                    [](const Tensor& t) { return t.requires_grad(); });
  auto& node = *out.node();
  node.op = op;
  if (track) {
    node.requires_grad = true;
    node.inputs.reserve(inputs.size());
    for (auto& in : inputs) node.inputs.push_back(in.node());
    node.backward = std::move(backward_rule);
  }
  return out;
}

}  // namespace detail

void backward(const Tensor& loss) {
  if (!loss.defined()) throw StateError("backward on an undefined tensor");
  const auto& root = loss.node();
  if (!root->requires_grad) throw StateError("backward on a tensor that is not on the tape");
  if (root->data.size() != 1) {
    throw StateError("backward requires a single-element loss, got shape " +
                     to_string(root->shape));
  }

  // Iterative post-order DFS gives a topological order with inputs first.
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (node->backward) node->grad.assign(node->data.size(), 0.0);
  }
  root->grad_slot()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

}  // namespace dggx
