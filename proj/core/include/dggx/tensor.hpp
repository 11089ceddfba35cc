#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dggx {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

/// One entry of the autodiff tape. A node owns the values it produced, its
/// gradient slot, references to the nodes it was computed from, and a closure
/// holding whatever the backward rule needs.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first written
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads self.grad and accumulates into the grad slots of `inputs`.
  std::function<void(const Node& self)> backward;

  std::vector<double>& grad_slot();
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Tensor is a shared handle: copies alias the same storage, as activations
/// are shared between the tape and the caller. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double value) { return Tensor(Shape{1}, value); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view. Only valid for leaves; intermediate values are frozen
  /// once their producing op has run.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;
  std::string_view op() const;

  bool has_grad() const;
  /// Gradient values; zeros of the right length when nothing was written.
  std::vector<double> grad() const;
  void zero_grad();

  /// New leaf with the same values and no history.
  Tensor detach() const;
  /// Deep copy including requires_grad; the copy is a leaf.
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Whether ops currently record onto the tape (thread-local, default on).
bool grad_enabled();

/// Disables recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Runs reverse-mode differentiation from a single-element tensor.
///
/// Gradients of every non-leaf node reachable from `loss` are recomputed from
/// zero; leaves accumulate into their existing gradient slot. Throws
/// StateError when `loss` was not produced on the tape.
void backward(const Tensor& loss);

namespace detail {

/// Builds the output node of an op: wires inputs and attaches the backward
/// rule only when recording is enabled and some input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values, std::string_view op,
                   std::vector<Tensor> inputs,
                   std::function<void(const Node& self)> backward_rule);

}  // namespace detail

}  // namespace dggx
