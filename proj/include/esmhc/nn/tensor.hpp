#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace esmhc::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

}  // namespace detail

/// Handle to a node of the dynamic autodiff graph. Copies share the node.
///
/// Values are float32, row-major. Only leaves (parameters, inputs) may be
/// written in place; op results are immutable.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<float> values,
                            bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const float> values() const;
  std::span<float> mutable_values();
  float item() const;

  /// Accumulated gradient; empty when nothing has flowed back yet.
  std::span<const float> grad() const;
  bool requires_grad() const;
  void zero_grad();

  /// Reverse sweep from this scalar. Leaves accumulate into grad().
  void backward() const;

  /// Leaf copy of the values, cut from the graph.
  Tensor detach() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  friend Tensor record(const char*, Shape, std::vector<float>,
                       std::vector<Tensor>, BackwardFn);

  std::shared_ptr<detail::Node> node_;
};

/// View handed to an op's backward closure.
class BackwardContext {
 public:
  BackwardContext(detail::Node& self) : self_(self) {}

  std::span<const float> out_grad() const { return self_.grad; }
  std::span<const float> output() const { return self_.value; }
  std::span<const float> input(std::size_t i) const;
  const Shape& input_shape(std::size_t i) const;
  bool needs_grad(std::size_t i) const;
  /// Gradient buffer of input i, zero-filled on first touch. Accumulate into it.
  std::span<float> input_grad(std::size_t i);

 private:
  detail::Node& self_;
};

bool grad_enabled();

/// Disables graph recording for its lifetime (inference, finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates the result of an op. Throws NumericError when any value is
/// non-finite. The backward closure is kept only when recording is on and at
/// least one input requires grad.
Tensor record(const char* op, Shape shape, std::vector<float> values,
              std::vector<Tensor> inputs, BackwardFn backward);

}  // namespace esmhc::nn
