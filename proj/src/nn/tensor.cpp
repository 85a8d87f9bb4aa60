#include "esmhc/nn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "esmhc/errors.hpp"

namespace esmhc::nn {

namespace {

thread_local bool g_grad_enabled = true;

void check_defined(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw std::logic_error("use of undefined tensor");
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto n = shape_numel(shape);
  return from_values(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<float> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const {
  check_defined(node_);
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const float> Tensor::values() const {
  check_defined(node_);
  return node_->value;
}

std::span<float> Tensor::mutable_values() {
  check_defined(node_);
  if (!node_->leaf) throw std::logic_error("op results are immutable");
  return node_->value;
}

float Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

std::span<const float> Tensor::grad() const {
  check_defined(node_);
  return node_->grad;
}

bool Tensor::requires_grad() const {
  check_defined(node_);
  return node_->requires_grad;
}

void Tensor::zero_grad() {
  check_defined(node_);
  node_->grad.clear();
}

Tensor Tensor::detach() const {
  check_defined(node_);
  return from_values(node_->shape, node_->value, false);
}

void Tensor::backward() const {
  check_defined(node_);
  if (numel() != 1) throw DimensionError("backward() needs a scalar, got " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (!node->leaf) node->grad.clear();
  }
  auto& root = node_->grad;
  root.assign(1, 0.0f);
  root[0] += 1.0f;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->leaf || node->grad.empty() || !node->backward) continue;
    BackwardContext ctx(*node);
    node->backward(ctx);
  }
}

std::span<const float> BackwardContext::input(std::size_t i) const {
  return self_.inputs.at(i)->value;
}

const Shape& BackwardContext::input_shape(std::size_t i) const {
  return self_.inputs.at(i)->shape;
}

bool BackwardContext::needs_grad(std::size_t i) const {
  return self_.inputs.at(i)->requires_grad;
}

std::span<float> BackwardContext::input_grad(std::size_t i) {
  auto& in = *self_.inputs.at(i);
  if (in.grad.empty()) in.grad.assign(in.value.size(), 0.0f);
  return in.grad;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor record(const char* op, Shape shape, std::vector<float> values,
              std::vector<Tensor> inputs, BackwardFn backward) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError(std::string(op) + ": result shape " + shape_str(shape) +
                         " does not match value count");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->leaf = false;
  node->op = op;

  bool track = false;
  if (g_grad_enabled) {
    for (const auto& t : inputs) {
      check_defined(t.node_);
      track = track || t.node_->requires_grad;
    }
  }
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace esmhc::nn
