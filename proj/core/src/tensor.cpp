#include "mcsttm/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "mcsttm/errors.hpp"

namespace mcsttm {

namespace {

thread_local bool g_grad_enabled = true;
std::string g_backward_fault;

detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ContractError("use of an undefined tensor");
  return *node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  }
  node_ = std::make_shared<detail::Node>();
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
  return t;
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(int axis) const {
  const auto& s = shape();
  const int r = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(s));
  }
  return s[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() { return checked(node_).data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) {
    throw DimensionError("index rank does not match shape " + shape_str(s));
  }
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range for shape " + shape_str(s));
    offset = offset * s[axis] + i;
    ++axis;
  }
  return node_->data[offset];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool flag) { checked(node_).requires_grad = flag; }

bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& n = checked(node_);
  if (n.grad.empty()) return std::vector<double>(n.data.size(), 0.0);
  return n.grad;
}

Tensor Tensor::grad_tensor() const { return Tensor(shape(), grad()); }

void Tensor::zero_grad() { checked(node_).grad.clear(); }

void Tensor::backward() const {
  const auto& n = checked(node_);
  if (n.data.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(n.shape));
  }
  Tape::record(*this).run_backward();
}

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  return Tensor(n.shape, n.data, false);
}

const char* Tensor::op_name() const { return checked(node_).op; }

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  tape.root_ = root.node();
  if (!tape.root_) throw ContractError("cannot record a tape from an undefined tensor");

  // Iterative post-order DFS; only nodes that carry gradients are kept.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(tape.root_.get(), 0);
  visited.insert(tape.root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    if (node->requires_grad) tape.order_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

void Tape::run_backward() const {
  if (!root_->requires_grad) return;
  // Intermediate gradients are scratch space: clear them before the sweep so
  // that repeated backward calls through a shared subgraph do not leak.
  for (auto* node : order_) {
    if (node->backward) node->grad.clear();
  }
  if (root_->backward) {
    root_->grad.assign(root_->data.size(), 1.0);
  } else {
    for (auto& v : root_->grad_buffer()) v += 1.0;
  }
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void set_backward_fault(std::string op_name) { g_backward_fault = std::move(op_name); }

bool backward_fault_active(const char* op_name) {
  return !g_backward_fault.empty() && g_backward_fault == op_name;
}

}  // namespace mcsttm
