#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mcsttm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the differentiation graph. Leaves have no inputs and no
// backward rule; every op output owns shared references to its inputs.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  std::vector<double>& grad_buffer();
};

}  // namespace detail

// Dense row-major array of doubles with optional gradient tracking.
//
// Copies are shallow: two Tensor handles may refer to the same storage, the
// same way a parameter is shared between the model and the optimizer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable view of the storage. Only meaningful on leaves; ops that
  // already consumed the tensor keep their recorded result.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  // Gradient view; zeros are reported when nothing has been accumulated.
  std::vector<double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  // Reverse-mode sweep from this scalar. Gradients accumulate.
  void backward() const;

  Tensor detach() const;
  const char* op_name() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of the operations reachable from a root tensor. Inputs always
// precede the operations that consume them.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  const std::vector<detail::Node*>& order() const { return order_; }

  // Seeds the root gradient with ones and runs every backward rule once in
  // reverse order.
  void run_backward() const;

 private:
  std::vector<detail::Node*> order_;
  std::shared_ptr<detail::Node> root_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Test hook: when set to an op name, that op's backward rule scales its
// input gradients by a wrong factor. Used to prove the gradient checker
// notices broken rules. Empty string disables.
void set_backward_fault(std::string op_name);
bool backward_fault_active(const char* op_name);

}  // namespace mcsttm
