#pragma once

// Dense row-major float64 tensors with a dynamic reverse-mode tape.
//
// A Tensor is a cheap handle onto a graph node. Nodes produced by an
// operation keep their parents alive until the result is dropped, so the
// graph for one loss lives exactly as long as the loss handle does.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lnsr {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first backward touches it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grad buffers.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  std::vector<double>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// 1-D tensor from values.
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  /// 2-D tensor from nested rows; all rows must have equal length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only

  std::span<const double> data() const;
  /// Writable view of a leaf's values (optimizer updates, test fixtures).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  /// Accumulated gradient; zeros when none has been computed yet.
  std::vector<double> grad() const;
  void zero_grad();

  /// Copy of the values with no graph history.
  Tensor detach() const;

  /// Same values with a different shape. Shares no graph edges with the
  /// source unless the source requires grad, in which case gradients flow.
  Tensor reshape(Shape shape) const;

  // graph internals, used by ops and backward()
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Gradients of every requires_grad leaf reached from a loss.
class GradientMap {
 public:
  bool contains(const Tensor& t) const { return grads_.contains(t.node().get()); }
  const std::vector<double>& at(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend GradientMap backward(const Tensor& loss);
  std::unordered_map<const detail::Node*, std::vector<double>> grads_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls until zero_grad()/zero_grads() is called; interior buffers are
/// recomputed on every call.
GradientMap backward(const Tensor& loss);

void zero_grads(std::span<Tensor> tensors);

/// Builds a result node. When any input requires grad, the node records
/// the inputs as parents and keeps `rule` for the backward sweep.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> rule);

}  // namespace lnsr
