#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace geochem::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Node of the reverse-mode graph. Each op records its parents and a closure
/// that pushes this node's gradient into theirs.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient arrives
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    /// Zero-filled gradient buffer, allocated on first use.
    std::vector<double>& grad_buffer();
};

/// Shared handle to a graph node. Copies alias the same storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    /// Constant tensor (no gradient).
    static Tensor constant(Shape shape, std::vector<double> data);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    /// Trainable leaf.
    static Tensor parameter(Shape shape, std::vector<double> data);
    static Tensor scalar(double value);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    /// Gradient buffer (zeros when no gradient has been accumulated).
    const std::vector<double>& grad() const { return node_->grad_buffer(); }
    std::vector<double>& mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad.clear(); }

    double item() const;

    /// Reverse pass from a scalar: seeds d(self)/d(self) = 1 and accumulates
    /// into every reachable node that requires a gradient.
    void backward() const;

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Creates an op output; requires_grad is inherited from the parents.
Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);

}  // namespace geochem::nn
