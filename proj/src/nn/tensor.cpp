#include "geochem/nn/tensor.hpp"

#include <unordered_set>

#include "geochem/error.hpp"

namespace geochem::nn {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::vector<double>& Node::grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size()) {
        throw ConfigError("tensor: data length " + std::to_string(data.size()) + " does not match shape " +
                          shape_string(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    Tensor t = constant(std::move(shape), std::vector<double>(n, 0.0));
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
    Tensor t = constant(std::move(shape), std::move(data));
    t.node_->requires_grad = true;
    return t;
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

double Tensor::item() const {
    if (numel() != 1) throw ConfigError("item() on a tensor of shape " + shape_string(shape()));
    return node_->data[0];
}

void Tensor::backward() const {
    if (numel() != 1) throw ConfigError("backward() needs a scalar loss, got shape " + shape_string(shape()));
    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->shape = std::move(shape);
    node->data = std::move(data);
    for (auto& p : parents) {
        if (p.requires_grad()) node->requires_grad = true;
        node->parents.push_back(p.ptr());
    }
    if (node->requires_grad) node->backward = std::move(backward);
    return Tensor(std::move(node));
}

}  // namespace geochem::nn
