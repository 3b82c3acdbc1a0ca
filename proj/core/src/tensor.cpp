#include "mhri/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "mhri/errors.hpp"

namespace mhri {

namespace {

size_t checked_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimension must be positive, got " + std::to_string(d));
        n *= static_cast<size_t>(d);
    }
    return n;
}

}  // namespace

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto node = std::make_shared<detail::TensorNode>();
    node->data.assign(checked_numel(shape), 0.0);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.node()->data) v = value;
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (checked_numel(shape) != data.size()) {
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_to_string(shape));
    }
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, double stddev, RngStream& rng, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    rng.fill_normal(t.data(), static_cast<size_t>(t.numel()), stddev);
    return t;
}

double Tensor::value() const {
    if (numel() != 1) {
        throw ContractError("value() requires a scalar tensor, got shape " + shape_str());
    }
    return node_->data[0];
}

double Tensor::at(int r, int c) const {
    return node_->data[static_cast<size_t>(r) * static_cast<size_t>(dim(1)) + static_cast<size_t>(c)];
}

std::string Tensor::shape_str() const { return shape_to_string(node_->shape); }

Tensor Tensor::detach() const {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = node_->shape;
    node->data = node_->data;
    node->requires_grad = false;
    return Tensor(std::move(node));
}

void Tensor::backward() {
    if (!defined()) throw ContractError("backward() on an undefined tensor");
    if (numel() != 1) {
        throw ContractError("backward() requires a scalar root, got shape " + shape_str());
    }

    // Deterministic topological order: iterative DFS that visits parents in
    // their stored (construction) order.
    std::vector<detail::TensorNode*> topo;
    std::unordered_set<detail::TensorNode*> seen;
    struct Frame {
        detail::TensorNode* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::TensorNode* p = f.node->parents[f.next_parent++].get();
            if (seen.insert(p).second) stack.push_back({p, 0});
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    for (detail::TensorNode* n : topo) {
        if (n->requires_grad) n->ensure_grad();
    }
    node_->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        detail::TensorNode* n = *it;
        if (n->backward_fn) {
            for (auto& p : n->parents) p->ensure_grad();
            n->backward_fn();
        }
    }
}

namespace detail {

std::shared_ptr<TensorNode> make_result(std::vector<int> shape,
                                        std::vector<std::shared_ptr<TensorNode>> parents) {
    auto node = std::make_shared<TensorNode>();
    node->data.assign(checked_numel(shape), 0.0);
    node->shape = std::move(shape);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    node->requires_grad = rg;
    if (rg) node->parents = std::move(parents);
    return node;
}

}  // namespace detail

}  // namespace mhri
