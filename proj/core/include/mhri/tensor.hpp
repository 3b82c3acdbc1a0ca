#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mhri/rng.hpp"

namespace mhri {

namespace detail {

/// Graph node behind a Tensor handle. Edges point from results to their
/// operands only, so the graph is an acyclic DAG freed by shared_ptr once
/// the handles go out of scope.
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched by backward()
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Called with this node's grad already populated; accumulates into the
    // parents' grads. Captures parent pointers plus a raw self pointer (the
    // closure lives inside the node it refers to).
    std::function<void()> backward_fn;

    size_t numel() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

/**
 * Dense 64-bit tensor with reverse-mode differentiation.
 *
 * Value-semantic handle over a shared graph node. Tensors are immutable
 * after the forward op that produced them; backward() walks the graph from
 * a scalar root in a fixed topological order, so gradient accumulation is
 * bit-deterministic in single-threaded use.
 */
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(std::vector<int> shape, double stddev, RngStream& rng,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int numel() const { return static_cast<int>(node_->data.size()); }

    double* data() { return node_->data.data(); }
    const double* data() const { return node_->data.data(); }
    std::vector<double>& data_vec() { return node_->data; }
    const std::vector<double>& data_vec() const { return node_->data; }

    /// Value of a scalar (1-element) tensor.
    double value() const;
    /// Row-major element access for 2-D tensors.
    double at(int r, int c) const;

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const { return node_->grad; }
    std::vector<double>& grad() { return node_->grad; }

    /// Zeroes (and allocates) this tensor's gradient buffer.
    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    /// Reverse-mode sweep from a scalar root. Seeds d(root)/d(root) = 1 and
    /// accumulates into every reachable requires_grad leaf. One sweep per
    /// graph; repeated calls keep accumulating.
    void backward();

    /// Same values, detached from the graph (no gradient flows through).
    Tensor detach() const;

    std::string shape_str() const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::TensorNode> node_;
};

/// Formats a shape like [m, n] for error messages.
std::string shape_to_string(const std::vector<int>& shape);

namespace detail {
/// Allocates a result node wired to its parents; requires_grad is inherited.
std::shared_ptr<TensorNode> make_result(std::vector<int> shape,
                                        std::vector<std::shared_ptr<TensorNode>> parents);
}  // namespace detail

}  // namespace mhri
