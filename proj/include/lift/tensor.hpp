#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lift/errors.hpp"
#include "lift/rng.hpp"

namespace lift {

namespace detail {

// One vertex of the computation graph. Values are computed eagerly when an
// op is applied; backward_fn reads this node's grad and accumulates into the
// inputs' grads.
struct Node {
    std::string op;
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first touched
    bool requires_grad = false;
    bool track = false;  // participates in a backward pass
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    std::int64_t numel() const { return std::int64_t(values.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};

}  // namespace detail

// Disables gradient tracking for ops applied while an instance is alive.
// Used for inference over frozen parameters and for finite differencing.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
    static bool active();
};

// Dense row-major tensor of 64-bit floats with reverse-mode gradients.
// Value-semantic handle to a shared graph node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor uniform(std::vector<int> shape, double lo, double hi, Rng& rng, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int rank() const { return int(node_->shape.size()); }
    int dim(int axis) const { return node_->shape[std::size_t(axis)]; }
    std::int64_t numel() const { return node_->numel(); }
    int rows() const;
    int cols() const;

    const std::vector<double>& values() const { return node_->values; }
    std::vector<double>& raw_values() { return node_->values; }  // leaf mutation only
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad() { node_->ensure_grad(); std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }
    void clear_grad() { node_->grad.clear(); }

    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

// Generic op constructor: computes nothing itself, just wires the graph.
// backward_fn may be empty for non-differentiable ops. Exposed so tests can
// build custom ops (e.g. deliberately wrong gradients for negative controls).
Tensor make_op(const std::string& name, std::vector<int> shape, std::vector<double> values,
               const std::vector<Tensor>& inputs, std::function<void(detail::Node&)> backward_fn);

// --- forward primitives -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);       // (n,k) x (k,m) -> (n,m)
Tensor add(const Tensor& a, const Tensor& b);           // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);           // elementwise
Tensor scale(const Tensor& a, double factor);
Tensor add_row_bias(const Tensor& x, const Tensor& bias);  // bias broadcast over rows
Tensor row_scale(const Tensor& x, const Tensor& gains);    // gains broadcast over rows
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor transpose(const Tensor& x);
Tensor gather_rows(const Tensor& x, const std::vector<int>& row_ids);
Tensor slice_cols(const Tensor& x, int begin, int end);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor softmax_rows(const Tensor& x);                   // last axis, max-subtracted
Tensor layer_norm_rows(const Tensor& x, double eps);    // last axis, no affine
Tensor gelu(const Tensor& x);                           // exact erf form
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor bce_loss(const Tensor& probs, const std::vector<double>& targets);  // mean, eps-clamped
Tensor mean_all(const Tensor& x);
Tensor sum_all(const Tensor& x);

// Inner products of all unordered field pairs, lexicographic pair order,
// applied row-wise to an (n, field_count*embed_dim) matrix.
Tensor pairwise_inner_products(const Tensor& rows, int field_count, int embed_dim);

// Populate grads of every tracked tensor reachable from a scalar loss.
void backward(const Tensor& loss);

}  // namespace lift
