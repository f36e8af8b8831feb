#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dsfc/tensor.hpp"

namespace dsfc {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad; // allocated on first use, same shape as value
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn; // reads this->grad, accumulates into parents

    Tensor& ensure_grad() {
        if (grad.empty()) grad = Tensor(value.shape());
        return grad;
    }
};

/// Handle to a node in the computation graph. Value semantics; copies share
/// the node. Graphs are built by the free functions in ops.hpp and freed when
/// the last handle to the root goes away.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : n_(std::move(n)) {}

    static Var leaf(Tensor v, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->value = std::move(v);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& value() const { return n_->value; }
    Tensor& value() { return n_->value; }
    const Shape& shape() const { return n_->value.shape(); }
    bool requires_grad() const { return n_->requires_grad; }
    Tensor& grad() { return n_->ensure_grad(); }
    bool has_grad() const { return !n_->grad.empty(); }
    void zero_grad() {
        if (!n_->grad.empty()) n_->grad.fill(0.0);
    }
    const NodePtr& node() const { return n_; }

private:
    NodePtr n_;
};

/// While a guard is alive, ops compute values only: no parents are retained
/// and no backward closures are created.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Reverse-mode sweep from a scalar root (seeds d root = 1).
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

/// Helper for op implementations: wires value/parents/closure respecting
/// grad mode. The closure is dropped when no parent requires a gradient.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

} // namespace dsfc
