#include "dsfc/autodiff.hpp"

#include <algorithm>
#include <unordered_set>

namespace dsfc {

namespace {
thread_local int g_no_grad_depth = 0;
}

bool grad_enabled() { return g_no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (grad_enabled()) {
        bool any = false;
        for (const auto& p : parents)
            if (p.defined() && p.requires_grad()) any = true;
        if (any) {
            n->requires_grad = true;
            n->parents.reserve(parents.size());
            for (auto& p : parents)
                if (p.defined()) n->parents.push_back(p.node());
            n->backward_fn = std::move(backward_fn);
        }
    }
    return Var(std::move(n));
}

namespace {
// Iterative post-order topological sort over the parent DAG.
std::vector<Node*> topo_order(Node* root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> done;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (done.count(node)) {
            stack.pop_back();
            continue;
        }
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (!done.count(p) && p->requires_grad) stack.emplace_back(p, 0);
        } else {
            done.insert(node);
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}
} // namespace

void backward(const Var& root, const Tensor& seed) {
    DSFC_CHECK(root.defined(), "backward on undefined Var");
    DSFC_CHECK(seed.shape() == root.shape(), "backward seed shape ", seed.shape().str(),
               " does not match root ", root.shape().str());
    if (!root.requires_grad()) return;
    Node* r = root.node().get();
    Tensor& g = r->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += seed[i];
    std::vector<Node*> order = topo_order(r);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

void backward(const Var& root) {
    DSFC_CHECK(root.shape().numel() == 1, "scalar backward needs a scalar root, got ",
               root.shape().str());
    backward(root, full(root.shape(), 1.0));
}

} // namespace dsfc
