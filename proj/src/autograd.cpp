#include "cmda/autograd.hpp"

#include <unordered_set>

#include "cmda/common.hpp"

namespace cmda {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

VarPtr Var::leaf(Tensor4 v, bool requires_grad, std::string name) {
    auto node = std::make_shared<Var>();
    node->value = std::move(v);
    node->requires_grad_ = requires_grad;
    node->name = std::move(name);
    return node;
}

VarPtr Var::constant(Tensor4 v, std::string name) {
    return leaf(std::move(v), false, std::move(name));
}

VarPtr Var::op_node(Tensor4 v, std::vector<VarPtr> parents,
                    std::function<void(Var&)> backward, std::string name) {
    auto node = std::make_shared<Var>();
    node->value = std::move(v);
    node->name = std::move(name);
    bool any = false;
    for (const auto& p : parents) {
        if (p && p->requires_grad_) any = true;
    }
    if (any && g_grad_enabled) {
        node->requires_grad_ = true;
        node->parents_ = std::move(parents);
        node->backward_ = std::move(backward);
    }
    return node;
}

void Var::set_requires_grad(bool rg) {
    if (!parents_.empty())
        contract_fail("set_requires_grad: only leaves may be toggled (node '", name, "' has parents)");
    requires_grad_ = rg;
    if (!rg) grad_ = Tensor4();
}

Tensor4& Var::grad() {
    if (grad_.empty()) grad_ = Tensor4(value.shape, 0.0);
    return grad_;
}

void Var::zero_grad() { grad_ = Tensor4(); }

void Var::accumulate_grad(const Tensor4& g) {
    if (!(g.shape == value.shape))
        contract_fail("accumulate_grad: shape ", g.shape.str(), " vs value ", value.shape.str(),
                      " on node '", name, "'");
    Tensor4& dst = grad();
    for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
}

void backward(const VarPtr& root) {
    if (!root) contract_fail("backward: null root");
    if (root->value.shape.numel() != 1)
        contract_fail("backward: root must be scalar, got shape ", root->value.shape.str());
    if (!root->requires_grad_) return;

    // Topological order via iterative post-order DFS over the recorded graph.
    std::vector<Var*> order;
    std::unordered_set<Var*> seen;
    std::vector<std::pair<Var*, size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents_.size()) {
            Var* parent = node->parents_[idx].get();
            ++idx;
            if (parent && parent->requires_grad_ && !seen.count(parent)) {
                seen.insert(parent);
                stack.push_back({parent, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Var* node = *it;
        if (node->backward_ && node->has_grad()) node->backward_(*node);
    }
}

}  // namespace cmda
