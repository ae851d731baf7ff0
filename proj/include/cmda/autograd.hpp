#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cmda/tensor.hpp"

namespace cmda {

class Var;
using VarPtr = std::shared_ptr<Var>;

// One node of the reverse-mode tape. Ops allocate a fresh node per forward
// evaluation; leaves (parameters, inputs) persist across evaluations and
// accumulate gradients until zero_grad().
class Var {
public:
    Tensor4 value;
    std::string name;

    static VarPtr leaf(Tensor4 v, bool requires_grad, std::string name = "");
    static VarPtr constant(Tensor4 v, std::string name = "");

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool rg);

    // Gradient buffer, allocated on demand with the value's shape.
    Tensor4& grad();
    bool has_grad() const { return !grad_.empty(); }
    void zero_grad();
    void accumulate_grad(const Tensor4& g);

    const std::vector<VarPtr>& parents() const { return parents_; }

    // internal: used by ops to attach the backward closure
    static VarPtr op_node(Tensor4 v, std::vector<VarPtr> parents,
                          std::function<void(Var&)> backward, std::string name);

private:
    Tensor4 grad_;
    bool requires_grad_ = false;
    std::vector<VarPtr> parents_;
    std::function<void(Var&)> backward_;

    friend void backward(const VarPtr&);
};

// Reverse pass from a scalar root (shape (1,1,1,1)); seeds d(root)/d(root)=1
// and accumulates into every reachable node that requires grad.
void backward(const VarPtr& root);

// While alive, ops do not record the tape: results are plain constants.
// Used for feature extraction in critic updates and for evaluation.
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

}  // namespace cmda
