#pragma once

#include <vector>

#include "cmda/autograd.hpp"

namespace cmda {

// base * decay^floor(step / every)
double stepped_lr(double base, double decay, long long every, long long step);

class Adam {
public:
    explicit Adam(std::vector<VarPtr> params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(double lr);  // consumes current grads; skips params without one
    void zero_grad();
    long long steps() const { return t_; }

private:
    std::vector<VarPtr> params_;
    std::vector<Tensor4> m_, v_;
    double b1_, b2_, eps_;
    long long t_ = 0;
};

class RMSProp {
public:
    explicit RMSProp(std::vector<VarPtr> params, double alpha = 0.99, double eps = 1e-8);
    void step(double lr);
    void zero_grad();

private:
    std::vector<VarPtr> params_;
    std::vector<Tensor4> sq_;
    double alpha_, eps_;
};

}  // namespace cmda
