#include "cmda/optim.hpp"

#include <cmath>

#include "cmda/common.hpp"

namespace cmda {

double stepped_lr(double base, double decay, long long every, long long step) {
    if (every < 1) contract_fail("stepped_lr: every must be >= 1");
    if (step < 0) contract_fail("stepped_lr: negative step");
    return base * std::pow(decay, static_cast<double>(step / every));
}

Adam::Adam(std::vector<VarPtr> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p->value.shape, 0.0);
        v_.emplace_back(p->value.shape, 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Var& p = *params_[i];
        if (!p.requires_grad() || !p.has_grad()) continue;
        const Tensor4& g = p.grad();
        for (size_t j = 0; j < g.data.size(); ++j) {
            const double gj = g.data[j];
            m_[i].data[j] = b1_ * m_[i].data[j] + (1.0 - b1_) * gj;
            v_[i].data[j] = b2_ * v_[i].data[j] + (1.0 - b2_) * gj * gj;
            const double mhat = m_[i].data[j] / c1;
            const double vhat = v_[i].data[j] / c2;
            p.value.data[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

RMSProp::RMSProp(std::vector<VarPtr> params, double alpha, double eps)
    : params_(std::move(params)), alpha_(alpha), eps_(eps) {
    sq_.reserve(params_.size());
    for (const auto& p : params_) sq_.emplace_back(p->value.shape, 0.0);
}

void RMSProp::step(double lr) {
    for (size_t i = 0; i < params_.size(); ++i) {
        Var& p = *params_[i];
        if (!p.requires_grad() || !p.has_grad()) continue;
        const Tensor4& g = p.grad();
        for (size_t j = 0; j < g.data.size(); ++j) {
            const double gj = g.data[j];
            sq_[i].data[j] = alpha_ * sq_[i].data[j] + (1.0 - alpha_) * gj * gj;
            p.value.data[j] -= lr * gj / (std::sqrt(sq_[i].data[j]) + eps_);
        }
    }
}

void RMSProp::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

}  // namespace cmda
