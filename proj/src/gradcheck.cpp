#include "cmda/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmda/common.hpp"

namespace cmda {

GradCheckReport grad_check(const std::function<VarPtr()>& build,
                           const std::vector<VarPtr>& leaves,
                           double eps, double tol, int max_per_leaf,
                           uint64_t subsample_seed) {
    if (eps <= 0.0) contract_fail("grad_check: eps must be > 0");
    GradCheckReport rep;

    for (const auto& l : leaves) l->zero_grad();
    VarPtr loss = build();
    if (loss->value.shape.numel() != 1)
        contract_fail("grad_check: build() must return a scalar, got ",
                      loss->value.shape.str());
    backward(loss);

    // snapshot analytic gradients before perturbing anything
    std::vector<Tensor4> analytic;
    analytic.reserve(leaves.size());
    for (const auto& l : leaves)
        analytic.push_back(l->has_grad() ? l->grad() : Tensor4(l->value.shape, 0.0));

    Rng pick(subsample_seed);
    auto eval = [&]() -> double {
        NoGradGuard ng;
        return build()->value.data[0];
    };

    rep.pass = true;
    for (size_t li = 0; li < leaves.size(); ++li) {
        Var& leaf = *leaves[li];
        const size_t count = leaf.value.data.size();
        std::vector<size_t> idx(count);
        std::iota(idx.begin(), idx.end(), 0);
        if (max_per_leaf > 0 && count > static_cast<size_t>(max_per_leaf)) {
            // partial Fisher-Yates: first max_per_leaf entries become the sample
            for (int k = 0; k < max_per_leaf; ++k) {
                const size_t j = k + static_cast<size_t>(
                    pick.uniform_int(0, static_cast<int>(count - 1 - k)));
                std::swap(idx[k], idx[j]);
            }
            idx.resize(max_per_leaf);
        }
        for (size_t i : idx) {
            const double a = analytic[li].data[i];
            const double orig = leaf.value.data[i];
            leaf.value.data[i] = orig + eps;
            const double fp = eval();
            leaf.value.data[i] = orig - eps;
            const double fm = eval();
            leaf.value.data[i] = orig;
            const double num = (fp - fm) / (2.0 * eps);
            ++rep.checked;
            if (!std::isfinite(a) || !std::isfinite(num)) {
                rep.pass = false;
                rep.max_rel_err = std::numeric_limits<double>::infinity();
                rep.worst = strmsg("leaf '", leaf.name, "' element ", i, " non-finite (analytic ",
                                   a, ", numeric ", num, ")");
                return rep;
            }
            const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-3});
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = strmsg("leaf '", leaf.name, "' element ", i, " analytic ", a,
                                   " numeric ", num);
            }
        }
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace cmda
