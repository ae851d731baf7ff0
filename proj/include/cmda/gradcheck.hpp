#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cmda/autograd.hpp"

namespace cmda {

struct GradCheckReport {
    bool pass = false;
    double max_rel_err = 0.0;
    std::string worst;  // "leaf '<name>' element <i>" for the largest error
    int checked = 0;
};

// Compares analytic gradients against central finite differences.
// `build` must construct the graph afresh from the current leaf values and
// return the scalar loss; the harness perturbs leaf values in place.
// rel = |analytic − numeric| / max(|analytic|, |numeric|, 1e-3); pass iff the
// max over all checked elements is ≤ tol. Non-finite values fail with a
// location. `max_per_leaf` > 0 subsamples that many elements per leaf.
GradCheckReport grad_check(const std::function<VarPtr()>& build,
                           const std::vector<VarPtr>& leaves,
                           double eps = 1e-3, double tol = 1e-4,
                           int max_per_leaf = 0, uint64_t subsample_seed = 17);

}  // namespace cmda
