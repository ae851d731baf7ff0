#include "cmda/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cmda/common.hpp"
#include "cmda/ops.hpp"

namespace cmda {

namespace {
constexpr double kProbFloor = 1e-300;  // underflow guard only; inert at sane scales

void check_probs_labels(const VarPtr& probs, const LabelBatch& labels, int expect_c) {
    if (!probs) contract_fail("loss: null probs");
    const Shape4& s = probs->value.shape;
    if (expect_c > 0 && s.c != expect_c)
        contract_fail("loss: probs have ", s.c, " classes, weights have ", expect_c);
    if (s.n != labels.n || s.h != labels.h || s.w != labels.w)
        contract_fail("loss: probs ", s.str(), " vs labels (", labels.n, ",", labels.h, ",",
                      labels.w, ")");
    for (uint8_t v : labels.data)
        if (v >= s.c) contract_fail("loss: label value ", int(v), " outside [0,", s.c, ")");
}
}  // namespace

void SegLossConfig::validate(int num_classes) const {
    if (static_cast<int>(class_weights.size()) != num_classes)
        contract_fail("SegLossConfig: ", class_weights.size(), " class weights for ",
                      num_classes, " classes");
    for (double w : class_weights)
        if (!(w >= 0.0)) contract_fail("SegLossConfig: class weights must be >= 0");
    if (!(lambda >= 0.0)) contract_fail("SegLossConfig: lambda must be >= 0");
    if (!(dice_eps > 0.0)) contract_fail("SegLossConfig: dice_eps must be > 0");
}

VarPtr weighted_ce(const VarPtr& probs, const LabelBatch& labels,
                   const std::vector<double>& class_weights) {
    check_probs_labels(probs, labels, static_cast<int>(class_weights.size()));
    for (double w : class_weights)
        if (!(w >= 0.0)) contract_fail("weighted_ce: class weights must be >= 0");
    const Shape4& s = probs->value.shape;
    double acc = 0.0;
    for (int n = 0; n < s.n; ++n)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                const int c = labels.at(n, y, x);
                const double p = std::max(probs->value.at(n, c, y, x), kProbFloor);
                acc -= class_weights[c] * std::log(p);
            }
    VarPtr pp = probs;
    LabelBatch lab = labels;
    std::vector<double> w = class_weights;
    return Var::op_node(Tensor4::scalar(acc), {probs}, [pp, lab, w](Var& self) {
        if (!pp->requires_grad()) return;
        const double g = self.grad().data[0];
        const Shape4& s = pp->value.shape;
        Tensor4& dp = pp->grad();
        for (int n = 0; n < s.n; ++n)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    const int c = lab.at(n, y, x);
                    const double p = std::max(pp->value.at(n, c, y, x), kProbFloor);
                    dp.at(n, c, y, x) -= g * w[c] / p;
                }
    }, "weighted_ce");
}

VarPtr soft_dice(const VarPtr& probs, const LabelBatch& labels, double eps) {
    check_probs_labels(probs, labels, 0);
    if (!(eps > 0.0)) contract_fail("soft_dice: eps must be > 0");
    const Shape4& s = probs->value.shape;

    // per-class overlap and norms over all pixels of the batch
    std::vector<double> syp(s.c, 0.0), spp(s.c, 0.0), syy(s.c, 0.0);
    for (int n = 0; n < s.n; ++n)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                const int lc = labels.at(n, y, x);
                syy[lc] += 1.0;
                for (int c = 0; c < s.c; ++c) {
                    const double p = probs->value.at(n, c, y, x);
                    spp[c] += p * p;
                    if (c == lc) syp[c] += p;
                }
            }
    double acc = 0.0;
    std::vector<double> denom(s.c);
    for (int c = 0; c < s.c; ++c) {
        denom[c] = syy[c] + spp[c] + eps;
        acc -= 2.0 * syp[c] / denom[c];
    }

    VarPtr pp = probs;
    LabelBatch lab = labels;
    return Var::op_node(Tensor4::scalar(acc), {probs},
                        [pp, lab, syp, denom](Var& self) {
        if (!pp->requires_grad()) return;
        const double g = self.grad().data[0];
        const Shape4& s = pp->value.shape;
        Tensor4& dp = pp->grad();
        // d/dp_ic of -2*A_c/B_c with A = sum(y p), B = syy + sum(p^2) + eps:
        // (-2*y_ic*B_c + 4*A_c*p_ic) / B_c^2
        for (int n = 0; n < s.n; ++n)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    const int lc = lab.at(n, y, x);
                    for (int c = 0; c < s.c; ++c) {
                        const double p = pp->value.at(n, c, y, x);
                        const double yic = (c == lc) ? 1.0 : 0.0;
                        dp.at(n, c, y, x) +=
                            g * (-2.0 * yic * denom[c] + 4.0 * syp[c] * p) /
                            (denom[c] * denom[c]);
                    }
                }
    }, "soft_dice");
}

VarPtr seg_loss(const VarPtr& probs, const LabelBatch& labels, const SegLossConfig& cfg) {
    if (!probs) contract_fail("seg_loss: null probs");
    cfg.validate(probs->value.shape.c);
    VarPtr ce = weighted_ce(probs, labels, cfg.class_weights);
    if (cfg.lambda == 0.0) return ce;
    return add(ce, scale(soft_dice(probs, labels, cfg.dice_eps), cfg.lambda));
}

VarPtr dam_loss(const Critic& dcm, const std::map<int, VarPtr>& features_g) {
    return neg(mean_all(dcm.forward(features_g)));
}

VarPtr dcm_loss(const Critic& dcm, const std::map<int, VarPtr>& features_g,
                const std::map<int, VarPtr>& features_s) {
    return sub(mean_all(dcm.forward(features_g)), mean_all(dcm.forward(features_s)));
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || a.size() != b.size())
        contract_fail("wasserstein_1d: need equal nonempty sizes, got ", a.size(), " and ",
                      b.size());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

std::vector<double> inverse_frequency_weights(const std::vector<long long>& counts) {
    if (counts.empty()) contract_fail("inverse_frequency_weights: no classes");
    for (long long c : counts)
        if (c < 0) contract_fail("inverse_frequency_weights: negative count ", c);
    std::vector<double> w(counts.size());
    for (size_t c = 0; c < counts.size(); ++c)
        w[c] = 1.0 / static_cast<double>(std::max<long long>(1, counts[c]));
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    for (double& v : w) v /= mean;
    return w;
}

}  // namespace cmda
