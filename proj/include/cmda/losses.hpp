#pragma once

#include <map>
#include <vector>

#include "cmda/adaptation.hpp"
#include "cmda/autograd.hpp"
#include "cmda/tensor.hpp"

namespace cmda {

struct SegLossConfig {
    std::vector<double> class_weights;  // one per class, >= 0
    double lambda = 1.0;                // Dice term weight
    double dice_eps = 1e-6;
    void validate(int num_classes) const;
};

// -sum_i sum_c w_c * y_ic * log p_ic, summed over every pixel in the batch.
// probs: (n, C, h, w) normalized per pixel; labels: (n, h, w) in [0, C).
VarPtr weighted_ce(const VarPtr& probs, const LabelBatch& labels,
                   const std::vector<double>& class_weights);

// -sum_c 2*sum_i(y_ic * p_ic) / (sum_i y_ic^2 + sum_i p_ic^2 + eps), soft
// probabilities in place of hard predictions so the term is differentiable.
VarPtr soft_dice(const VarPtr& probs, const LabelBatch& labels, double eps = 1e-6);

// weighted_ce + lambda * soft_dice
VarPtr seg_loss(const VarPtr& probs, const LabelBatch& labels, const SegLossConfig& cfg);

// -mean_b D(g): pushes adapted features toward higher critic scores.
VarPtr dam_loss(const Critic& dcm, const std::map<int, VarPtr>& features_g);

// mean_b D(g) - mean_b D(s): the critic's objective; caller clips afterwards.
VarPtr dcm_loss(const Critic& dcm, const std::map<int, VarPtr>& features_g,
                const std::map<int, VarPtr>& features_s);

// Exact empirical 1-Wasserstein distance between equal-size 1-D sample sets:
// mean |sorted(a)_i - sorted(b)_i|. Used as a critic sanity oracle.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

// Inverse-frequency class weights normalized to mean 1; zero counts are
// treated as 1 so empty classes cannot produce infinities.
std::vector<double> inverse_frequency_weights(const std::vector<long long>& counts);

}  // namespace cmda
