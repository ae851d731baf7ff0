#pragma once

#include <map>
#include <vector>

#include "cmda/segmenter.hpp"

namespace cmda {

struct AdaptationConfig {
    int depth = 0;                 // registry index; must be a module boundary
    std::vector<int> dam_taps;     // A: indices <= depth, read from the DAM
    std::vector<int> frozen_taps;  // H: indices > depth, read from the frozen tail
    double clip_c = 0.03;
    int n_dcm_per_dam = 20;
    int critic_width_cap = 128;

    // A = {depth}, H = model's default frozen taps above `depth`.
    static AdaptationConfig defaults_for(const Segmenter& m, int depth);
    void validate(const Segmenter& m) const;
    std::vector<int> all_taps() const;  // A ∪ H, ascending
    int max_tap() const;
};

// Trainable copy of the source network's first `depth` layers. The topology
// lives in the source model; only parameters are duplicated here.
struct DomainAdapter {
    int depth = 0;
    ParamStore params;
};

DomainAdapter build_dam(const Segmenter& source, int depth);

// Runs the full network with layers 1..depth taken from the DAM and the rest
// from the (frozen) source, returning probs and the A ∪ H feature taps.
// `upto` > 0 stops early (feature extraction without the decoder).
ForwardResult adapted_forward(const DomainAdapter& dam, const Segmenter& source,
                              const VarPtr& x, const AdaptationConfig& cfg,
                              int upto = 0);

// Wasserstein critic over concatenated multi-level feature taps. Stages run
// from the largest tap resolution down, doubling channel width per stage up
// to the cap; each tap joins the stage whose input resolution matches it
// (average-pooled down when nothing matches). Head = global average pool +
// 1x1 linear to one scalar per sample.
struct CriticStage {
    int in_h = 0, in_w = 0;
    std::vector<int> taps;  // segmenter tap indices injected here, ascending
    bool entry = false;     // plain conv; otherwise a stride-2 residual block
    int c1 = 0, proj = 0, c2 = 0;  // critic registry indices (entry: c1 only)
};

struct Critic {
    std::vector<CriticStage> plan;
    int head_layer = 0;
    std::vector<LayerEntry> registry;  // critic-local, 1-based
    ParamStore params;
    std::map<int, Shape4> expected;  // tap index -> (c,h,w) contract (n free)

    VarPtr forward(const std::map<int, VarPtr>& features) const;
};

Critic build_dcm(const AdaptationConfig& cfg,
                 const std::map<int, Shape4>& feature_shapes, uint64_t seed);

// In-place projection of every critic parameter onto [-c, c].
void clip_weights(Critic& dcm, double c);

// Largest |parameter| over the critic, for logging and invariant checks.
double max_abs_param(const Critic& dcm);

}  // namespace cmda
