#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cmda/adaptation.hpp"
#include "cmda/dataset.hpp"
#include "cmda/losses.hpp"
#include "cmda/segmenter.hpp"

namespace cmda {

struct SourceTrainConfig {
    int batch_size = 5;
    double lr = 1e-3;
    double lr_decay = 0.95;
    long long lr_every = 1500;
    long long max_iters = 2000;
    uint64_t seed = 0;
    double lambda_dice = 1.0;
    bool augment_slices = true;
    long long log_every = 25;
    void validate() const;
};

struct AdversarialTrainConfig {
    double lr = 3e-4;
    double lr_decay = 0.98;
    long long lr_every = 100;
    double clip_c = 0.03;
    int n_dcm_per_dam = 20;
    long long max_joint_updates = 200;
    int batch_size = 5;
    uint64_t seed = 0;
    // The update-ratio sentence reads both ways; false = many critic steps
    // per adapter step (the WGAN-style default), true = the inverse.
    bool swap_update_ratio = false;
    long long log_every = 5;
    // Observer fired after every optimizer update (each critic step and each
    // adapter step): joint-update index, lr in effect, max |DCM parameter|.
    std::function<void(long long ju, double lr, double max_abs_dcm)> on_update;
    void validate() const;
};

struct TrainSourceResult {
    std::vector<double> loss_curve;  // one entry per iteration
    long long iters_run = 0;
    double final_lr = 0.0;
};

// Supervised training on labeled slices: Adam on weighted cross-entropy +
// soft Dice, stepped learning-rate decay, per-iteration CSV log at
// <out_dir>/source_curve.csv. Non-finite loss aborts with the last finite
// iteration's parameters saved to <out_dir>/last_good.ckpt.
TrainSourceResult train_source(Segmenter& model, const LoadedDataset& train_set,
                               const SourceTrainConfig& cfg, const std::string& out_dir);

struct AdaptResult {
    DomainAdapter dam;
    Critic dcm;
    std::vector<double> critic_curve;  // -dcm_loss after each joint update
    long long joint_updates_run = 0;
    long long dcm_steps = 0;
    long long dam_steps = 0;
};

// Alternating Wasserstein adaptation. Per joint update: n_dcm_per_dam critic
// steps (features detached, weights clipped to ±clip_c after every step),
// then one adapter step through the frozen source tail. RMSProp, stepped
// decay per joint update. The source model's parameters are never updated.
// CSV log at <out_dir>/adapt_curve.csv.
AdaptResult adapt_adversarial(const Segmenter& source, const LoadedDataset& src_set,
                              const LoadedDataset& tgt_set,
                              const AdversarialTrainConfig& adv,
                              const AdaptationConfig& adapt_cfg, const std::string& out_dir);

}  // namespace cmda
