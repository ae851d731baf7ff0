#include "cmda/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <utility>

#include "cmda/checkpoint.hpp"
#include "cmda/optim.hpp"

namespace cmda {

namespace {

void check_positive(double v, const char* what) {
    if (!(v > 0)) contract_fail(what, " must be positive, got ", v);
}

// Plain value snapshot of a parameter store, for last-good recovery.
std::vector<Tensor4> snapshot(const ParamStore& ps) {
    std::vector<Tensor4> out;
    for (const auto& p : ps.all()) out.push_back(p->value);
    return out;
}

void restore(ParamStore& ps, const std::vector<Tensor4>& snap) {
    auto vars = ps.all();
    if (vars.size() != snap.size()) contract_fail("parameter snapshot size mismatch");
    for (size_t i = 0; i < vars.size(); ++i) vars[i]->value = snap[i];
}

// Input geometry shared by every case of a loaded split.
void check_cases(const LoadedDataset& set, bool need_labels, const char* what) {
    if (set.cases.empty()) contract_fail(what, " split is empty");
    int d = set.cases[0].vol.d, h = set.cases[0].vol.h, w = set.cases[0].vol.w;
    if (d < 3) contract_fail(what, " volumes need at least 3 slices, got ", d);
    for (const auto& c : set.cases) {
        if (c.vol.d != d || c.vol.h != h || c.vol.w != w)
            contract_fail(what, " case ", c.name, " has inconsistent shape");
        if (need_labels && !c.has_labels)
            contract_fail(what, " case ", c.name, " has no labels");
    }
}

// Stacks `batch` random (case, slice) draws into one (B,3,h,w) tensor.
// Labels, when requested, come from the middle slice; augmentation applies
// the same affine to image and labels.
void fill_batch(const LoadedDataset& set, int batch, bool with_labels, bool augmented,
                Rng& rng, Tensor4* x, LabelBatch* y) {
    int d = set.cases[0].vol.d;
    int h = set.cases[0].vol.h, w = set.cases[0].vol.w;
    size_t plane = static_cast<size_t>(h) * w;

    for (int b = 0; b < batch; ++b) {
        int ci = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(set.cases.size()) - 1));
        int zi = static_cast<int>(rng.uniform_int(1, d - 2));
        const LoadedCase& c = set.cases[ci];

        Tensor4 xs;
        LabelBatch ys;
        if (with_labels) {
            auto pair = sample_stack(c.vol, c.labels, zi);
            xs = std::move(pair.first);
            ys = std::move(pair.second);
            if (augmented) {
                auto aug = augment(xs, ys, rng.next_u64());
                xs = std::move(aug.first);
                ys = std::move(aug.second);
            }
        } else {
            xs = sample_stack_clamped(c.vol, zi);
        }

        for (int ch = 0; ch < 3; ++ch)
            std::copy_n(&xs.data[static_cast<size_t>(ch) * plane], plane,
                        &x->data[(static_cast<size_t>(b) * 3 + ch) * plane]);
        if (with_labels) std::copy_n(ys.data.data(), plane, &y->data[b * plane]);
    }
}

}  // namespace

void SourceTrainConfig::validate() const {
    if (batch_size < 1) contract_fail("batch_size must be >= 1, got ", batch_size);
    check_positive(lr, "lr");
    check_positive(lr_decay, "lr_decay");
    if (lr_every < 1) contract_fail("lr_every must be >= 1, got ", lr_every);
    if (max_iters < 1) contract_fail("max_iters must be >= 1, got ", max_iters);
    if (lambda_dice < 0) contract_fail("lambda_dice must be >= 0, got ", lambda_dice);
}

void AdversarialTrainConfig::validate() const {
    check_positive(lr, "lr");
    check_positive(lr_decay, "lr_decay");
    if (lr_every < 1) contract_fail("lr_every must be >= 1, got ", lr_every);
    check_positive(clip_c, "clip_c");
    if (n_dcm_per_dam < 1) contract_fail("n_dcm_per_dam must be >= 1, got ", n_dcm_per_dam);
    if (max_joint_updates < 1)
        contract_fail("max_joint_updates must be >= 1, got ", max_joint_updates);
    if (batch_size < 1) contract_fail("batch_size must be >= 1, got ", batch_size);
}

TrainSourceResult train_source(Segmenter& model, const LoadedDataset& train_set,
                               const SourceTrainConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    check_cases(train_set, true, "train");
    if (train_set.manifest.num_classes != model.cfg.num_classes)
        contract_fail("dataset has ", train_set.manifest.num_classes, " classes, model expects ",
                      model.cfg.num_classes);

    int h = train_set.cases[0].vol.h, w = train_set.cases[0].vol.w;

    // Class weighting from the training label histogram.
    std::vector<long long> counts(model.cfg.num_classes, 0);
    for (const auto& c : train_set.cases)
        for (uint8_t v : c.labels.data) ++counts[v];
    std::vector<double> weights = inverse_frequency_weights(counts);

    model.params.set_requires_grad(true);
    Adam opt(model.params.all());
    Rng rng(Rng::derive(cfg.seed, 0x50FCEull));
    CsvWriter csv(out_dir + "/source_curve.csv", {"iter", "lr", "loss", "ce", "dice"});

    TrainSourceResult res;
    std::vector<Tensor4> last_good = snapshot(model.params);
    long long last_good_iter = -1;

    Tensor4 xb(Shape4{cfg.batch_size, 3, h, w});
    LabelBatch yb(cfg.batch_size, h, w);

    for (long long iter = 0; iter < cfg.max_iters; ++iter) {
        double lr = stepped_lr(cfg.lr, cfg.lr_decay, cfg.lr_every, iter);
        fill_batch(train_set, cfg.batch_size, true, cfg.augment_slices, rng, &xb, &yb);

        auto abort_diverged = [&](const std::string& why) {
            restore(model.params, last_good);
            std::string ckpt = out_dir + "/last_good.ckpt";
            save_source_checkpoint(ckpt, model, cfg.seed,
                                   {{"iterations", last_good_iter + 1}});
            throw TrainingDiverged(strmsg("source training diverged at iteration ", iter,
                                          ": ", why, "; last good parameters saved to ",
                                          ckpt));
        };

        VarPtr ce, dice, loss;
        try {
            VarPtr x = Var::leaf(xb, false, "x");
            ForwardResult fr = forward_with_taps(model, x, {});
            ce = weighted_ce(fr.probs, yb, weights);
            dice = soft_dice(fr.probs, yb);
            loss = add(ce, scale(dice, cfg.lambda_dice));
        } catch (const NumericError& e) {
            abort_diverged(e.what());
        }

        double lv = loss->value.data[0];
        if (!std::isfinite(lv)) abort_diverged(strmsg("loss value ", lv));

        last_good = snapshot(model.params);
        last_good_iter = iter;

        backward(loss);
        opt.step(lr);
        opt.zero_grad();

        res.loss_curve.push_back(lv);
        res.final_lr = lr;
        if (csv.is_open())
            csv.row({static_cast<double>(iter), lr, lv, ce->value.data[0], dice->value.data[0]});
        if (cfg.log_every > 0 && iter % cfg.log_every == 0)
            std::fprintf(stderr, "[source] iter %lld lr %.3e loss %.4f\n",
                         static_cast<long long>(iter), lr, lv);
    }
    res.iters_run = cfg.max_iters;
    return res;
}

AdaptResult adapt_adversarial(const Segmenter& source, const LoadedDataset& src_set,
                              const LoadedDataset& tgt_set, const AdversarialTrainConfig& adv,
                              const AdaptationConfig& adapt_cfg, const std::string& out_dir) {
    adv.validate();
    adapt_cfg.validate(source);
    if (adv.clip_c != adapt_cfg.clip_c)
        contract_fail("clip_c disagrees between training (", adv.clip_c, ") and adaptation (",
                      adapt_cfg.clip_c, ") configs");
    if (adv.n_dcm_per_dam != adapt_cfg.n_dcm_per_dam)
        contract_fail("n_dcm_per_dam disagrees between training and adaptation configs");
    check_cases(src_set, false, "source");
    check_cases(tgt_set, false, "target");
    for (const auto& c : tgt_set.cases)
        if (c.has_labels)
            contract_fail("target case ", c.name, " carries labels; adaptation is unsupervised");
    if (src_set.cases[0].vol.h != tgt_set.cases[0].vol.h ||
        src_set.cases[0].vol.w != tgt_set.cases[0].vol.w)
        contract_fail("source and target slice shapes differ");

    int h = src_set.cases[0].vol.h, w = src_set.cases[0].vol.w;
    Shape4 in_shape{adv.batch_size, 3, h, w};
    std::vector<int> taps = adapt_cfg.all_taps();
    int upto = adapt_cfg.max_tap();

    // The source network only ever provides values: freeze it for the whole
    // run (and never hand its parameters to an optimizer).
    for (const VarPtr& p : source.params.all()) p->set_requires_grad(false);

    AdaptResult res;
    res.dam = build_dam(source, adapt_cfg.depth);
    res.dam.params.set_requires_grad(true);
    res.dcm = build_dcm(adapt_cfg, tap_shapes(source, in_shape, taps),
                        Rng::derive(adv.seed, 0xDC3ull));

    RMSProp opt_dcm(res.dcm.params.all());
    RMSProp opt_dam(res.dam.params.all());
    Rng rng(Rng::derive(adv.seed, 0xAD4ull));
    CsvWriter csv(out_dir + "/adapt_curve.csv",
                  {"joint_update", "lr", "critic_estimate", "dam_loss", "max_abs_dcm"});

    Tensor4 xs(in_shape), xt(in_shape);
    LabelBatch unused;
    std::vector<Tensor4> last_good = snapshot(res.dam.params);
    long long last_good_ju = -1;

    auto abort_diverged = [&](const char* stage, long long ju, double lv) {
        restore(res.dam.params, last_good);
        std::string ckpt = out_dir + "/last_good.ckpt";
        save_adapted_checkpoint(ckpt, source, res.dam, adapt_cfg, adv.seed,
                                {{"joint_updates", last_good_ju + 1},
                                 {"dcm_steps", res.dcm_steps},
                                 {"dam_steps", res.dam_steps}});
        throw TrainingDiverged(strmsg(stage, " loss is not finite at joint update ", ju,
                                      " (", lv, "); last good adapter saved to ", ckpt));
    };

    long long n_dcm = adv.swap_update_ratio ? 1 : adv.n_dcm_per_dam;
    long long n_dam = adv.swap_update_ratio ? adv.n_dcm_per_dam : 1;

    for (long long ju = 0; ju < adv.max_joint_updates; ++ju) {
        double lr = stepped_lr(adv.lr, adv.lr_decay, adv.lr_every, ju);

        // Critic phase: both feature sets are constants here, so the tape
        // only spans the critic itself.
        res.dcm.params.set_requires_grad(true);
        double critic_est = 0;
        for (long long k = 0; k < n_dcm; ++k) {
            fill_batch(src_set, adv.batch_size, false, false, rng, &xs, &unused);
            fill_batch(tgt_set, adv.batch_size, false, false, rng, &xt, &unused);
            std::map<int, VarPtr> fs, fg;
            {
                NoGradGuard ng;
                fs = forward_with_taps(source, source.params, Var::leaf(xs, false, "xs"), taps,
                                       upto)
                         .taps;
                fg = adapted_forward(res.dam, source, Var::leaf(xt, false, "xt"), adapt_cfg, upto)
                         .taps;
            }
            VarPtr loss = dcm_loss(res.dcm, fg, fs);
            double lv = loss->value.data[0];
            if (!std::isfinite(lv)) abort_diverged("critic", ju, lv);
            backward(loss);
            opt_dcm.step(lr);
            opt_dcm.zero_grad();
            clip_weights(res.dcm, adv.clip_c);
            ++res.dcm_steps;
            critic_est = -lv;
            if (adv.on_update) adv.on_update(ju, lr, max_abs_param(res.dcm));
        }

        // Adapter phase: critic parameters take no gradient, the frozen tail
        // passes gradients through without accumulating any.
        res.dcm.params.set_requires_grad(false);
        double dam_lv = 0;
        for (long long k = 0; k < n_dam; ++k) {
            fill_batch(tgt_set, adv.batch_size, false, false, rng, &xt, &unused);
            std::map<int, VarPtr> fg =
                adapted_forward(res.dam, source, Var::leaf(xt, false, "xt"), adapt_cfg, upto)
                    .taps;
            VarPtr loss = dam_loss(res.dcm, fg);
            double lv = loss->value.data[0];
            if (!std::isfinite(lv)) abort_diverged("adapter", ju, lv);
            backward(loss);
            opt_dam.step(lr);
            opt_dam.zero_grad();
            ++res.dam_steps;
            dam_lv = lv;
            if (adv.on_update) adv.on_update(ju, lr, max_abs_param(res.dcm));
        }
        res.dcm.params.set_requires_grad(true);

        last_good = snapshot(res.dam.params);
        last_good_ju = ju;
        res.joint_updates_run = ju + 1;
        res.critic_curve.push_back(critic_est);
        if (csv.is_open())
            csv.row({static_cast<double>(ju), lr, critic_est, dam_lv, max_abs_param(res.dcm)});
        if (adv.log_every > 0 && ju % adv.log_every == 0)
            std::fprintf(stderr, "[adapt] ju %lld lr %.3e critic %.4f dam %.4f\n",
                         static_cast<long long>(ju), lr, critic_est, dam_lv);
    }
    return res;
}

}  // namespace cmda
