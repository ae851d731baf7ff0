#include "cmda/eval.hpp"

#include <algorithm>

namespace cmda {

namespace {

constexpr int kSliceBatch = 8;

void argmax_into(const Tensor4& probs, int batch, int z0, LabelMap* out) {
    int C = probs.shape.c, h = probs.shape.h, w = probs.shape.w;
    for (int b = 0; b < batch; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int best = 0;
                double bv = probs.at(b, 0, y, x);
                for (int c = 1; c < C; ++c) {
                    double v = probs.at(b, c, y, x);
                    if (v > bv) {
                        bv = v;
                        best = c;
                    }
                }
                out->at(z0 + b, y, x) = static_cast<uint8_t>(best);
            }
}

}  // namespace

const std::vector<std::string>& structure_names() {
    static const std::vector<std::string> names = {"AA", "LA-blood", "LV-blood", "LV-myo"};
    return names;
}

LabelMap predict_volume(const Segmenter& model, const DomainAdapter* dam,
                        const AdaptationConfig* adapt_cfg, const Volume& v) {
    if (dam && !adapt_cfg) contract_fail("adapted prediction needs its adaptation config");
    v.validate();

    LabelMap out(v.d, v.h, v.w);
    NoGradGuard ng;
    for (int z0 = 0; z0 < v.d; z0 += kSliceBatch) {
        int batch = std::min(kSliceBatch, v.d - z0);
        Tensor4 xb(Shape4{batch, 3, v.h, v.w});
        size_t plane = static_cast<size_t>(v.h) * v.w;
        for (int b = 0; b < batch; ++b) {
            Tensor4 one = sample_stack_clamped(v, z0 + b);
            std::copy_n(one.data.data(), 3 * plane, &xb.data[static_cast<size_t>(b) * 3 * plane]);
        }
        VarPtr x = Var::leaf(std::move(xb), false, "x");
        VarPtr probs = dam ? adapted_forward(*dam, model, x, *adapt_cfg).probs
                           : forward_with_taps(model, x, {}).probs;
        argmax_into(probs->value, batch, z0, &out);
    }
    return out;
}

EvalResult evaluate(const Segmenter& model, const DomainAdapter* dam,
                    const AdaptationConfig* adapt_cfg, const LoadedDataset& test_set) {
    if (test_set.cases.empty()) contract_fail("evaluation split is empty");

    EvalResult res;
    for (const auto& c : test_set.cases) {
        if (!c.has_labels) contract_fail("evaluation case ", c.name, " has no labels");
        LabelMap pred = predict_volume(model, dam, adapt_cfg, c.vol);

        CaseMetrics cm;
        cm.case_name = c.name;
        for (int cls = 1; cls <= static_cast<int>(structure_names().size()); ++cls) {
            cm.dice.push_back(dice_score(pred, c.labels, cls));
            cm.asd.push_back(asd(pred, c.labels, cls, c.vol.spacing));
        }
        res.cases.push_back(std::move(cm));
    }
    res.report = aggregate(res.cases, structure_names());
    return res;
}

}  // namespace cmda
