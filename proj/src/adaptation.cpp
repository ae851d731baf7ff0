#include "cmda/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cmda/common.hpp"

namespace cmda {

AdaptationConfig AdaptationConfig::defaults_for(const Segmenter& m, int depth) {
    AdaptationConfig c;
    c.depth = depth;
    c.dam_taps = {depth};
    for (int t : m.taps_h)
        if (t > depth) c.frozen_taps.push_back(t);
    c.validate(m);
    return c;
}

void AdaptationConfig::validate(const Segmenter& m) const {
    if (!m.is_boundary(depth))
        contract_fail("AdaptationConfig: depth ", depth, " is not a module boundary");
    if (depth >= m.n_layers())
        contract_fail("AdaptationConfig: depth ", depth, " leaves no frozen tail");
    for (int a : dam_taps)
        if (a < 1 || a > depth)
            contract_fail("AdaptationConfig: DAM tap ", a, " outside 1..", depth);
    for (int h : frozen_taps)
        if (h <= depth || h > m.n_layers())
            contract_fail("AdaptationConfig: frozen tap ", h, " outside ", depth + 1, "..",
                          m.n_layers());
    if (dam_taps.empty() && frozen_taps.empty())
        contract_fail("AdaptationConfig: no feature taps selected");
    if (clip_c <= 0.0) contract_fail("AdaptationConfig: clip_c must be > 0");
    if (n_dcm_per_dam < 1) contract_fail("AdaptationConfig: n_dcm_per_dam must be >= 1");
    if (critic_width_cap < 1) contract_fail("AdaptationConfig: critic_width_cap must be >= 1");
}

std::vector<int> AdaptationConfig::all_taps() const {
    std::set<int> s(dam_taps.begin(), dam_taps.end());
    s.insert(frozen_taps.begin(), frozen_taps.end());
    return {s.begin(), s.end()};
}

int AdaptationConfig::max_tap() const {
    int mx = 0;
    for (int t : all_taps()) mx = std::max(mx, t);
    return mx;
}

DomainAdapter build_dam(const Segmenter& source, int depth) {
    if (!source.is_boundary(depth))
        contract_fail("build_dam: depth ", depth, " is not a module boundary");
    DomainAdapter dam;
    dam.depth = depth;
    dam.params = source.params.clone_prefix(source.registry, depth, "dam.");
    return dam;
}

ForwardResult adapted_forward(const DomainAdapter& dam, const Segmenter& source,
                              const VarPtr& x, const AdaptationConfig& cfg,
                              int upto) {
    if (dam.depth != cfg.depth)
        contract_fail("adapted_forward: DAM depth ", dam.depth, " vs config depth ",
                      cfg.depth);
    SplitParamSource src(dam.params, source.params, dam.depth);
    return forward_with_taps(source, src, x, cfg.all_taps(), upto);
}

Critic build_dcm(const AdaptationConfig& cfg,
                 const std::map<int, Shape4>& feature_shapes, uint64_t seed) {
    if (feature_shapes.empty()) contract_fail("build_dcm: empty tap set");
    for (const auto& [idx, s] : feature_shapes)
        if (s.c < 1 || s.h < 1 || s.w < 1)
            contract_fail("build_dcm: tap ", idx, " has invalid shape ", s.str());

    // Entry resolution = largest tap by area.
    int eh = 0, ew = 0;
    for (const auto& [idx, s] : feature_shapes)
        if (s.h * s.w > eh * ew || (s.h * s.w == eh * ew && s.h > eh)) {
            eh = s.h;
            ew = s.w;
        }

    Critic dcm;
    dcm.plan.push_back(CriticStage{eh, ew, {}, true});
    for (int h = eh, w = ew; std::min(h, w) > 2;) {
        dcm.plan.push_back(CriticStage{h, w, {}, false});
        h = (h - 1) / 2 + 1;
        w = (w - 1) / 2 + 1;
    }

    // Each tap joins the first stage whose input resolution matches; when
    // nothing matches exactly it is average-pooled down to the largest stage
    // resolution that fits.
    for (const auto& [idx, s] : feature_shapes) {
        int chosen = -1;
        for (size_t k = 0; k < dcm.plan.size(); ++k)
            if (dcm.plan[k].in_h == s.h && dcm.plan[k].in_w == s.w) {
                chosen = static_cast<int>(k);
                break;
            }
        if (chosen < 0)
            for (size_t k = 0; k < dcm.plan.size(); ++k)
                if (dcm.plan[k].in_h <= s.h && dcm.plan[k].in_w <= s.w) {
                    chosen = static_cast<int>(k);
                    break;
                }
        if (chosen < 0)
            contract_fail("build_dcm: tap ", idx, " of shape ", s.str(),
                          " fits no critic stage (entry ", eh, "x", ew, ")");
        dcm.plan[static_cast<size_t>(chosen)].taps.push_back(idx);
        dcm.expected[idx] = s;
    }
    for (auto& st : dcm.plan) std::sort(st.taps.begin(), st.taps.end());

    const int base = std::max(16, cfg.critic_width_cap / 4);
    auto conv_entry = [](int in, int out, int k, int stride, int pad) {
        ConvSpec s;
        s.in_ch = in;
        s.out_ch = out;
        s.kh = s.kw = k;
        s.stride = stride;
        s.dilation = 1;
        s.pad = pad;
        return s;
    };

    int next = 1;
    auto add = [&](const std::string& name, const ConvSpec& sp) {
        LayerEntry e;
        e.index = next++;
        e.name = name;
        e.role = "critic";
        e.conv = sp;
        dcm.registry.push_back(e);
        return e.index;
    };

    int prev_width = 0;
    for (size_t k = 0; k < dcm.plan.size(); ++k) {
        CriticStage& st = dcm.plan[k];
        int in_ch = st.entry ? 0 : prev_width;
        for (int t : st.taps) in_ch += dcm.expected.at(t).c;
        const int width =
            std::min(base * (1 << static_cast<int>(k)), cfg.critic_width_cap);
        const std::string pre = st.entry ? "entry" : "s" + std::to_string(k);
        if (st.entry) {
            st.c1 = add(pre + ".conv", conv_entry(in_ch, width, 3, 1, 1));
        } else {
            st.c1 = add(pre + ".conv1", conv_entry(in_ch, width, 3, 2, 1));
            st.proj = add(pre + ".proj", conv_entry(in_ch, width, 1, 2, 0));
            st.c2 = add(pre + ".conv2", conv_entry(width, width, 3, 1, 1));
        }
        prev_width = width;
    }
    dcm.head_layer = add("head", conv_entry(prev_width, 1, 1, 1, 0));

    Rng rng(seed);
    dcm.params = ParamStore::init_gaussian(dcm.registry, rng, cfg.clip_c / 2.0, "dcm.");
    clip_weights(dcm, cfg.clip_c);  // the [-c, c] invariant holds from step zero
    return dcm;
}

VarPtr Critic::forward(const std::map<int, VarPtr>& features) const {
    for (const auto& [idx, shape] : expected) {
        auto it = features.find(idx);
        if (it == features.end() || !it->second)
            contract_fail("critic forward: missing feature for tap ", idx);
        const Shape4& s = it->second->value.shape;
        if (s.c != shape.c || s.h != shape.h || s.w != shape.w)
            contract_fail("critic forward: tap ", idx, " shape ", s.str(),
                          " does not match expected ", shape.str());
    }
    if (features.size() != expected.size())
        contract_fail("critic forward: got ", features.size(), " features, expected ",
                      expected.size());

    VarPtr cur;
    for (const auto& st : plan) {
        std::vector<VarPtr> ins;
        if (!st.entry) ins.push_back(cur);
        for (int t : st.taps) {
            VarPtr f = features.at(t);
            const Shape4& fs = f->value.shape;
            if (fs.h != st.in_h || fs.w != st.in_w)
                f = adaptive_avg_pool(f, st.in_h, st.in_w);
            ins.push_back(f);
        }
        VarPtr x = ins.size() == 1 ? ins[0] : concat_channels(ins);
        if (st.entry) {
            const LayerEntry& e = registry[st.c1 - 1];
            cur = relu(conv2d(x, params.layer(st.c1).w, params.layer(st.c1).b, e.conv));
        } else {
            const LayerEntry& e1 = registry[st.c1 - 1];
            VarPtr y1 = relu(conv2d(x, params.layer(st.c1).w, params.layer(st.c1).b, e1.conv));
            const LayerEntry& ep = registry[st.proj - 1];
            VarPtr skip = conv2d(x, params.layer(st.proj).w, params.layer(st.proj).b, ep.conv);
            const LayerEntry& e2 = registry[st.c2 - 1];
            cur = relu(add(conv2d(y1, params.layer(st.c2).w, params.layer(st.c2).b, e2.conv),
                           skip));
        }
    }
    VarPtr pooled = global_avg_pool(cur);
    const LayerEntry& eh = registry[head_layer - 1];
    return conv2d(pooled, params.layer(head_layer).w, params.layer(head_layer).b, eh.conv);
}

void clip_weights(Critic& dcm, double c) {
    if (c <= 0.0) contract_fail("clip_weights: c must be > 0");
    for (const auto& p : dcm.params.all())
        for (Scalar& v : p->value.data) v = std::clamp(v, -c, c);
}

double max_abs_param(const Critic& dcm) {
    double mx = 0.0;
    for (const auto& p : dcm.params.all())
        for (Scalar v : p->value.data) mx = std::max(mx, std::abs(v));
    return mx;
}

}  // namespace cmda
