#include "cmda/nn.hpp"

#include <cmath>
#include <set>

#include "cmda/common.hpp"

namespace cmda {

Shape4 LayerEntry::weight_shape() const {
    if (is_deconv) return Shape4{de_in, de_out, 2, 2};
    return conv.weight_shape();
}

Shape4 LayerEntry::bias_shape() const {
    return Shape4{1, is_deconv ? de_out : conv.out_ch, 1, 1};
}

ParamStore ParamStore::init(const std::vector<LayerEntry>& registry, Rng& rng,
                            const std::string& name_prefix) {
    ParamStore s;
    s.v_.reserve(registry.size());
    for (const auto& e : registry) {
        const int fan_in = e.is_deconv ? e.de_in * 4 : e.conv.in_ch * e.conv.kh * e.conv.kw;
        Tensor4 w(e.weight_shape());
        fill_gaussian(w, rng, 0.0, std::sqrt(2.0 / fan_in));
        Tensor4 b(e.bias_shape(), 0.0);
        LayerParams p;
        p.w = Var::leaf(std::move(w), true, name_prefix + e.name + ".w");
        p.b = Var::leaf(std::move(b), true, name_prefix + e.name + ".b");
        s.v_.push_back(std::move(p));
    }
    return s;
}

ParamStore ParamStore::init_gaussian(const std::vector<LayerEntry>& registry, Rng& rng,
                                     double stddev, const std::string& name_prefix) {
    ParamStore s;
    s.v_.reserve(registry.size());
    for (const auto& e : registry) {
        Tensor4 w(e.weight_shape());
        fill_gaussian(w, rng, 0.0, stddev);
        Tensor4 b(e.bias_shape(), 0.0);
        LayerParams p;
        p.w = Var::leaf(std::move(w), true, name_prefix + e.name + ".w");
        p.b = Var::leaf(std::move(b), true, name_prefix + e.name + ".b");
        s.v_.push_back(std::move(p));
    }
    return s;
}

ParamStore ParamStore::clone_prefix(const std::vector<LayerEntry>& registry, int d,
                                    const std::string& name_prefix) const {
    if (d < 1 || d > static_cast<int>(v_.size()))
        contract_fail("clone_prefix: d=", d, " outside 1..", v_.size());
    ParamStore s;
    s.v_.reserve(d);
    for (int i = 0; i < d; ++i) {
        LayerParams p;
        p.w = Var::leaf(v_[i].w->value, true, name_prefix + registry[i].name + ".w");
        p.b = Var::leaf(v_[i].b->value, true, name_prefix + registry[i].name + ".b");
        s.v_.push_back(std::move(p));
    }
    return s;
}

const LayerParams& ParamStore::layer(int index) const {
    if (index < 1 || index > static_cast<int>(v_.size()))
        contract_fail("ParamStore: layer index ", index, " outside 1..", v_.size());
    return v_[index - 1];
}

LayerParams& ParamStore::layer_mut(int index) {
    if (index < 1 || index > static_cast<int>(v_.size()))
        contract_fail("ParamStore: layer index ", index, " outside 1..", v_.size());
    return v_[index - 1];
}

std::vector<VarPtr> ParamStore::all() const {
    std::vector<VarPtr> out;
    out.reserve(v_.size() * 2);
    for (const auto& p : v_) {
        out.push_back(p.w);
        out.push_back(p.b);
    }
    return out;
}

void ParamStore::set_requires_grad(bool rg) {
    for (auto& p : v_) {
        p.w->set_requires_grad(rg);
        p.b->set_requires_grad(rg);
    }
}

void ParamStore::zero_grad() {
    for (auto& p : v_) {
        p.w->zero_grad();
        p.b->zero_grad();
    }
}

ForwardResult run_stages(const std::vector<Stage>& stages,
                         const std::vector<LayerEntry>& registry,
                         const IParamSource& src, const VarPtr& x,
                         const std::vector<int>& taps, int upto,
                         bool softmax_head) {
    const int n = static_cast<int>(registry.size());
    std::set<int> want;
    for (int t : taps) {
        if (t < 1 || t > n) contract_fail("run_stages: tap index ", t, " outside 1..", n);
        want.insert(t);
    }
    if (upto < 0 || upto > n) contract_fail("run_stages: upto=", upto, " outside 0..", n);

    ForwardResult out;
    auto record = [&](int idx, const VarPtr& v) {
        if (want.count(idx)) out.taps[idx] = v;
    };
    auto stop_after = [&](int idx) { return upto != 0 && idx >= upto; };

    VarPtr cur = x;
    bool complete = true;
    for (const auto& stage : stages) {
        if (const auto* p = std::get_if<PlainConvStage>(&stage)) {
            const LayerEntry& e = registry[p->layer - 1];
            const LayerParams& lp = src.layer(p->layer);
            VarPtr y = conv2d(cur, lp.w, lp.b, e.conv);
            if (p->relu) y = relu(y);
            record(p->layer, y);
            cur = y;
            if (stop_after(p->layer)) { complete = false; break; }
        } else if (const auto* b = std::get_if<ResBlockStage>(&stage)) {
            const LayerEntry& e1 = registry[b->c1 - 1];
            const LayerParams& p1 = src.layer(b->c1);
            VarPtr y1 = relu(conv2d(cur, p1.w, p1.b, e1.conv));
            record(b->c1, y1);
            if (stop_after(b->c1)) { complete = false; break; }
            VarPtr skip = cur;
            if (b->proj != 0) {
                const LayerEntry& ep = registry[b->proj - 1];
                const LayerParams& pp = src.layer(b->proj);
                skip = conv2d(cur, pp.w, pp.b, ep.conv);
                record(b->proj, skip);
                if (stop_after(b->proj)) { complete = false; break; }
            }
            const LayerEntry& e2 = registry[b->c2 - 1];
            const LayerParams& p2 = src.layer(b->c2);
            VarPtr merged = relu(add(conv2d(y1, p2.w, p2.b, e2.conv), skip));
            record(b->c2, merged);
            cur = merged;
            if (stop_after(b->c2)) { complete = false; break; }
        } else {
            const auto& d = std::get<DeconvStage>(stage);
            const LayerParams& lp = src.layer(d.layer);
            VarPtr y = relu(deconv2x(cur, lp.w, lp.b));
            record(d.layer, y);
            cur = y;
            if (stop_after(d.layer)) { complete = false; break; }
        }
    }
    if (complete) {
        out.logits = cur;
        if (softmax_head) out.probs = softmax_channel(cur);
    }
    return out;
}

std::map<int, Shape4> stage_tap_shapes(const std::vector<Stage>& stages,
                                       const std::vector<LayerEntry>& registry,
                                       Shape4 input, const std::vector<int>& taps) {
    const int n = static_cast<int>(registry.size());
    std::set<int> want;
    for (int t : taps) {
        if (t < 1 || t > n) contract_fail("stage_tap_shapes: tap index ", t, " outside 1..", n);
        want.insert(t);
    }
    std::map<int, Shape4> out;
    auto record = [&](int idx, const Shape4& s) {
        if (want.count(idx)) out[idx] = s;
    };
    Shape4 cur = input;
    for (const auto& stage : stages) {
        if (const auto* p = std::get_if<PlainConvStage>(&stage)) {
            cur = registry[p->layer - 1].conv.out_shape(cur);
            record(p->layer, cur);
        } else if (const auto* b = std::get_if<ResBlockStage>(&stage)) {
            const Shape4 in = cur;
            const Shape4 mid = registry[b->c1 - 1].conv.out_shape(in);
            record(b->c1, mid);
            if (b->proj != 0) record(b->proj, registry[b->proj - 1].conv.out_shape(in));
            cur = registry[b->c2 - 1].conv.out_shape(mid);
            record(b->c2, cur);
        } else {
            const auto& d = std::get<DeconvStage>(stage);
            cur = Shape4{cur.n, registry[d.layer - 1].de_out, cur.h * 2, cur.w * 2};
            record(d.layer, cur);
        }
    }
    return out;
}

}  // namespace cmda
