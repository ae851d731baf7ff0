#include "cmda/segmenter.hpp"

#include <algorithm>

#include "cmda/common.hpp"

namespace cmda {

void SegmenterConfig::validate() const {
    if (in_channels < 1) contract_fail("SegmenterConfig: in_channels must be >= 1");
    if (num_classes < 2) contract_fail("SegmenterConfig: num_classes must be >= 2");
    if (base_width < 1) contract_fail("SegmenterConfig: base_width must be >= 1");
    if (rm_widths.size() != 6)
        contract_fail("SegmenterConfig: rm_widths needs 6 entries (RM2..RM7), got ",
                      rm_widths.size());
    for (int w : rm_widths)
        if (w < 1) contract_fail("SegmenterConfig: rm widths must be >= 1");
}

bool Segmenter::is_boundary(int index) const {
    return std::find(boundaries.begin(), boundaries.end(), index) != boundaries.end();
}

namespace {

ConvSpec conv3(int in, int out, int stride, int dilation) {
    ConvSpec s;
    s.in_ch = in;
    s.out_ch = out;
    s.kh = s.kw = 3;
    s.stride = stride;
    s.dilation = dilation;
    s.pad = dilation;  // same padding at stride 1
    return s;
}

ConvSpec conv1x1(int in, int out, int stride) {
    ConvSpec s;
    s.in_ch = in;
    s.out_ch = out;
    s.kh = s.kw = 1;
    s.stride = stride;
    s.dilation = 1;
    s.pad = 0;
    return s;
}

struct Builder {
    std::vector<LayerEntry>& reg;
    std::vector<Stage>& stages;
    int next = 1;

    int conv(const std::string& name, const std::string& role, const ConvSpec& sp) {
        LayerEntry e;
        e.index = next++;
        e.name = name;
        e.role = role;
        e.conv = sp;
        reg.push_back(e);
        return e.index;
    }

    void plain(const std::string& name, const std::string& role, const ConvSpec& sp,
               bool relu) {
        stages.push_back(PlainConvStage{conv(name, role, sp), relu});
    }

    void res_block(const std::string& prefix, const std::string& role, int in, int out,
                   int stride, int dilation) {
        ResBlockStage b{};
        b.c1 = conv(prefix + ".conv1", role, conv3(in, out, stride, dilation));
        b.proj = (stride != 1 || in != out)
                     ? conv(prefix + ".proj", role, conv1x1(in, out, stride))
                     : 0;
        b.c2 = conv(prefix + ".conv2", role, conv3(out, out, 1, dilation));
        stages.push_back(b);
    }

    void res_module(const std::string& role, int in, int out, int stride, int dilation) {
        res_block(role + ".b1", role, in, out, stride, dilation);
        res_block(role + ".b2", role, out, out, 1, dilation);
    }

    void deconv(const std::string& name, int in, int out) {
        LayerEntry e;
        e.index = next++;
        e.name = name;
        e.role = "conv10";
        e.is_deconv = true;
        e.de_in = in;
        e.de_out = out;
        reg.push_back(e);
        stages.push_back(DeconvStage{e.index});
    }
};

}  // namespace

Segmenter build_segmenter(const SegmenterConfig& cfg, uint64_t seed) {
    cfg.validate();
    Segmenter m;
    m.cfg = cfg;
    Builder b{m.registry, m.stages};
    const auto& w = cfg.rm_widths;  // RM2..RM7

    b.plain("conv1", "conv1", conv3(cfg.in_channels, cfg.base_width, 1, 1), true);
    m.boundaries.push_back(b.next - 1);
    b.res_module("rm2", cfg.base_width, w[0], 2, 1);
    m.boundaries.push_back(b.next - 1);
    b.res_module("rm3", w[0], w[1], 2, 1);
    m.boundaries.push_back(b.next - 1);
    b.res_module("rm4", w[1], w[2], 2, 1);
    m.boundaries.push_back(b.next - 1);
    b.res_module("rm5", w[2], w[3], 1, 1);
    m.boundaries.push_back(b.next - 1);
    b.res_module("rm6", w[3], w[4], 1, 1);
    m.boundaries.push_back(b.next - 1);
    const int rm6_end = b.next - 1;
    b.res_module("rm7", w[4], w[5], 1, 2);
    m.boundaries.push_back(b.next - 1);
    const int rm7_end = b.next - 1;

    const int up1 = std::max(cfg.base_width, w[5] / 2);
    const int up2 = std::max(cfg.base_width, w[5] / 4);
    b.deconv("up1", w[5], up1);
    b.deconv("up2", up1, up2);
    b.deconv("up3", up2, cfg.base_width);
    m.boundaries.push_back(b.next - 1);

    ConvSpec s5{};
    s5.in_ch = s5.out_ch = cfg.base_width;
    s5.kh = s5.kw = 5;
    s5.stride = s5.dilation = 1;
    s5.pad = 2;
    b.plain("smooth1", "smooth", s5, true);
    b.plain("smooth2", "smooth", s5, true);
    m.boundaries.push_back(b.next - 1);

    b.plain("head", "head", conv1x1(cfg.base_width, cfg.num_classes, 1), false);
    m.boundaries.push_back(b.next - 1);

    Rng rng(seed);
    m.params = ParamStore::init(m.registry, rng);
    m.taps_h = {rm6_end, rm7_end};
    return m;
}

std::map<std::string, int> depth_presets(const Segmenter& m) {
    // boundaries order: conv1, rm2..rm7, conv10, smooth, head
    if (m.boundaries.size() != 10)
        contract_fail("depth_presets: expected 10 module boundaries, got ",
                      m.boundaries.size());
    return {{"shallow", m.boundaries[3]},   // RM4
            {"mid", m.boundaries[5]},       // RM6
            {"deep", m.boundaries[6]}};     // RM7
}

namespace {

void check_input(const Segmenter& m, const Shape4& s) {
    if (s.c != m.cfg.in_channels)
        contract_fail("segmenter forward: input channels ", s.c, ", config expects ",
                      m.cfg.in_channels);
    if (s.h < 8 || s.w < 8 || s.h % 8 != 0 || s.w % 8 != 0)
        contract_fail("segmenter forward: spatial size ", s.h, "x", s.w,
                      " must be a multiple of 8");
}

}  // namespace

ForwardResult forward_with_taps(const Segmenter& m, const VarPtr& x,
                                const std::vector<int>& taps) {
    return forward_with_taps(m, m.params, x, taps, 0);
}

ForwardResult forward_with_taps(const Segmenter& m, const IParamSource& src,
                                const VarPtr& x, const std::vector<int>& taps,
                                int upto) {
    if (!x) contract_fail("segmenter forward: null input");
    check_input(m, x->value.shape);
    return run_stages(m.stages, m.registry, src, x, taps, upto, /*softmax_head=*/true);
}

std::map<int, Shape4> tap_shapes(const Segmenter& m, Shape4 input,
                                 const std::vector<int>& taps) {
    check_input(m, input);
    return stage_tap_shapes(m.stages, m.registry, input, taps);
}

}  // namespace cmda
