#include "cmda/tensor.hpp"

namespace cmda {

void ConvSpec::validate() const {
    if (in_ch < 1) contract_fail("ConvSpec: in_ch must be >= 1, got ", in_ch);
    if (out_ch < 1) contract_fail("ConvSpec: out_ch must be >= 1, got ", out_ch);
    if (kh < 1 || kw < 1) contract_fail("ConvSpec: kernel must be >= 1x1, got ", kh, "x", kw);
    if (stride < 1) contract_fail("ConvSpec: stride must be >= 1, got ", stride);
    if (dilation < 1) contract_fail("ConvSpec: dilation must be >= 1, got ", dilation);
    if (pad < 0) contract_fail("ConvSpec: padding must be >= 0, got ", pad);
}

Shape4 ConvSpec::out_shape(const Shape4& in) const {
    validate();
    if (in.c != in_ch)
        contract_fail("conv input channel mismatch: input c=", in.c, " but spec in_ch=", in_ch);
    int oh = out_h(in.h);
    int ow = out_w(in.w);
    if (oh < 1)
        contract_fail("conv output height ", oh, " < 1 for input h=", in.h, " (kh=", kh,
                      " stride=", stride, " dilation=", dilation, " pad=", pad, ")");
    if (ow < 1)
        contract_fail("conv output width ", ow, " < 1 for input w=", in.w, " (kw=", kw,
                      " stride=", stride, " dilation=", dilation, " pad=", pad, ")");
    return Shape4{in.n, out_ch, oh, ow};
}

void fill_gaussian(Tensor4& t, Rng& rng, Scalar mean, Scalar stddev) {
    for (auto& v : t.data) v = rng.gaussian(mean, stddev);
}

void fill_uniform(Tensor4& t, Rng& rng, Scalar lo, Scalar hi) {
    for (auto& v : t.data) v = rng.uniform(lo, hi);
}

}  // namespace cmda
