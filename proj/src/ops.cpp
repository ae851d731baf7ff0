#include "cmda/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "cmda/common.hpp"

namespace cmda {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {

// Unfold one sample of x into a (in_ch*kh*kw, out_h*out_w) matrix; out-of-bounds
// positions contribute zero.
void im2col(const Tensor4& x, int sample, const ConvSpec& sp, int out_h, int out_w,
            std::vector<Scalar>& cols) {
    const int hw = out_h * out_w;
    cols.assign(static_cast<size_t>(sp.in_ch) * sp.kh * sp.kw * hw, 0.0);
    for (int c = 0; c < sp.in_ch; ++c) {
        for (int ky = 0; ky < sp.kh; ++ky) {
            for (int kx = 0; kx < sp.kw; ++kx) {
                const size_t row = (static_cast<size_t>(c) * sp.kh + ky) * sp.kw + kx;
                Scalar* dst = cols.data() + row * hw;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * sp.stride - sp.pad + ky * sp.dilation;
                    if (iy < 0 || iy >= x.shape.h) continue;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * sp.stride - sp.pad + kx * sp.dilation;
                        if (ix < 0 || ix >= x.shape.w) continue;
                        dst[oy * out_w + ox] = x.at(sample, c, iy, ix);
                    }
                }
            }
        }
    }
}

// Scatter-add the column gradient back onto one sample of dx.
void col2im_add(const std::vector<Scalar>& dcols, int sample, const ConvSpec& sp,
                int out_h, int out_w, Tensor4& dx) {
    const int hw = out_h * out_w;
    for (int c = 0; c < sp.in_ch; ++c) {
        for (int ky = 0; ky < sp.kh; ++ky) {
            for (int kx = 0; kx < sp.kw; ++kx) {
                const size_t row = (static_cast<size_t>(c) * sp.kh + ky) * sp.kw + kx;
                const Scalar* src = dcols.data() + row * hw;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * sp.stride - sp.pad + ky * sp.dilation;
                    if (iy < 0 || iy >= dx.shape.h) continue;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * sp.stride - sp.pad + kx * sp.dilation;
                        if (ix < 0 || ix >= dx.shape.w) continue;
                        dx.at(sample, c, iy, ix) += src[oy * out_w + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, const ConvSpec& sp) {
    sp.validate();
    if (!x || !w || !b) contract_fail("conv2d: null input");
    if (!(w->value.shape == sp.weight_shape()))
        contract_fail("conv2d: weight shape ", w->value.shape.str(), " vs spec ",
                      sp.weight_shape().str());
    Shape4 bshape{1, sp.out_ch, 1, 1};
    if (!(b->value.shape == bshape))
        contract_fail("conv2d: bias shape ", b->value.shape.str(), ", want ", bshape.str());
    const Shape4 oshape = sp.out_shape(x->value.shape);
    const int out_h = oshape.h, out_w = oshape.w, hw = out_h * out_w;
    const int kdim = sp.in_ch * sp.kh * sp.kw;

    Tensor4 out(oshape);
    std::vector<Scalar> cols;
    CMapMat wm(w->value.data.data(), sp.out_ch, kdim);
    for (int n = 0; n < x->value.shape.n; ++n) {
        im2col(x->value, n, sp, out_h, out_w, cols);
        CMapMat cm(cols.data(), kdim, hw);
        MapMat om(out.data.data() + static_cast<size_t>(n) * sp.out_ch * hw, sp.out_ch, hw);
        om.noalias() = wm * cm;
        for (int c = 0; c < sp.out_ch; ++c) om.row(c).array() += b->value.at(0, c, 0, 0);
    }

    ConvSpec spec = sp;
    VarPtr xp = x, wp = w, bp = b;
    return Var::op_node(std::move(out), {x, w, b}, [xp, wp, bp, spec, out_h, out_w](Var& self) {
        const int hw = out_h * out_w;
        const int kdim = spec.in_ch * spec.kh * spec.kw;
        const Tensor4& dy = self.grad();
        std::vector<Scalar> cols, dcols;
        CMapMat wm(wp->value.data.data(), spec.out_ch, kdim);
        const bool need_dx = xp->requires_grad();
        const bool need_dw = wp->requires_grad();
        const bool need_db = bp->requires_grad();
        if (need_dx && dcols.empty()) dcols.resize(static_cast<size_t>(kdim) * hw);
        for (int n = 0; n < xp->value.shape.n; ++n) {
            CMapMat dym(dy.data.data() + static_cast<size_t>(n) * spec.out_ch * hw,
                        spec.out_ch, hw);
            if (need_dw || need_dx) im2col(xp->value, n, spec, out_h, out_w, cols);
            if (need_dw) {
                CMapMat cm(cols.data(), kdim, hw);
                MapMat dwm(wp->grad().data.data(), spec.out_ch, kdim);
                dwm.noalias() += dym * cm.transpose();
            }
            if (need_db) {
                Tensor4& db = bp->grad();
                for (int c = 0; c < spec.out_ch; ++c) db.at(0, c, 0, 0) += dym.row(c).sum();
            }
            if (need_dx) {
                MapMat dcm(dcols.data(), kdim, hw);
                dcm.noalias() = wm.transpose() * dym;
                col2im_add(dcols, n, spec, out_h, out_w, xp->grad());
            }
        }
    }, "conv2d");
}

VarPtr deconv2x(const VarPtr& x, const VarPtr& w, const VarPtr& b) {
    if (!x || !w || !b) contract_fail("deconv2x: null input");
    const Shape4& xs = x->value.shape;
    const Shape4& ws = w->value.shape;
    if (ws.h != 2 || ws.w != 2)
        contract_fail("deconv2x: kernel must be 2x2, got ", ws.str());
    if (ws.n != xs.c)
        contract_fail("deconv2x: weight in_ch ", ws.n, " vs input channels ", xs.c);
    const int out_ch = ws.c;
    Shape4 bshape{1, out_ch, 1, 1};
    if (!(b->value.shape == bshape))
        contract_fail("deconv2x: bias shape ", b->value.shape.str(), ", want ", bshape.str());

    // stride == kernel: every output position receives exactly one contribution
    Tensor4 out(Shape4{xs.n, out_ch, xs.h * 2, xs.w * 2});
    for (int n = 0; n < xs.n; ++n)
        for (int co = 0; co < out_ch; ++co) {
            const Scalar bias = b->value.at(0, co, 0, 0);
            for (int y = 0; y < xs.h; ++y)
                for (int xx = 0; xx < xs.w; ++xx) {
                    Scalar acc[4] = {bias, bias, bias, bias};
                    for (int ci = 0; ci < xs.c; ++ci) {
                        const Scalar v = x->value.at(n, ci, y, xx);
                        acc[0] += v * w->value.at(ci, co, 0, 0);
                        acc[1] += v * w->value.at(ci, co, 0, 1);
                        acc[2] += v * w->value.at(ci, co, 1, 0);
                        acc[3] += v * w->value.at(ci, co, 1, 1);
                    }
                    out.at(n, co, 2 * y, 2 * xx) = acc[0];
                    out.at(n, co, 2 * y, 2 * xx + 1) = acc[1];
                    out.at(n, co, 2 * y + 1, 2 * xx) = acc[2];
                    out.at(n, co, 2 * y + 1, 2 * xx + 1) = acc[3];
                }
        }

    VarPtr xp = x, wp = w, bp = b;
    return Var::op_node(std::move(out), {x, w, b}, [xp, wp, bp](Var& self) {
        const Shape4& xs = xp->value.shape;
        const int out_ch = wp->value.shape.c;
        const Tensor4& dy = self.grad();
        const bool need_dx = xp->requires_grad();
        const bool need_dw = wp->requires_grad();
        const bool need_db = bp->requires_grad();
        for (int n = 0; n < xs.n; ++n)
            for (int co = 0; co < out_ch; ++co) {
                Scalar dbsum = 0.0;
                for (int y = 0; y < xs.h; ++y)
                    for (int xx = 0; xx < xs.w; ++xx) {
                        const Scalar g00 = dy.at(n, co, 2 * y, 2 * xx);
                        const Scalar g01 = dy.at(n, co, 2 * y, 2 * xx + 1);
                        const Scalar g10 = dy.at(n, co, 2 * y + 1, 2 * xx);
                        const Scalar g11 = dy.at(n, co, 2 * y + 1, 2 * xx + 1);
                        dbsum += g00 + g01 + g10 + g11;
                        for (int ci = 0; ci < xs.c; ++ci) {
                            if (need_dx)
                                xp->grad().at(n, ci, y, xx) +=
                                    g00 * wp->value.at(ci, co, 0, 0) +
                                    g01 * wp->value.at(ci, co, 0, 1) +
                                    g10 * wp->value.at(ci, co, 1, 0) +
                                    g11 * wp->value.at(ci, co, 1, 1);
                            if (need_dw) {
                                const Scalar v = xp->value.at(n, ci, y, xx);
                                wp->grad().at(ci, co, 0, 0) += v * g00;
                                wp->grad().at(ci, co, 0, 1) += v * g01;
                                wp->grad().at(ci, co, 1, 0) += v * g10;
                                wp->grad().at(ci, co, 1, 1) += v * g11;
                            }
                        }
                    }
                if (need_db) bp->grad().at(0, co, 0, 0) += dbsum;
            }
    }, "deconv2x");
}

VarPtr relu(const VarPtr& x) {
    if (!x) contract_fail("relu: null input");
    Tensor4 out(x->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = x->value.data[i] > 0.0 ? x->value.data[i] : 0.0;
    VarPtr xp = x;
    return Var::op_node(std::move(out), {x}, [xp](Var& self) {
        if (!xp->requires_grad()) return;
        Tensor4& dx = xp->grad();
        const Tensor4& dy = self.grad();
        for (size_t i = 0; i < dx.data.size(); ++i)
            if (xp->value.data[i] > 0.0) dx.data[i] += dy.data[i];
    }, "relu");
}

VarPtr add(const VarPtr& a, const VarPtr& b) {
    if (!a || !b) contract_fail("add: null input");
    if (!(a->value.shape == b->value.shape))
        contract_fail("add: shape mismatch ", a->value.shape.str(), " vs ", b->value.shape.str());
    Tensor4 out(a->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a->value.data[i] + b->value.data[i];
    VarPtr ap = a, bp = b;
    return Var::op_node(std::move(out), {a, b}, [ap, bp](Var& self) {
        const Tensor4& dy = self.grad();
        if (ap->requires_grad()) ap->accumulate_grad(dy);
        if (bp->requires_grad()) bp->accumulate_grad(dy);
    }, "add");
}

VarPtr sub(const VarPtr& a, const VarPtr& b) {
    if (!a || !b) contract_fail("sub: null input");
    if (!(a->value.shape == b->value.shape))
        contract_fail("sub: shape mismatch ", a->value.shape.str(), " vs ", b->value.shape.str());
    Tensor4 out(a->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a->value.data[i] - b->value.data[i];
    VarPtr ap = a, bp = b;
    return Var::op_node(std::move(out), {a, b}, [ap, bp](Var& self) {
        const Tensor4& dy = self.grad();
        if (ap->requires_grad()) ap->accumulate_grad(dy);
        if (bp->requires_grad()) {
            Tensor4& db = bp->grad();
            for (size_t i = 0; i < db.data.size(); ++i) db.data[i] -= dy.data[i];
        }
    }, "sub");
}

VarPtr neg(const VarPtr& a) { return scale(a, -1.0); }

VarPtr scale(const VarPtr& a, double k) {
    if (!a) contract_fail("scale: null input");
    Tensor4 out(a->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a->value.data[i] * k;
    VarPtr ap = a;
    return Var::op_node(std::move(out), {a}, [ap, k](Var& self) {
        if (!ap->requires_grad()) return;
        Tensor4& da = ap->grad();
        const Tensor4& dy = self.grad();
        for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += k * dy.data[i];
    }, "scale");
}

VarPtr concat_channels(const std::vector<VarPtr>& xs) {
    if (xs.empty()) contract_fail("concat_channels: no inputs");
    const Shape4& first = xs[0]->value.shape;
    int total_c = 0;
    for (const auto& x : xs) {
        if (!x) contract_fail("concat_channels: null input");
        const Shape4& s = x->value.shape;
        if (s.n != first.n || s.h != first.h || s.w != first.w)
            contract_fail("concat_channels: incompatible shapes ", first.str(), " vs ", s.str());
        total_c += s.c;
    }
    Tensor4 out(Shape4{first.n, total_c, first.h, first.w});
    const size_t plane = static_cast<size_t>(first.h) * first.w;
    for (int n = 0; n < first.n; ++n) {
        int co = 0;
        for (const auto& x : xs) {
            const int c_in = x->value.shape.c;
            std::copy_n(x->value.data.data() + static_cast<size_t>(n) * c_in * plane,
                        static_cast<size_t>(c_in) * plane,
                        out.data.data() + (static_cast<size_t>(n) * total_c + co) * plane);
            co += c_in;
        }
    }
    std::vector<VarPtr> parents = xs;
    return Var::op_node(std::move(out), parents, [parents, plane, total_c](Var& self) {
        const Tensor4& dy = self.grad();
        const int n_count = self.value.shape.n;
        for (int n = 0; n < n_count; ++n) {
            int co = 0;
            for (const auto& x : parents) {
                const int c_in = x->value.shape.c;
                if (x->requires_grad()) {
                    Tensor4& dx = x->grad();
                    const Scalar* src =
                        dy.data.data() + (static_cast<size_t>(n) * total_c + co) * plane;
                    Scalar* dst = dx.data.data() + static_cast<size_t>(n) * c_in * plane;
                    for (size_t i = 0; i < static_cast<size_t>(c_in) * plane; ++i)
                        dst[i] += src[i];
                }
                co += c_in;
            }
        }
    }, "concat_channels");
}

VarPtr softmax_channel(const VarPtr& x) {
    if (!x) contract_fail("softmax_channel: null input");
    if (!x->value.all_finite())
        throw NumericError("softmax_channel: non-finite input");
    const Shape4& s = x->value.shape;
    Tensor4 out(s);
    const size_t plane = static_cast<size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx) {
                Scalar mx = x->value.at(n, 0, y, xx);
                for (int c = 1; c < s.c; ++c) mx = std::max(mx, x->value.at(n, c, y, xx));
                Scalar denom = 0.0;
                for (int c = 0; c < s.c; ++c) {
                    const Scalar e = std::exp(x->value.at(n, c, y, xx) - mx);
                    out.at(n, c, y, xx) = e;
                    denom += e;
                }
                for (int c = 0; c < s.c; ++c) out.at(n, c, y, xx) /= denom;
            }
    (void)plane;
    VarPtr xp = x;
    return Var::op_node(std::move(out), {x}, [xp](Var& self) {
        if (!xp->requires_grad()) return;
        const Shape4& s = self.value.shape;
        const Tensor4& dy = self.grad();
        const Tensor4& p = self.value;
        Tensor4& dx = xp->grad();
        for (int n = 0; n < s.n; ++n)
            for (int y = 0; y < s.h; ++y)
                for (int xx = 0; xx < s.w; ++xx) {
                    Scalar dot = 0.0;
                    for (int c = 0; c < s.c; ++c) dot += dy.at(n, c, y, xx) * p.at(n, c, y, xx);
                    for (int c = 0; c < s.c; ++c)
                        dx.at(n, c, y, xx) += p.at(n, c, y, xx) * (dy.at(n, c, y, xx) - dot);
                }
    }, "softmax_channel");
}

VarPtr adaptive_avg_pool(const VarPtr& x, int out_h, int out_w) {
    if (!x) contract_fail("adaptive_avg_pool: null input");
    const Shape4& s = x->value.shape;
    if (out_h < 1 || out_w < 1 || out_h > s.h || out_w > s.w)
        contract_fail("adaptive_avg_pool: target ", out_h, "x", out_w,
                      " invalid for input ", s.str());
    Tensor4 out(Shape4{s.n, s.c, out_h, out_w});
    auto bin = [](int i, int in, int outn, int& lo, int& hi) {
        lo = (i * in) / outn;
        hi = ((i + 1) * in + outn - 1) / outn;
    };
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oy = 0; oy < out_h; ++oy) {
                int y0, y1;
                bin(oy, s.h, out_h, y0, y1);
                for (int ox = 0; ox < out_w; ++ox) {
                    int x0, x1;
                    bin(ox, s.w, out_w, x0, x1);
                    Scalar acc = 0.0;
                    for (int y = y0; y < y1; ++y)
                        for (int xx = x0; xx < x1; ++xx) acc += x->value.at(n, c, y, xx);
                    out.at(n, c, oy, ox) = acc / ((y1 - y0) * (x1 - x0));
                }
            }
    VarPtr xp = x;
    return Var::op_node(std::move(out), {x}, [xp, out_h, out_w](Var& self) {
        if (!xp->requires_grad()) return;
        const Shape4& s = xp->value.shape;
        const Tensor4& dy = self.grad();
        Tensor4& dx = xp->grad();
        auto bin = [](int i, int in, int outn, int& lo, int& hi) {
            lo = (i * in) / outn;
            hi = ((i + 1) * in + outn - 1) / outn;
        };
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int oy = 0; oy < out_h; ++oy) {
                    int y0, y1;
                    bin(oy, s.h, out_h, y0, y1);
                    for (int ox = 0; ox < out_w; ++ox) {
                        int x0, x1;
                        bin(ox, s.w, out_w, x0, x1);
                        const Scalar g = dy.at(n, c, oy, ox) / ((y1 - y0) * (x1 - x0));
                        for (int y = y0; y < y1; ++y)
                            for (int xx = x0; xx < x1; ++xx) dx.at(n, c, y, xx) += g;
                    }
                }
    }, "adaptive_avg_pool");
}

VarPtr global_avg_pool(const VarPtr& x) {
    if (!x) contract_fail("global_avg_pool: null input");
    return adaptive_avg_pool(x, 1, 1);
}

VarPtr mean_all(const VarPtr& x) {
    if (!x) contract_fail("mean_all: null input");
    const size_t count = x->value.data.size();
    Scalar acc = 0.0;
    for (Scalar v : x->value.data) acc += v;
    Tensor4 out = Tensor4::scalar(acc / static_cast<Scalar>(count));
    VarPtr xp = x;
    return Var::op_node(std::move(out), {x}, [xp, count](Var& self) {
        if (!xp->requires_grad()) return;
        const Scalar g = self.grad().data[0] / static_cast<Scalar>(count);
        Tensor4& dx = xp->grad();
        for (Scalar& v : dx.data) v += g;
    }, "mean_all");
}

VarPtr weighted_sum(const VarPtr& x, const Tensor4& w) {
    if (!x) contract_fail("weighted_sum: null input");
    if (!(x->value.shape == w.shape))
        contract_fail("weighted_sum: weight shape ", w.shape.str(), " vs input ",
                      x->value.shape.str());
    Scalar acc = 0.0;
    for (size_t i = 0; i < w.data.size(); ++i) acc += x->value.data[i] * w.data[i];
    VarPtr xp = x;
    Tensor4 wcopy = w;
    return Var::op_node(Tensor4::scalar(acc), {x}, [xp, wcopy](Var& self) {
        if (!xp->requires_grad()) return;
        const Scalar g = self.grad().data[0];
        Tensor4& dx = xp->grad();
        for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += g * wcopy.data[i];
    }, "weighted_sum");
}

}  // namespace cmda
