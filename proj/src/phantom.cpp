#include "cmda/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cmda {

Volume::Volume(int d_, int h_, int w_, double fill)
    : d(d_), h(h_), w(w_), data(static_cast<size_t>(d_) * h_ * w_, fill) {
    if (d < 1 || h < 1 || w < 1) contract_fail("Volume: invalid extent ", d, "x", h, "x", w);
}

void Volume::validate() const {
    if (d < 1 || h < 1 || w < 1 || data.size() != static_cast<size_t>(d) * h * w)
        contract_fail("Volume: inconsistent extents");
    for (double s : spacing)
        if (!(s > 0.0)) contract_fail("Volume: spacing must be > 0");
    for (double v : data)
        if (!std::isfinite(v)) contract_fail("Volume: non-finite value");
}

LabelMap::LabelMap(int d_, int h_, int w_, uint8_t fill)
    : d(d_), h(h_), w(w_), data(static_cast<size_t>(d_) * h_ * w_, fill) {
    if (d < 1 || h < 1 || w < 1) contract_fail("LabelMap: invalid extent ", d, "x", h, "x", w);
}

std::string modality_tag(Modality m) { return m == Modality::A ? "a" : "b"; }

Modality modality_from_tag(const std::string& t) {
    if (t == "a") return Modality::A;
    if (t == "b") return Modality::B;
    contract_fail("modality_from_tag: unknown tag '", t, "'");
}

PhantomSpec PhantomSpec::desk_default() {
    PhantomSpec s;
    // modality A: bright structures on a dark background
    s.table_a.mu = {0.15, 0.80, 0.65, 0.75, 0.35};
    s.table_a.noise_sigma = 0.05;
    s.table_a.bias_amp = 0.20;
    s.table_a.gamma = 1.0;
    // modality B: class intensity ordering inverted, stronger curve and noise
    s.table_b.mu = {0.85, 0.25, 0.35, 0.30, 0.70};
    s.table_b.noise_sigma = 0.07;
    s.table_b.bias_amp = 0.25;
    s.table_b.gamma = 1.6;
    return s;
}

void PhantomSpec::validate() const {
    if (depth < 8 || height < 16 || width < 16)
        contract_fail("PhantomSpec: volume ", depth, "x", height, "x", width, " too small");
    if (num_classes != 5) contract_fail("PhantomSpec: generator renders exactly 5 classes");
    if (!(lv_r_min > 0 && lv_r_max >= lv_r_min && myo_t_min > 0 && myo_t_max >= myo_t_min &&
          la_axis_min > 0 && la_axis_max >= la_axis_min && aa_r_min > 0 &&
          aa_r_max >= aa_r_min))
        contract_fail("PhantomSpec: malformed geometry priors");
    if (max_retries < 1) contract_fail("PhantomSpec: max_retries must be >= 1");
}

namespace {

struct Geometry {
    double lv_c[3], lv_r, myo_t;
    double la_c[3], la_ax[3];
    double aa_c[2], aa_r;  // (y, x); cylinder spans [aa_z0, aa_z1]
    int aa_z0, aa_z1;
};

double dist3(const double* a, const double* b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                     (a[2] - b[2]) * (a[2] - b[2]));
}

bool draw_geometry(const PhantomSpec& sp, Rng& rng, Geometry& g) {
    const double margin = 1.5;
    g.lv_r = rng.uniform(sp.lv_r_min, sp.lv_r_max);
    g.myo_t = rng.uniform(sp.myo_t_min, sp.myo_t_max);
    const double lv_R = g.lv_r + g.myo_t;
    g.lv_c[0] = rng.uniform(lv_R + margin, sp.depth - 1 - lv_R - margin);
    g.lv_c[1] = rng.uniform(sp.height * 0.45, sp.height * 0.70);
    g.lv_c[2] = rng.uniform(sp.width * 0.22, sp.width * 0.38);

    for (int i = 0; i < 3; ++i) g.la_ax[i] = rng.uniform(sp.la_axis_min, sp.la_axis_max);
    const double la_m = *std::max_element(g.la_ax, g.la_ax + 3);
    g.la_c[0] = rng.uniform(la_m + margin, sp.depth - 1 - la_m - margin);
    g.la_c[1] = rng.uniform(sp.height * 0.52, sp.height * 0.72);
    g.la_c[2] = rng.uniform(sp.width * 0.62, sp.width * 0.80);

    g.aa_r = rng.uniform(sp.aa_r_min, sp.aa_r_max);
    g.aa_c[0] = rng.uniform(sp.height * 0.15, sp.height * 0.32);  // y
    g.aa_c[1] = rng.uniform(sp.width * 0.55, sp.width * 0.80);    // x
    g.aa_z0 = rng.uniform_int(0, 3);
    g.aa_z1 = rng.uniform_int(sp.depth - 4, sp.depth - 1);

    // bounds
    auto inside = [&](double c, double r, int extent) {
        return c - r >= margin && c + r <= extent - 1 - margin;
    };
    if (!inside(g.lv_c[1], lv_R, sp.height) || !inside(g.lv_c[2], lv_R, sp.width)) return false;
    if (!inside(g.la_c[1], la_m, sp.height) || !inside(g.la_c[2], la_m, sp.width)) return false;
    if (!inside(g.aa_c[0], g.aa_r, sp.height) || !inside(g.aa_c[1], g.aa_r, sp.width))
        return false;

    // pairwise clearance
    const double gap = 2.0;
    if (dist3(g.lv_c, g.la_c) < lv_R + la_m + gap) return false;
    const double d_lv_aa = std::hypot(g.lv_c[1] - g.aa_c[0], g.lv_c[2] - g.aa_c[1]);
    if (d_lv_aa < lv_R + g.aa_r + gap) return false;
    const double d_la_aa = std::hypot(g.la_c[1] - g.aa_c[0], g.la_c[2] - g.aa_c[1]);
    if (d_la_aa < la_m + g.aa_r + gap) return false;
    return true;
}

void paint_labels(const PhantomSpec& sp, const Geometry& g, LabelMap& lab) {
    const double r2 = g.lv_r * g.lv_r;
    const double R2 = (g.lv_r + g.myo_t) * (g.lv_r + g.myo_t);
    for (int z = 0; z < sp.depth; ++z)
        for (int y = 0; y < sp.height; ++y)
            for (int x = 0; x < sp.width; ++x) {
                const double dz = z - g.lv_c[0], dy = y - g.lv_c[1], dx = x - g.lv_c[2];
                const double q = dz * dz + dy * dy + dx * dx;
                if (q <= r2) {
                    lab.at(z, y, x) = 3;  // LV blood
                    continue;
                }
                if (q <= R2) {
                    lab.at(z, y, x) = 4;  // LV myocardium
                    continue;
                }
                const double ez = (z - g.la_c[0]) / g.la_ax[0];
                const double ey = (y - g.la_c[1]) / g.la_ax[1];
                const double ex = (x - g.la_c[2]) / g.la_ax[2];
                if (ez * ez + ey * ey + ex * ex <= 1.0) {
                    lab.at(z, y, x) = 2;  // LA blood
                    continue;
                }
                if (z >= g.aa_z0 && z <= g.aa_z1) {
                    const double ay = y - g.aa_c[0], ax = x - g.aa_c[1];
                    if (ay * ay + ax * ax <= g.aa_r * g.aa_r) lab.at(z, y, x) = 1;  // AA
                }
            }
}

std::string geometry_str(const Geometry& g) {
    return strmsg("lv=(", g.lv_c[0], ",", g.lv_c[1], ",", g.lv_c[2], ",r", g.lv_r, ",t",
                  g.myo_t, ");la=(", g.la_c[0], ",", g.la_c[1], ",", g.la_c[2], ",ax",
                  g.la_ax[0], ",", g.la_ax[1], ",", g.la_ax[2], ");aa=(", g.aa_c[0], ",",
                  g.aa_c[1], ",r", g.aa_r, ",z", g.aa_z0, "-", g.aa_z1, ")");
}

}  // namespace

bool check_anatomy(const LabelMap& lab, std::string* why) {
    std::array<long long, 5> hist{};
    for (uint8_t v : lab.data) {
        if (v > 4) {
            if (why) *why = strmsg("label value ", int(v), " out of range");
            return false;
        }
        ++hist[v];
    }
    for (int c = 0; c < 5; ++c)
        if (hist[c] == 0) {
            if (why) *why = strmsg("class ", c, " absent");
            return false;
        }
    static const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                  {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int z = 0; z < lab.d; ++z)
        for (int y = 0; y < lab.h; ++y)
            for (int x = 0; x < lab.w; ++x) {
                if (lab.at(z, y, x) != 3) continue;
                for (const auto& o : off) {
                    const int nz = z + o[0], ny = y + o[1], nx = x + o[2];
                    uint8_t nv = 0;
                    if (nz >= 0 && nz < lab.d && ny >= 0 && ny < lab.h && nx >= 0 &&
                        nx < lab.w)
                        nv = lab.at(nz, ny, nx);
                    if (nv != 3 && nv != 4) {
                        if (why)
                            *why = strmsg("LV blood voxel (", z, ",", y, ",", x,
                                          ") touches class ", int(nv));
                        return false;
                    }
                }
            }
    return true;
}

PhantomCase gen_case(const PhantomSpec& sp, uint64_t seed, Modality m) {
    sp.validate();
    Rng rng(Rng::derive(seed, m == Modality::A ? 0xA11CEull : 0xB0B5ull));

    Geometry g{};
    bool ok = false;
    std::string why;
    LabelMap lab;
    for (int attempt = 0; attempt < sp.max_retries; ++attempt) {
        if (!draw_geometry(sp, rng, g)) continue;
        lab = LabelMap(sp.depth, sp.height, sp.width, 0);
        paint_labels(sp, g, lab);
        if (check_anatomy(lab, &why)) {
            ok = true;
            break;
        }
    }
    if (!ok)
        contract_fail("gen_case: no valid geometry after ", sp.max_retries,
                      " retries (last: ", why.empty() ? "bounds/clearance" : why, ")");

    const ModalityTable& t = sp.table(m);
    // low-frequency multiplicative bias field: mean of three random cosines
    double fu[3][3], ph[3];
    for (int k = 0; k < 3; ++k) {
        for (int a = 0; a < 3; ++a) fu[k][a] = rng.uniform(-1.2, 1.2);
        ph[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }

    Volume vol(sp.depth, sp.height, sp.width);
    for (int z = 0; z < sp.depth; ++z)
        for (int y = 0; y < sp.height; ++y)
            for (int x = 0; x < sp.width; ++x) {
                double v = t.mu[lab.at(z, y, x)];
                v = std::pow(std::clamp(v, 0.0, 1.0), t.gamma);
                double f = 0.0;
                for (int k = 0; k < 3; ++k)
                    f += std::cos(2.0 * std::numbers::pi *
                                      (fu[k][0] * z / sp.depth + fu[k][1] * y / sp.height +
                                       fu[k][2] * x / sp.width) +
                                  ph[k]);
                v *= 1.0 + t.bias_amp * (f / 3.0);
                v += rng.gaussian(0.0, t.noise_sigma);
                vol.at(z, y, x) = v;
            }
    vol.validate();
    return PhantomCase{std::move(vol), std::move(lab), geometry_str(g)};
}

Volume standardize(const Volume& v) {
    v.validate();
    double mean = 0.0;
    for (double x : v.data) mean += x;
    mean /= static_cast<double>(v.numel());
    double var = 0.0;
    for (double x : v.data) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.numel());
    if (var < 1e-12) contract_fail("standardize: constant volume (variance ", var, ")");
    const double inv = 1.0 / std::sqrt(var);
    Volume out = v;
    for (double& x : out.data) x = (x - mean) * inv;
    return out;
}

AffineParams draw_augment_params(Rng& rng) {
    AffineParams p;
    p.rot_deg = rng.uniform(-15.0, 15.0);
    p.zoom = rng.uniform(0.9, 1.1);
    p.shear = rng.uniform(-0.1, 0.1);
    return p;
}

std::pair<Tensor4, LabelBatch> apply_affine(const Tensor4& slab, const LabelBatch& labels,
                                            const AffineParams& p) {
    const Shape4& s = slab.shape;
    if (s.n != 1 || labels.n != 1 || labels.h != s.h || labels.w != s.w)
        contract_fail("apply_affine: slab ", s.str(), " vs labels (", labels.n, ",",
                      labels.h, ",", labels.w, ")");
    const double th = p.rot_deg * std::numbers::pi / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    // forward map: rotation * zoom * shear; sampled via its inverse
    const double a00 = p.zoom * ct, a01 = p.zoom * (ct * p.shear - st);
    const double a10 = p.zoom * st, a11 = p.zoom * (st * p.shear + ct);
    const double det = a00 * a11 - a01 * a10;
    if (std::abs(det) < 1e-9) contract_fail("apply_affine: singular transform");
    const double i00 = a11 / det, i01 = -a01 / det;
    const double i10 = -a10 / det, i11 = a00 / det;
    const double cy = (s.h - 1) / 2.0, cx = (s.w - 1) / 2.0;

    Tensor4 img(s, 0.0);
    LabelBatch lab(1, s.h, s.w);
    for (int yo = 0; yo < s.h; ++yo)
        for (int xo = 0; xo < s.w; ++xo) {
            const double ry = yo - cy, rx = xo - cx;
            const double yi = i00 * ry + i01 * rx + cy;  // rows transform with a00,a01
            const double xi = i10 * ry + i11 * rx + cx;
            // bilinear image sample, zero outside
            const int y0 = static_cast<int>(std::floor(yi));
            const int x0 = static_cast<int>(std::floor(xi));
            const double fy = yi - y0, fx = xi - x0;
            for (int c = 0; c < s.c; ++c) {
                double acc = 0.0;
                for (int dy = 0; dy <= 1; ++dy)
                    for (int dx = 0; dx <= 1; ++dx) {
                        const double wgt = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
                        if (wgt == 0.0) continue;
                        const int yy = y0 + dy, xx = x0 + dx;
                        if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                        acc += wgt * slab.at(0, c, yy, xx);
                    }
                img.at(0, c, yo, xo) = acc;
            }
            const int yn = static_cast<int>(std::lround(yi));
            const int xn = static_cast<int>(std::lround(xi));
            lab.at(0, yo, xo) = (yn >= 0 && yn < s.h && xn >= 0 && xn < s.w)
                                    ? labels.at(0, yn, xn)
                                    : 0;
        }
    return {std::move(img), std::move(lab)};
}

std::pair<Tensor4, LabelBatch> augment(const Tensor4& slab, const LabelBatch& labels,
                                       uint64_t seed) {
    Rng rng(seed);
    return apply_affine(slab, labels, draw_augment_params(rng));
}

std::pair<Tensor4, LabelBatch> sample_stack(const Volume& v, const LabelMap& labels,
                                            int index) {
    if (v.d != labels.d || v.h != labels.h || v.w != labels.w)
        contract_fail("sample_stack: volume/labels extents differ");
    if (index < 1 || index > v.d - 2)
        contract_fail("sample_stack: index ", index, " outside [1, ", v.d - 2, "]");
    Tensor4 x(Shape4{1, 3, v.h, v.w});
    for (int c = 0; c < 3; ++c) {
        const int z = index - 1 + c;
        for (int y = 0; y < v.h; ++y)
            for (int xx = 0; xx < v.w; ++xx) x.at(0, c, y, xx) = v.at(z, y, xx);
    }
    return {std::move(x), slice_labels(labels, index)};
}

Tensor4 sample_stack_clamped(const Volume& v, int index) {
    if (index < 0 || index >= v.d)
        contract_fail("sample_stack_clamped: index ", index, " outside [0, ", v.d - 1, "]");
    Tensor4 x(Shape4{1, 3, v.h, v.w});
    for (int c = 0; c < 3; ++c) {
        const int z = std::clamp(index - 1 + c, 0, v.d - 1);
        for (int y = 0; y < v.h; ++y)
            for (int xx = 0; xx < v.w; ++xx) x.at(0, c, y, xx) = v.at(z, y, xx);
    }
    return x;
}

LabelBatch slice_labels(const LabelMap& labels, int z) {
    if (z < 0 || z >= labels.d)
        contract_fail("slice_labels: slice ", z, " outside [0, ", labels.d - 1, "]");
    LabelBatch out(1, labels.h, labels.w);
    for (int y = 0; y < labels.h; ++y)
        for (int x = 0; x < labels.w; ++x) out.at(0, y, x) = labels.at(z, y, x);
    return out;
}

}  // namespace cmda
