#include "cmda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace cmda {

namespace {

void check_same_shape(const LabelMap& a, const LabelMap& b) {
    if (a.d != b.d || a.h != b.h || a.w != b.w)
        contract_fail("label map shape mismatch: (", a.d, ",", a.h, ",", a.w, ") vs (", b.d, ",",
                      b.h, ",", b.w, ")");
}

// 6-connected boundary: foreground voxel with at least one background
// neighbor, where out-of-volume counts as background.
std::vector<uint8_t> boundary_mask(const LabelMap& m, int cls, long long* count) {
    std::vector<uint8_t> fg(m.data.size());
    for (size_t i = 0; i < m.data.size(); ++i) fg[i] = m.data[i] == cls ? 1 : 0;

    std::vector<uint8_t> out(m.data.size(), 0);
    long long n = 0;
    auto bg = [&](int z, int y, int x) {
        if (z < 0 || z >= m.d || y < 0 || y >= m.h || x < 0 || x >= m.w) return true;
        return fg[(static_cast<size_t>(z) * m.h + y) * m.w + x] == 0;
    };
    for (int z = 0; z < m.d; ++z)
        for (int y = 0; y < m.h; ++y)
            for (int x = 0; x < m.w; ++x) {
                size_t i = (static_cast<size_t>(z) * m.h + y) * m.w + x;
                if (!fg[i]) continue;
                if (bg(z - 1, y, x) || bg(z + 1, y, x) || bg(z, y - 1, x) || bg(z, y + 1, x) ||
                    bg(z, y, x - 1) || bg(z, y, x + 1)) {
                    out[i] = 1;
                    ++n;
                }
            }
    *count = n;
    return out;
}

constexpr double kInf = std::numeric_limits<double>::max() / 4;

// One pass of the Felzenszwalb-Huttenlocher squared distance transform along
// a line with squared spacing w2. With integer seed distances the parabola
// values at grid points are integers, so the result is exact there.
void dt_line(const double* f, int n, double w2, double* d, int* v, double* z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            int p = v[k];
            s = ((f[q] + w2 * q * q) - (f[p] + w2 * p * p)) / (2 * w2 * (q - p));
            if (s <= z[k] && k > 0)
                --k;
            else
                break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = w2 * (q - v[k]) * (q - v[k]) + f[v[k]];
    }
}

// Exact squared Euclidean distance to the nearest seed voxel, anisotropic
// spacing, three separable passes.
std::vector<double> squared_edt(const std::vector<uint8_t>& seed, int d, int h, int w,
                                std::array<double, 3> spacing) {
    std::vector<double> g(seed.size());
    for (size_t i = 0; i < seed.size(); ++i) g[i] = seed[i] ? 0.0 : kInf;

    int nmax = std::max({d, h, w});
    std::vector<double> f(nmax), out(nmax), z(nmax + 1);
    std::vector<int> v(nmax);

    auto idx = [&](int zz, int yy, int xx) {
        return (static_cast<size_t>(zz) * h + yy) * w + xx;
    };

    for (int zz = 0; zz < d; ++zz)  // along x
        for (int yy = 0; yy < h; ++yy) {
            for (int xx = 0; xx < w; ++xx) f[xx] = g[idx(zz, yy, xx)];
            dt_line(f.data(), w, spacing[2] * spacing[2], out.data(), v.data(), z.data());
            for (int xx = 0; xx < w; ++xx) g[idx(zz, yy, xx)] = out[xx];
        }
    for (int zz = 0; zz < d; ++zz)  // along y
        for (int xx = 0; xx < w; ++xx) {
            for (int yy = 0; yy < h; ++yy) f[yy] = g[idx(zz, yy, xx)];
            dt_line(f.data(), h, spacing[1] * spacing[1], out.data(), v.data(), z.data());
            for (int yy = 0; yy < h; ++yy) g[idx(zz, yy, xx)] = out[yy];
        }
    for (int yy = 0; yy < h; ++yy)  // along z
        for (int xx = 0; xx < w; ++xx) {
            for (int zz = 0; zz < d; ++zz) f[zz] = g[idx(zz, yy, xx)];
            dt_line(f.data(), d, spacing[0] * spacing[0], out.data(), v.data(), z.data());
            for (int zz = 0; zz < d; ++zz) g[idx(zz, yy, xx)] = out[zz];
        }
    return g;
}

MetricStat stat_of(const std::vector<double>& xs) {
    MetricStat s;
    s.n = static_cast<int>(xs.size());
    if (xs.empty()) return s;
    double mu = 0;
    for (double x : xs) mu += x;
    mu /= xs.size();
    double var = 0;
    for (double x : xs) var += (x - mu) * (x - mu);
    var /= xs.size();
    s.mean = mu;
    s.stddev = std::sqrt(var);
    return s;
}

std::string fmt_pm(const MetricStat& s, int prec) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << s.mean << " +- " << s.stddev;
    return os.str();
}

}  // namespace

double dice_score(const LabelMap& pred, const LabelMap& gt, int cls) {
    check_same_shape(pred, gt);
    long long np = 0, ng = 0, ni = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        bool p = pred.data[i] == cls;
        bool g = gt.data[i] == cls;
        np += p;
        ng += g;
        ni += p && g;
    }
    if (np + ng == 0) return 100.0;
    return 100.0 * 2.0 * ni / static_cast<double>(np + ng);
}

std::optional<double> asd(const LabelMap& pred, const LabelMap& gt, int cls,
                          std::array<double, 3> spacing) {
    check_same_shape(pred, gt);
    for (double s : spacing)
        if (!(s > 0)) contract_fail("voxel spacing must be positive");

    bool pe = std::none_of(pred.data.begin(), pred.data.end(),
                           [&](uint8_t v) { return v == cls; });
    bool ge = std::none_of(gt.data.begin(), gt.data.end(),
                           [&](uint8_t v) { return v == cls; });
    if (pe || ge) return std::nullopt;

    long long nbp = 0, nbg = 0;
    std::vector<uint8_t> bp = boundary_mask(pred, cls, &nbp);
    std::vector<uint8_t> bg = boundary_mask(gt, cls, &nbg);

    std::vector<double> d_to_g = squared_edt(bg, pred.d, pred.h, pred.w, spacing);
    std::vector<double> d_to_p = squared_edt(bp, pred.d, pred.h, pred.w, spacing);

    double total = 0;
    for (size_t i = 0; i < bp.size(); ++i) {
        if (bp[i]) total += std::sqrt(d_to_g[i]);
        if (bg[i]) total += std::sqrt(d_to_p[i]);
    }
    return total / static_cast<double>(nbp + nbg);
}

MetricsReport aggregate(const std::vector<CaseMetrics>& cases,
                        const std::vector<std::string>& class_names) {
    if (cases.empty()) contract_fail("aggregate needs at least one case");
    size_t nc = class_names.size();
    for (const auto& c : cases)
        if (c.dice.size() != nc || c.asd.size() != nc)
            contract_fail("case ", c.case_name, " has ", c.dice.size(), " dice / ", c.asd.size(),
                          " asd entries, expected ", nc);

    MetricsReport r;
    r.n_cases = static_cast<int>(cases.size());
    double dice_sum = 0;
    for (size_t k = 0; k < nc; ++k) {
        ClassSummary cs;
        cs.name = class_names[k];
        std::vector<double> dv, av;
        for (const auto& c : cases) {
            dv.push_back(c.dice[k]);
            if (c.asd[k])
                av.push_back(*c.asd[k]);
            else
                ++cs.asd_na;
        }
        cs.dice = stat_of(dv);
        cs.asd = stat_of(av);
        dice_sum += cs.dice.mean;
        r.classes.push_back(std::move(cs));
    }
    r.mean_dice = nc ? dice_sum / static_cast<double>(nc) : 0.0;
    return r;
}

std::string format_report_table(const MetricsReport& r) {
    size_t wname = 9;  // "structure"
    for (const auto& c : r.classes) wname = std::max(wname, c.name.size());

    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(wname + 2)) << "structure"
       << std::setw(18) << "dice[%]" << "asd[voxel]\n";
    for (const auto& c : r.classes) {
        os << std::left << std::setw(static_cast<int>(wname + 2)) << c.name << std::setw(18)
           << fmt_pm(c.dice, 2);
        if (c.asd.n == 0)
            os << "N/A";
        else
            os << fmt_pm(c.asd, 2);
        if (c.asd_na > 0) os << "  (N/A in " << c.asd_na << "/" << r.n_cases << " cases)";
        os << "\n";
    }
    os << std::left << std::setw(static_cast<int>(wname + 2)) << "mean" << std::fixed
       << std::setprecision(2) << r.mean_dice << "\n";
    return os.str();
}

void write_case_metrics_csv(const std::string& path, const std::vector<CaseMetrics>& cases,
                            const std::vector<std::string>& class_names) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) contract_fail("cannot open ", path, " for writing");
    f << "case,class,dice_percent,asd_voxels\n";
    for (const auto& c : cases)
        for (size_t k = 0; k < class_names.size(); ++k) {
            f << c.case_name << "," << class_names[k] << "," << std::setprecision(10)
              << c.dice[k] << ",";
            if (c.asd[k])
                f << *c.asd[k];
            else
                f << "NA";
            f << "\n";
        }
}

void write_summary_csv(const std::string& path, const MetricsReport& r) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) contract_fail("cannot open ", path, " for writing");
    f << "class,dice_mean,dice_std,asd_mean,asd_std,asd_n,asd_na\n";
    f << std::setprecision(10);
    for (const auto& c : r.classes) {
        f << c.name << "," << c.dice.mean << "," << c.dice.stddev << ",";
        if (c.asd.n > 0)
            f << c.asd.mean << "," << c.asd.stddev;
        else
            f << "NA,NA";
        f << "," << c.asd.n << "," << c.asd_na << "\n";
    }
    f << "__mean__," << r.mean_dice << ",,,,,\n";
}

}  // namespace cmda
