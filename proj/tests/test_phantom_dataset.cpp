#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cmda/dataset.hpp"
#include "cmda/phantom.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cmda;
namespace fs = std::filesystem;

namespace {

double class_mean_intensity(const PhantomCase& pc, int cls) {
    double acc = 0;
    long long n = 0;
    for (size_t i = 0; i < pc.vol.data.size(); ++i)
        if (pc.labels.data[i] == cls) {
            acc += pc.vol.data[i];
            ++n;
        }
    REQUIRE(n > 0);
    return acc / static_cast<double>(n);
}

std::map<int, long long> histogram(const LabelMap& m) {
    std::map<int, long long> h;
    for (uint8_t v : m.data) h[v]++;
    return h;
}

std::string dir_digest(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files)
        acc += fs::path(f).filename().string() + ":" + sha256_file_hex(f) + "\n";
    return sha256_hex(acc.data(), acc.size());
}

}  // namespace

TEST_SUITE_BEGIN("phantom");

TEST_CASE("generation is deterministic and modality-unpaired") {
    PhantomSpec sp = testsup::tiny_spec();
    PhantomCase a1 = gen_case(sp, 12, Modality::A);
    PhantomCase a2 = gen_case(sp, 12, Modality::A);
    CHECK(a1.vol.data == a2.vol.data);
    CHECK(a1.labels.data == a2.labels.data);
    CHECK(a1.geometry == a2.geometry);

    PhantomCase b = gen_case(sp, 12, Modality::B);
    CHECK(a1.labels.data != b.labels.data);  // same seed, different anatomy stream

    PhantomCase a3 = gen_case(sp, 13, Modality::A);
    CHECK(a1.labels.data != a3.labels.data);
}

TEST_CASE("all five classes appear and anatomy holds") {
    PhantomSpec sp = testsup::tiny_spec();
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull, 6ull, 7ull, 8ull}) {
        for (Modality m : {Modality::A, Modality::B}) {
            CAPTURE(seed);
            PhantomCase pc = gen_case(sp, seed, m);
            auto h = histogram(pc.labels);
            for (int c = 0; c < 5; ++c) {
                CAPTURE(c);
                CHECK(h[c] > 0);
            }
            std::string why;
            CHECK_MESSAGE(check_anatomy(pc.labels, &why), why);
            // background dominates
            CHECK(h[0] > pc.labels.data.size() / 2);
        }
    }
}

TEST_CASE("modality intensity profiles differ as configured") {
    PhantomSpec sp = testsup::tiny_spec();
    PhantomCase a = gen_case(sp, 21, Modality::A);
    PhantomCase b = gen_case(sp, 21, Modality::B);
    // modality A: aorta bright against background; modality B: inverted
    double a_bg = class_mean_intensity(a, 0), a_aa = class_mean_intensity(a, 1);
    double b_bg = class_mean_intensity(b, 0), b_aa = class_mean_intensity(b, 1);
    CHECK(a_aa > a_bg + 0.2);
    CHECK(b_aa < b_bg - 0.2);
}

TEST_CASE("check_anatomy flags an unenclosed blood pool") {
    LabelMap lab(5, 7, 7, 0);
    // LV blood voxel with one myo neighbor missing
    lab.at(2, 3, 3) = 3;
    lab.at(1, 3, 3) = 4;
    lab.at(3, 3, 3) = 4;
    lab.at(2, 2, 3) = 4;
    lab.at(2, 4, 3) = 4;
    lab.at(2, 3, 2) = 4;
    // (2,3,4) left open: background touches the pool
    lab.at(0, 0, 0) = 1;
    lab.at(0, 1, 0) = 2;
    std::string why;
    CHECK(!check_anatomy(lab, &why));
    CHECK(!why.empty());
    lab.at(2, 3, 4) = 4;  // close the shell
    CHECK(check_anatomy(lab, &why));
}

TEST_CASE("impossible geometry exhausts retries") {
    PhantomSpec sp = testsup::tiny_spec();
    sp.lv_r_min = sp.lv_r_max = 30.0;  // cannot fit a 32-wide slice
    sp.max_retries = 5;
    CHECK_THROWS_AS(gen_case(sp, 1, Modality::A), ContractError);
}

TEST_CASE("standardize centers and scales") {
    PhantomSpec sp = testsup::tiny_spec();
    PhantomCase pc = gen_case(sp, 31, Modality::A);
    Volume s = standardize(pc.vol);
    double mean = 0;
    for (double v : s.data) mean += v;
    mean /= static_cast<double>(s.data.size());
    double var = 0;
    for (double v : s.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(s.data.size());
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));

    // affine-invariant: standardize(a*v + b) == standardize(v)
    Volume t = pc.vol;
    for (double& v : t.data) v = 3.5 * v - 2.0;
    Volume s2 = standardize(t);
    double worst = 0;
    for (size_t i = 0; i < s.data.size(); ++i)
        worst = std::max(worst, std::abs(s.data[i] - s2.data[i]));
    CHECK(worst < 1e-9);

    Volume flat(4, 16, 16, 1.25);
    CHECK_THROWS_AS(standardize(flat), ContractError);
}

TEST_CASE("slice stacking") {
    Volume v(5, 16, 16);
    for (int z = 0; z < 5; ++z)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) v.at(z, y, x) = z * 1000 + y * 16 + x;
    LabelMap lab(5, 16, 16, 0);
    lab.at(2, 4, 4) = 3;

    auto [img, y] = sample_stack(v, lab, 2);
    CHECK(img.shape == Shape4{1, 3, 16, 16});
    CHECK(img.at(0, 0, 0, 5) == v.at(1, 0, 5));
    CHECK(img.at(0, 1, 0, 5) == v.at(2, 0, 5));
    CHECK(img.at(0, 2, 0, 5) == v.at(3, 0, 5));
    CHECK(y.at(0, 4, 4) == 3);

    CHECK_THROWS_AS(sample_stack(v, lab, 0), ContractError);
    CHECK_THROWS_AS(sample_stack(v, lab, 4), ContractError);

    Tensor4 lo = sample_stack_clamped(v, 0);
    CHECK(lo.at(0, 0, 2, 2) == v.at(0, 2, 2));  // clamped low neighbor
    CHECK(lo.at(0, 1, 2, 2) == v.at(0, 2, 2));
    CHECK(lo.at(0, 2, 2, 2) == v.at(1, 2, 2));
    Tensor4 hi = sample_stack_clamped(v, 4);
    CHECK(hi.at(0, 0, 2, 2) == v.at(3, 2, 2));
    CHECK(hi.at(0, 2, 2, 2) == v.at(4, 2, 2));  // clamped high neighbor
    Tensor4 mid = sample_stack_clamped(v, 2);
    CHECK(mid.data == img.data);
}

TEST_CASE("augmentation: identity transform, determinism, bounded change") {
    PhantomSpec sp = testsup::tiny_spec();
    PhantomCase pc = gen_case(sp, 41, Modality::A);
    auto [img, lab] = sample_stack(pc.vol, pc.labels, sp.depth / 2);

    auto [ii, il] = apply_affine(img, lab, AffineParams{0.0, 1.0, 0.0});
    CHECK(ii.data == img.data);
    CHECK(il.data == lab.data);

    auto a1 = augment(img, lab, 99);
    auto a2 = augment(img, lab, 99);
    CHECK(a1.first.data == a2.first.data);
    CHECK(a1.second.data == a2.second.data);
    auto a3 = augment(img, lab, 100);
    CHECK(a1.first.data != a3.first.data);

    // labels stay valid classes, and the foreground mass moves only modestly
    // (the tiny slice holds ~60 foreground pixels, so +-15% scale plus shifts
    // legitimately moves a couple dozen percent)
    long long fg_in = 0;
    for (uint8_t v : lab.data) fg_in += v > 0;
    REQUIRE(fg_in > 0);
    for (uint64_t s = 0; s < 20; ++s) {
        auto [ai, al] = augment(img, lab, s);
        long long fg = 0;
        for (uint8_t v : al.data) {
            CHECK(v < 5);
            fg += v > 0;
        }
        double rel = std::abs(static_cast<double>(fg - fg_in)) / static_cast<double>(fg_in);
        CAPTURE(s);
        CHECK(rel < 0.40);
    }

    // draw_augment_params honors its documented ranges
    Rng rng(55);
    for (int i = 0; i < 200; ++i) {
        AffineParams p = draw_augment_params(rng);
        CHECK(std::abs(p.rot_deg) <= 15.0);
        CHECK(p.zoom >= 0.9);
        CHECK(p.zoom <= 1.1);
        CHECK(std::abs(p.shear) <= 0.1);
    }
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("dataset");

TEST_CASE("generation writes a loadable, byte-stable dataset") {
    testsup::TempDir t1("ds1"), t2("ds2");
    DatasetGenConfig gc;
    gc.spec = testsup::tiny_spec();
    gc.n_train = 3;
    gc.n_test = 2;
    gc.seed = 71;

    DatasetManifest m1 = gen_dataset(t1.path(), Modality::A, gc);
    CHECK(m1.cases.size() == 5);
    CHECK(m1.names(Split::kTrain).size() == 3);
    CHECK(m1.names(Split::kTest).size() == 2);
    for (const auto& c : m1.cases) {
        CHECK(fs::exists(m1.volume_path(c.name)));
        CHECK(fs::exists(m1.labels_path(c.name)));
        CHECK(fs::exists(m1.meta_path(c.name)));
    }

    // same seed, fresh directory: byte-identical content
    DatasetManifest m2 = gen_dataset(t2.path(), Modality::A, gc);
    (void)m2;
    CHECK(dir_digest(t1.path()) == dir_digest(t2.path()));

    // round trip through the manifest reader
    DatasetManifest rd = read_manifest(t1.path());
    CHECK(rd.modality == Modality::A);
    CHECK(rd.seed == 71);
    CHECK(rd.depth == gc.spec.depth);
    CHECK(rd.cases.size() == 5);

    // volumes survive the f32 file format to within float precision
    PhantomCase pc = gen_case(gc.spec, Rng::derive(Rng::derive(71, 0xDA7A0Aull), 0), Modality::A);
    Volume v = load_case_volume(rd, rd.cases[0].name);
    REQUIRE(v.data.size() == pc.vol.data.size());
    double worst = 0;
    for (size_t i = 0; i < v.data.size(); ++i)
        worst = std::max(worst, std::abs(v.data[i] - pc.vol.data[i]));
    CHECK(worst < 1e-6);

    LabelMap lab = load_case_labels(rd, rd.cases[0].name);
    CHECK(lab.data == pc.labels.data);

    auto meta = read_case_meta(rd, rd.cases[0].name);
    CHECK(meta.count("geometry") == 1);
    CHECK(meta.count("seed") == 1);
}

TEST_CASE("modality datasets share no case seeds") {
    testsup::TempDir t("ds_mod");
    DatasetGenConfig gc;
    gc.spec = testsup::tiny_spec();
    gc.n_train = 2;
    gc.n_test = 1;
    gc.seed = 72;
    DatasetManifest ma = gen_dataset(t.path() + "/a", Modality::A, gc);
    DatasetManifest mb = gen_dataset(t.path() + "/b", Modality::B, gc);
    std::set<std::string> seeds;
    for (const auto& m : {ma, mb})
        for (const auto& c : m.cases) seeds.insert(read_case_meta(m, c.name).at("seed"));
    CHECK(seeds.size() == 6);  // all distinct
}

TEST_CASE("load_split standardizes and respects the label switch") {
    testsup::TempDir t("ds_load");
    DatasetGenConfig gc;
    gc.spec = testsup::tiny_spec();
    gc.n_train = 2;
    gc.n_test = 1;
    gc.seed = 73;
    gen_dataset(t.path(), Modality::B, gc);

    FileAudit audit;
    audit.set_phase("load");
    DatasetManifest m = read_manifest(t.path(), &audit);
    LoadedDataset train = load_split(m, Split::kTrain, false, &audit);
    CHECK(train.cases.size() == 2);
    CHECK(!train.cases[0].has_labels);
    for (const auto& c : train.cases) {
        double mean = 0;
        for (double v : c.vol.data) mean += v;
        mean /= static_cast<double>(c.vol.data.size());
        CHECK(std::abs(mean) < 1e-9);
    }
    CHECK(audit.count("load", "volume:b") == 2);
    CHECK(audit.count("load", "labels:b") == 0);
    CHECK(audit.count("load", "manifest:b") == 1);

    LoadedDataset test = load_split(m, Split::kTest, true, &audit);
    CHECK(test.cases.size() == 1);
    CHECK(test.cases[0].has_labels);
    CHECK(audit.count("load", "labels:b") == 1);
    CHECK(audit.count("", "labels:b") == 1);
}

TEST_CASE("the audit blocks forbidden opens before they happen") {
    testsup::TempDir t("ds_audit");
    DatasetGenConfig gc;
    gc.spec = testsup::tiny_spec();
    gc.n_train = 1;
    gc.n_test = 1;
    gc.seed = 74;
    gen_dataset(t.path(), Modality::B, gc);

    FileAudit audit;
    audit.set_phase("adapt");
    audit.forbid("labels:b");
    DatasetManifest m = read_manifest(t.path(), &audit);
    CHECK_THROWS_AS(load_split(m, Split::kTrain, true, &audit), AuditViolation);
    CHECK(audit.count("adapt", "labels:b") == 0);  // blocked, never recorded
    LoadedDataset ok = load_split(m, Split::kTrain, false, &audit);
    CHECK(ok.cases.size() == 1);

    audit.allow("labels:b");
    audit.set_phase("eval");
    LoadedDataset ev = load_split(m, Split::kTest, true, &audit);
    CHECK(ev.cases[0].has_labels);
    CHECK(audit.count("eval", "labels:b") == 1);

    std::string audit_path = t.path() + "/audit.txt";
    audit.write(audit_path);
    std::string text = read_text_file(audit_path);
    CHECK(text.find("eval") != std::string::npos);
    CHECK(text.find("labels:b") != std::string::npos);
}

TEST_CASE("missing or malformed dataset files error cleanly") {
    testsup::TempDir t("ds_bad");
    CHECK_THROWS_AS(read_manifest(t.path() + "/nope"), ContractError);

    DatasetGenConfig gc;
    gc.spec = testsup::tiny_spec();
    gc.n_train = 1;
    gc.n_test = 1;
    gc.seed = 75;
    DatasetManifest m = gen_dataset(t.path(), Modality::A, gc);

    // corrupt label payload: out-of-range class value
    std::string lp = m.labels_path(m.cases[0].name);
    {
        std::ofstream os(lp, std::ios::binary | std::ios::in | std::ios::out);
        os.seekp(10);
        char v = 9;
        os.write(&v, 1);
    }
    CHECK_THROWS_AS(load_case_labels(m, m.cases[0].name), ContractError);

    // truncated volume: size check fires
    std::string vp = m.volume_path(m.cases[0].name);
    fs::resize_file(vp, fs::file_size(vp) - 4);
    CHECK_THROWS_AS(load_case_volume(m, m.cases[0].name), ContractError);

    CHECK_THROWS_AS(load_case_volume(m, "case_999"), ContractError);

    // empty split rejection: a manifest with no test cases
    DatasetManifest empty = m;
    empty.cases = {{m.cases[0].name, Split::kTrain}};
    CHECK_THROWS_AS(load_split(empty, Split::kTest, false), ContractError);
}

TEST_SUITE_END();
