#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>

#include "cmda/common.hpp"
#include "cmda/tensor.hpp"

namespace cmda {

struct Volume {
    int d = 0, h = 0, w = 0;
    std::array<double, 3> spacing = {1.0, 1.0, 1.0};
    std::vector<double> data;  // (z, y, x) row-major

    Volume() = default;
    Volume(int d_, int h_, int w_, double fill = 0.0);
    double& at(int z, int y, int x) { return data[(static_cast<size_t>(z) * h + y) * w + x]; }
    double at(int z, int y, int x) const { return data[(static_cast<size_t>(z) * h + y) * w + x]; }
    size_t numel() const { return data.size(); }
    void validate() const;
};

struct LabelMap {
    int d = 0, h = 0, w = 0;
    std::vector<uint8_t> data;

    LabelMap() = default;
    LabelMap(int d_, int h_, int w_, uint8_t fill = 0);
    uint8_t& at(int z, int y, int x) { return data[(static_cast<size_t>(z) * h + y) * w + x]; }
    uint8_t at(int z, int y, int x) const { return data[(static_cast<size_t>(z) * h + y) * w + x]; }
};

enum class Modality { A, B };
std::string modality_tag(Modality m);          // "a" / "b"
Modality modality_from_tag(const std::string&);

// Per-modality rendering: class mean intensities -> gamma curve ->
// multiplicative low-frequency bias field -> additive gaussian noise.
struct ModalityTable {
    std::array<double, 5> mu;  // background, AA, LA-blood, LV-blood, LV-myo
    double noise_sigma = 0.05;
    double bias_amp = 0.2;
    double gamma = 1.0;
};

// Classes: 0 background, 1 ascending aorta (cylinder along the stacking
// axis), 2 LA blood pool (ellipsoid), 3 LV blood pool (sphere), 4 LV
// myocardium (spherical shell around the LV blood pool).
struct PhantomSpec {
    int depth = 32, height = 64, width = 64;
    int num_classes = 5;

    double lv_r_min = 6.0, lv_r_max = 9.0;
    double myo_t_min = 2.5, myo_t_max = 4.0;
    double la_axis_min = 4.0, la_axis_max = 7.0;
    double aa_r_min = 3.0, aa_r_max = 4.5;
    int max_retries = 100;

    ModalityTable table_a, table_b;

    static PhantomSpec desk_default();
    const ModalityTable& table(Modality m) const { return m == Modality::A ? table_a : table_b; }
    void validate() const;
};

struct PhantomCase {
    Volume vol;
    LabelMap labels;
    std::string geometry;  // human-readable draw summary, logged for unpaired-ness
};

// Deterministic in (spec, seed, modality); the modality folds into the RNG
// stream so the two datasets are unpaired even for equal seeds.
PhantomCase gen_case(const PhantomSpec& spec, uint64_t seed, Modality m);

// Every LV-blood voxel is enclosed by the myocardium shell (6-neighborhood),
// and all classes are present.
bool check_anatomy(const LabelMap& labels, std::string* why = nullptr);

// Zero mean, unit variance over the volume. Errors on constant input.
Volume standardize(const Volume& v);

struct AffineParams {
    double rot_deg = 0.0;
    double zoom = 1.0;
    double shear = 0.0;
};

AffineParams draw_augment_params(Rng& rng);  // ±15 deg, zoom 0.9..1.1, |shear| <= 0.1

// Same transform on every channel; bilinear for the image, nearest for the
// labels; out-of-range samples fill with 0 / background.
std::pair<Tensor4, LabelBatch> apply_affine(const Tensor4& slab, const LabelBatch& labels,
                                            const AffineParams& p);

std::pair<Tensor4, LabelBatch> augment(const Tensor4& slab, const LabelBatch& labels,
                                       uint64_t seed);

// Channels = slices (index-1, index, index+1) along axis 0; the middle
// slice's labels are the ground truth. index must lie in [1, d-2].
std::pair<Tensor4, LabelBatch> sample_stack(const Volume& v, const LabelMap& labels,
                                            int index);

// Evaluation variant covering every slice: neighbors clamp at the ends.
Tensor4 sample_stack_clamped(const Volume& v, int index);

LabelBatch slice_labels(const LabelMap& labels, int z);

}  // namespace cmda
