#pragma once

#include <map>
#include <string>
#include <vector>

#include "cmda/nn.hpp"

namespace cmda {

struct SegmenterConfig {
    int in_channels = 3;  // stacked neighboring slices
    int num_classes = 5;
    int base_width = 8;                                     // channels after conv1
    std::vector<int> rm_widths = {16, 32, 32, 32, 32, 32};  // RM2..RM7
    void validate() const;
};

// Dilated residual segmentation network. conv1 -> RM2..RM4 (stride-2 entries,
// /8 total) -> RM5, RM6 -> RM7 (dilation 2 on its convs) -> three stride-2
// transposed convs back to input resolution -> two 5x5 smoothing convs ->
// 1x1 class head -> per-pixel softmax. Each residual module stacks two
// conv-ReLU-conv blocks with identity skips (projection where shape changes).
struct Segmenter {
    SegmenterConfig cfg;
    std::vector<LayerEntry> registry;  // 1-based, forward order, every weighted layer
    std::vector<Stage> stages;
    std::vector<int> boundaries;  // final layer index of each module, ascending
    ParamStore params;
    std::vector<int> taps_h;  // default frozen-side taps: RM6 and RM7 outputs

    int n_layers() const { return static_cast<int>(registry.size()); }
    bool is_boundary(int index) const;
};

Segmenter build_segmenter(const SegmenterConfig& cfg, uint64_t seed);

// Named adaptation depths, each on a module boundary:
// shallow = last layer of RM4, mid = RM6, deep = RM7.
std::map<std::string, int> depth_presets(const Segmenter& m);

// Full forward through the model's own parameters.
ForwardResult forward_with_taps(const Segmenter& m, const VarPtr& x,
                                const std::vector<int>& taps);

// Forward with an explicit parameter source (adaptation routes the first d
// layers elsewhere); `upto` > 0 stops after that layer.
ForwardResult forward_with_taps(const Segmenter& m, const IParamSource& src,
                                const VarPtr& x, const std::vector<int>& taps,
                                int upto = 0);

std::map<int, Shape4> tap_shapes(const Segmenter& m, Shape4 input,
                                 const std::vector<int>& taps);

}  // namespace cmda
