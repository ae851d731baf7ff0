#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cmda/autograd.hpp"
#include "cmda/ops.hpp"
#include "cmda/tensor.hpp"

namespace cmda {

// One weighted layer in a network registry. Indices are 1-based and follow
// forward order; projection convs count like any other weighted layer.
struct LayerEntry {
    int index = 0;
    std::string name;
    std::string role;  // conv1 | rm2..rm7 | conv10 | smooth | head | critic
    bool is_deconv = false;
    ConvSpec conv;           // when !is_deconv
    int de_in = 0, de_out = 0;  // when is_deconv
    Shape4 weight_shape() const;
    Shape4 bias_shape() const;
};

struct LayerParams {
    VarPtr w, b;
};

// Resolves a 1-based layer index to its parameters. Lets the adapted forward
// route the first d layers to DAM parameters and the rest to the source.
class IParamSource {
public:
    virtual ~IParamSource() = default;
    virtual const LayerParams& layer(int index) const = 0;
};

class ParamStore : public IParamSource {
public:
    ParamStore() = default;

    // He-initialized parameters for every entry (gaussian std sqrt(2/fan_in),
    // zero bias), drawn in index order so seeds reproduce bit-identically.
    static ParamStore init(const std::vector<LayerEntry>& registry, Rng& rng,
                           const std::string& name_prefix = "");

    // Fixed-std gaussian weights, zero bias. The critic uses this so its
    // parameters start inside the clipping bound.
    static ParamStore init_gaussian(const std::vector<LayerEntry>& registry, Rng& rng,
                                    double stddev, const std::string& name_prefix = "");

    // Deep copy of layers 1..d under a new name prefix.
    ParamStore clone_prefix(const std::vector<LayerEntry>& registry, int d,
                            const std::string& name_prefix) const;

    const LayerParams& layer(int index) const override;
    LayerParams& layer_mut(int index);
    int size() const { return static_cast<int>(v_.size()); }

    std::vector<VarPtr> all() const;  // w1, b1, w2, b2, ... in index order
    void set_requires_grad(bool rg);
    void zero_grad();

private:
    std::vector<LayerParams> v_;  // v_[i] holds layer i+1
};

// Routes indices <= split to `head` and the rest to `tail`.
class SplitParamSource : public IParamSource {
public:
    SplitParamSource(const IParamSource& head, const IParamSource& tail, int split)
        : head_(head), tail_(tail), split_(split) {}
    const LayerParams& layer(int index) const override {
        return index <= split_ ? head_.layer(index) : tail_.layer(index);
    }

private:
    const IParamSource& head_;
    const IParamSource& tail_;
    int split_;
};

// Network topology building blocks. A residual block is conv-ReLU-conv plus
// an identity skip (projection conv when shape or stride differs), merged by
// addition and a final ReLU.
struct PlainConvStage {
    int layer;
    bool relu;
};
struct ResBlockStage {
    int c1, c2;
    int proj;  // 0 when the skip is an identity
};
struct DeconvStage {
    int layer;  // ReLU after
};
using Stage = std::variant<PlainConvStage, ResBlockStage, DeconvStage>;

struct ForwardResult {
    VarPtr logits;  // null when the run stopped before the head
    VarPtr probs;   // null when the run stopped before the softmax
    std::map<int, VarPtr> taps;
};

// Runs `stages`, resolving parameters through `src`. Records the activation
// exiting each tapped layer: post-ReLU conv output for plain convs and
// in-block first convs, the raw projection output for projections, the
// post-add block output for block-final convs, and raw logits for the head.
// `upto` stops execution after that layer index (0 = run everything).
ForwardResult run_stages(const std::vector<Stage>& stages,
                         const std::vector<LayerEntry>& registry,
                         const IParamSource& src, const VarPtr& x,
                         const std::vector<int>& taps, int upto = 0,
                         bool softmax_head = true);

// Shape inference matching run_stages, without allocating tensors.
std::map<int, Shape4> stage_tap_shapes(const std::vector<Stage>& stages,
                                       const std::vector<LayerEntry>& registry,
                                       Shape4 input, const std::vector<int>& taps);

}  // namespace cmda
