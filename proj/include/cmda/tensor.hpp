#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cmda/common.hpp"

namespace cmda {

using Scalar = double;

// (batch, channels, rows, cols); every entry >= 1.
struct Shape4 {
    int n = 1, c = 1, h = 1, w = 1;

    std::int64_t numel() const {
        return std::int64_t(n) * c * h * w;
    }
    bool operator==(const Shape4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    bool operator!=(const Shape4& o) const { return !(*this == o); }
    std::string str() const { return strmsg("(", n, ",", c, ",", h, ",", w, ")"); }
};

// Dense rank-4 tensor, row-major (n, c, h, w). Plain struct: shape and
// storage are public, invariants are enforced at construction.
struct Tensor4 {
    Shape4 shape;
    std::vector<Scalar> data;

    Tensor4() : shape{0, 0, 0, 0} {}
    explicit Tensor4(Shape4 s) : shape(s) {
        validate_shape(s);
        data.assign(static_cast<std::size_t>(s.numel()), 0.0);
    }
    Tensor4(Shape4 s, Scalar value) : shape(s) {
        validate_shape(s);
        data.assign(static_cast<std::size_t>(s.numel()), value);
    }
    Tensor4(Shape4 s, std::vector<Scalar> values) : shape(s), data(std::move(values)) {
        validate_shape(s);
        if (static_cast<std::int64_t>(data.size()) != s.numel())
            contract_fail("tensor data length ", data.size(), " does not match shape ", s.str());
    }

    static Tensor4 scalar(Scalar v) {
        Tensor4 t(Shape4{1, 1, 1, 1});
        t.data[0] = v;
        return t;
    }

    std::int64_t numel() const { return shape.numel(); }
    bool empty() const { return data.empty(); }

    Scalar& at(int n, int c, int h, int w) {
        return data[((std::size_t(n) * shape.c + c) * shape.h + h) * shape.w + w];
    }
    Scalar at(int n, int c, int h, int w) const {
        return data[((std::size_t(n) * shape.c + c) * shape.h + h) * shape.w + w];
    }
    Scalar& operator[](std::size_t i) { return data[i]; }
    Scalar operator[](std::size_t i) const { return data[i]; }

    void fill(Scalar v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(0.0); }

    bool all_finite() const {
        for (Scalar v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static void validate_shape(const Shape4& s) {
        if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
            contract_fail("invalid tensor shape ", s.str(), ": all entries must be >= 1");
    }
};

// Integer class labels for a batch of 2-D slices, aligned with a
// (n, C, h, w) probability tensor.
struct LabelBatch {
    int n = 0, h = 0, w = 0;
    std::vector<std::uint8_t> data;  // n*h*w, values in [0, num_classes)

    LabelBatch() = default;
    LabelBatch(int n_, int h_, int w_) : n(n_), h(h_), w(w_), data(std::size_t(n_) * h_ * w_, 0) {}

    std::uint8_t& at(int b, int y, int x) { return data[(std::size_t(b) * h + y) * w + x]; }
    std::uint8_t at(int b, int y, int x) const { return data[(std::size_t(b) * h + y) * w + x]; }
    std::size_t numel() const { return data.size(); }
};

// Convolution geometry. Output spatial size follows
//   out = floor((in + 2*pad - dilation*(k-1) - 1) / stride) + 1
// and must stay >= 1.
struct ConvSpec {
    int in_ch = 1, out_ch = 1;
    int kh = 3, kw = 3;
    int stride = 1;
    int dilation = 1;
    int pad = 0;

    void validate() const;
    int out_h(int h) const { return (h + 2 * pad - dilation * (kh - 1) - 1) / stride + 1; }
    int out_w(int w) const { return (w + 2 * pad - dilation * (kw - 1) - 1) / stride + 1; }
    Shape4 weight_shape() const { return Shape4{out_ch, in_ch, kh, kw}; }
    Shape4 out_shape(const Shape4& in) const;
};

// Random fills used by layer initialization and tests.
void fill_gaussian(Tensor4& t, Rng& rng, Scalar mean, Scalar stddev);
void fill_uniform(Tensor4& t, Rng& rng, Scalar lo, Scalar hi);

}  // namespace cmda
