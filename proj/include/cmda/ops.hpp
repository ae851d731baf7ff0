#pragma once

#include <vector>

#include "cmda/autograd.hpp"
#include "cmda/tensor.hpp"

namespace cmda {

// 2-D convolution with zero padding, stride and dilation per `spec`.
// x: (n, in_ch, h, w); w: (out_ch, in_ch, kh, kw); b: (1, out_ch, 1, 1).
VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, const ConvSpec& spec);

// Transposed convolution, kernel 2x2, stride 2: doubles spatial size.
// x: (n, in_ch, h, w); w: (in_ch, out_ch, 2, 2); b: (1, out_ch, 1, 1).
VarPtr deconv2x(const VarPtr& x, const VarPtr& w, const VarPtr& b);

VarPtr relu(const VarPtr& x);

VarPtr add(const VarPtr& a, const VarPtr& b);
VarPtr sub(const VarPtr& a, const VarPtr& b);
VarPtr neg(const VarPtr& a);
VarPtr scale(const VarPtr& a, double k);

// Concatenate along the channel axis; all inputs share n, h, w.
VarPtr concat_channels(const std::vector<VarPtr>& xs);

// Softmax over the channel axis, computed per (n, h, w) position with
// max subtraction. Errors if the input contains non-finite values.
VarPtr softmax_channel(const VarPtr& x);

// Average pooling to an exact output size (out_h <= h, out_w <= w), with
// bin edges floor(i*h/out_h) .. ceil((i+1)*h/out_h).
VarPtr adaptive_avg_pool(const VarPtr& x, int out_h, int out_w);

// Mean over h and w per (n, c): output (n, c, 1, 1).
VarPtr global_avg_pool(const VarPtr& x);

// Mean over every element: scalar output (1,1,1,1).
VarPtr mean_all(const VarPtr& x);

// Scalar projection sum_i w_i * x_i with fixed weights (same shape as x).
VarPtr weighted_sum(const VarPtr& x, const Tensor4& w);

}  // namespace cmda
