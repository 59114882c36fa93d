#pragma once

#include <optional>
#include <vector>

#include "depthkit/graph.hpp"

namespace depthkit {

// ---- elementwise, with right-aligned numpy-style broadcasting ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var neg(Var x);
Var scale(Var x, double alpha);       // alpha * x
Var add_scalar(Var x, double beta);   // x + beta

Var abs(Var x);
Var log(Var x);
Var sqrt(Var x);
Var relu(Var x);
Var elu(Var x);      // alpha = 1
Var gelu(Var x);     // exact Gaussian-CDF form
Var sigmoid(Var x);
Var softmax(Var x, int axis);  // max-subtracted

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// ---- reductions (serial row-major accumulation) ----
Var reduce_sum(Var x, std::vector<int> axes, bool keepdims);
Var reduce_mean(Var x, std::vector<int> axes, bool keepdims);
Var reduce_sum_all(Var x);   // rank-0 scalar
Var reduce_mean_all(Var x);  // rank-0 scalar

// ---- structure (pure element permutations / views) ----
Var reshape(Var x, Shape new_shape);
Var transpose(Var x, std::vector<int> perm);
Var concat(const std::vector<Var>& xs, int axis);
Var slice(Var x, int axis, std::int64_t start, std::int64_t length);
std::vector<Var> split(Var x, int axis, const std::vector<std::int64_t>& sizes);

// ---- linear algebra ----
// 2-D: (m,k)x(k,n) -> (m,n); 3-D batched: (b,m,k)x(b,k,n) -> (b,m,n)
Var matmul(Var a, Var b);

// ---- convolutions and resampling, NCHW ----
struct Conv2dAttrs {
    int stride_h = 1, stride_w = 1;
    int pad_h = 0, pad_w = 0;
    int groups = 1;
};
Var conv2d(Var x, Var w, std::optional<Var> bias, const Conv2dAttrs& attrs);
// x: (n, c, l), w: (c_out, c_in, k)
Var conv1d(Var x, Var w, std::optional<Var> bias, int stride, int pad);
// w: (c_in, c_out, kh, kw)
Var conv_transpose2d(Var x, Var w, std::optional<Var> bias, int stride_h, int stride_w);
Var max_pool2d(Var x, int kh, int kw, int stride_h, int stride_w);
Var bilinear_upsample2x(Var x);  // half-pixel centers, no corner alignment

Var pixel_shuffle(Var x);    // (n, 4c, h, w) -> (n, c, 2h, 2w)
Var pixel_unshuffle(Var x);  // inverse

enum class SpatialAxis { Height, Width };
Var axial_fold(Var x, SpatialAxis axis, int factor);
Var axial_unfold(Var x, SpatialAxis axis, int factor);

}  // namespace depthkit
