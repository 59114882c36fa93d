#pragma once

// Internal kernel helpers shared by the op translation units.

#include <cstdint>
#include <vector>

#include "depthkit/tensor.hpp"

namespace depthkit::detail {

// Runs fn<double>() or fn<float>() depending on dt.
#define DK_DISPATCH(dt, ...)                   \
    do {                                       \
        if ((dt) == ::depthkit::Dtype::F64) {  \
            using scalar_t = double;           \
            __VA_ARGS__();                     \
        } else {                               \
            using scalar_t = float;            \
            __VA_ARGS__();                     \
        }                                      \
    } while (0)

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

// Right-aligned broadcast result shape; throws ShapeMismatch when incompatible.
Shape broadcast_shape(const Shape& a, const Shape& b);

// Strides for iterating `from` as if broadcast to `to` (0 on broadcast axes),
// aligned to to.rank().
std::vector<std::int64_t> broadcast_strides(const Shape& from, const Shape& to);

// Sum of `t` reduced back down to `target` (inverse of broadcasting), serial
// row-major accumulation.
Tensor reduce_to_shape(const Tensor& t, const Shape& target);

// Materializes `t` broadcast to `target`.
Tensor broadcast_to(const Tensor& t, const Shape& target);

// Raw (non-recording) elementwise tensor math with broadcasting, used by
// backward closures.
Tensor ew_add(const Tensor& a, const Tensor& b);
Tensor ew_mul(const Tensor& a, const Tensor& b);
Tensor ew_div(const Tensor& a, const Tensor& b);
Tensor ew_scale(const Tensor& x, double alpha);

}  // namespace depthkit::detail
