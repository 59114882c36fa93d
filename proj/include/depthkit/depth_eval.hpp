#pragma once

#include <stdexcept>
#include <string>

#include "depthkit/tensor.hpp"

namespace depthkit {

struct EmptyMask : std::runtime_error {
    EmptyMask() : std::runtime_error("no valid pixels under the mask") {}
};
struct NonPositiveDepth : std::runtime_error {
    explicit NonPositiveDepth(double v)
        : std::runtime_error("non-positive depth " + std::to_string(v) + " under the mask") {}
};
struct ZeroDenominator : std::runtime_error {
    ZeroDenominator() : std::runtime_error("blended prediction statistic is zero") {}
};

struct DepthMetrics {
    double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
    double delta1 = 0, delta2 = 0, delta3 = 0;
};

struct ScaleAlignResult {
    double zeta = 0;     // blend weight: 1 = median-only, 0 = mean-only
    double scale = 0;    // multiplier applied to predictions
    double abs_rel_at_zeta = 0;
};

inline constexpr double kMinDepth = 0.1;
inline constexpr double kDefaultCap = 80.0;

/// Standard masked depth-error protocol. Both maps are clamped to
/// [kMinDepth, cap] before any statistic. mask is elementwise: nonzero =
/// valid. All accumulation is serial row-major in f64.
DepthMetrics compute_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask, double cap);

/// (zeta*median(gt) + (1-zeta)*mean(gt)) / (zeta*median(pred) + (1-zeta)*mean(pred)).
/// Median of an even-count set is the lower-middle order statistic.
double scale_factor(const Tensor& pred, const Tensor& gt, const Tensor& mask, double zeta);

/// Evaluates zeta over {0.0, 0.1, ..., 1.0}, scaling pred by scale_factor and
/// scoring AbsRel at `cap`; returns the minimizer, ties broken toward larger
/// zeta. Since both endpoints are grid members, the result never exceeds the
/// median-only or mean-only AbsRel.
ScaleAlignResult ada_search_scale(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                                  double cap = kDefaultCap);

}  // namespace depthkit
