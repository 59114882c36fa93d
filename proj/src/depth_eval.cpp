#include "depthkit/depth_eval.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace depthkit {

namespace {

// Masked values in row-major order, validated positive.
std::vector<double> masked_values(const Tensor& t, const Tensor& mask) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if (mask.get(i) == 0.0) continue;
        const double v = t.get(i);
        if (!(v > 0.0)) throw NonPositiveDepth(v);
        out.push_back(v);
    }
    if (out.empty()) throw EmptyMask();
    return out;
}

double lower_median(std::vector<double> v) {
    const std::size_t k = (v.size() - 1) / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

DepthMetrics compute_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask, double cap) {
    if (pred.shape() != gt.shape() || pred.shape() != mask.shape())
        throw ShapeMismatch(shape_str(gt.shape()), shape_str(pred.shape()));
    double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0;
    std::int64_t n = 0, d1 = 0, d2 = 0, d3 = 0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        if (mask.get(i) == 0.0) continue;
        double d = pred.get(i), g = gt.get(i);
        if (!(d > 0.0)) throw NonPositiveDepth(d);
        if (!(g > 0.0)) throw NonPositiveDepth(g);
        d = std::clamp(d, kMinDepth, cap);
        g = std::clamp(g, kMinDepth, cap);
        const double diff = d - g;
        abs_rel += std::abs(diff) / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        const double dl = std::log(d) - std::log(g);
        sq_log += dl * dl;
        const double ratio = std::max(d / g, g / d);
        d1 += ratio < 1.25;
        d2 += ratio < 1.25 * 1.25;
        d3 += ratio < 1.25 * 1.25 * 1.25;
        ++n;
    }
    if (n == 0) throw EmptyMask();
    const double inv = 1.0 / static_cast<double>(n);
    DepthMetrics m;
    m.abs_rel = abs_rel * inv;
    m.sq_rel = sq_rel * inv;
    m.rmse = std::sqrt(sq * inv);
    m.rmse_log = std::sqrt(sq_log * inv);
    m.delta1 = static_cast<double>(d1) * inv;
    m.delta2 = static_cast<double>(d2) * inv;
    m.delta3 = static_cast<double>(d3) * inv;
    return m;
}

double scale_factor(const Tensor& pred, const Tensor& gt, const Tensor& mask, double zeta) {
    if (pred.shape() != gt.shape() || pred.shape() != mask.shape())
        throw ShapeMismatch(shape_str(gt.shape()), shape_str(pred.shape()));
    const std::vector<double> pv = masked_values(pred, mask);
    const std::vector<double> gv = masked_values(gt, mask);
    const double num = zeta * lower_median(gv) + (1.0 - zeta) * mean_of(gv);
    const double den = zeta * lower_median(pv) + (1.0 - zeta) * mean_of(pv);
    if (den == 0.0) throw ZeroDenominator();
    return num / den;
}

ScaleAlignResult ada_search_scale(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                                  double cap) {
    ScaleAlignResult best;
    bool have = false;
    for (int k = 0; k <= 10; ++k) {
        const double zeta = static_cast<double>(k) / 10.0;
        const double s = scale_factor(pred, gt, mask, zeta);
        Tensor scaled = Tensor::empty(pred.shape(), pred.dtype());
        for (std::int64_t i = 0; i < pred.numel(); ++i) scaled.set(i, s * pred.get(i));
        const double abs_rel = compute_metrics(scaled, gt, mask, cap).abs_rel;
        // Upward scan accepting on <=: ties resolve toward larger zeta.
        if (!have || abs_rel <= best.abs_rel_at_zeta) {
            best = {zeta, s, abs_rel};
            have = true;
        }
    }
    return best;
}

}  // namespace depthkit
