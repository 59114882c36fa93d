#include <cmath>
#include <memory>
#include <vector>

#include "depthkit/ops.hpp"
#include "op_common.hpp"

namespace depthkit {

Var max_pool2d(Var x, int kh, int kw, int stride_h, int stride_w) {
    const Tensor& xv = x.val();
    if (xv.rank() != 4) throw ShapeMismatch("max_pool2d input of rank 4", shape_str(xv.shape()));
    const std::int64_t n = xv.extent(0), c = xv.extent(1), h = xv.extent(2), w = xv.extent(3);
    if (h < kh || w < kw) throw ShapeMismatch("spatial extents no smaller than the window", shape_str(xv.shape()));
    const std::int64_t ho = (h - kh) / stride_h + 1;
    const std::int64_t wo = (w - kw) / stride_w + 1;

    Tensor value = Tensor::empty({n, c, ho, wo}, xv.dtype());
    // Flat input offset of the winning element per output element; ties keep
    // the first maximum in row-major window order.
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n * c * ho * wo));
    DK_DISPATCH(xv.dtype(), [&]() {
        const scalar_t* px = xv.data<scalar_t>().data();
        scalar_t* po = value.data<scalar_t>().data();
        std::int64_t out_i = 0;
        for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const scalar_t* plane = px + (b * c + ch) * h * w;
                const std::int64_t plane_base = (b * c + ch) * h * w;
                for (std::int64_t oy = 0; oy < ho; ++oy)
                    for (std::int64_t ox = 0; ox < wo; ++ox, ++out_i) {
                        const std::int64_t y0 = oy * stride_h, x0 = ox * stride_w;
                        scalar_t best = plane[y0 * w + x0];
                        std::int64_t best_ofs = y0 * w + x0;
                        for (std::int64_t ky = 0; ky < kh; ++ky)
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t ofs = (y0 + ky) * w + x0 + kx;
                                if (plane[ofs] > best) {
                                    best = plane[ofs];
                                    best_ofs = ofs;
                                }
                            }
                        po[out_i] = best;
                        (*argmax)[static_cast<std::size_t>(out_i)] = plane_base + best_ofs;
                    }
            }
    });

    const Shape in_shape = xv.shape();
    return x.g->emit(std::move(value), {x}, [argmax, in_shape](BackwardCtx& ctx) {
        if (!ctx.input_needs_grad(0)) return;
        const Tensor& gy = ctx.grad_out();
        Tensor gx = Tensor::zeros(in_shape, gy.dtype());
        DK_DISPATCH(gy.dtype(), [&]() {
            const scalar_t* pg = gy.data<scalar_t>().data();
            scalar_t* pd = gx.data<scalar_t>().data();
            for (std::size_t i = 0; i < argmax->size(); ++i)
                pd[(*argmax)[i]] += pg[i];
        });
        ctx.add_input_grad(0, std::move(gx));
    });
}

namespace {

// Half-pixel source mapping for exact x2: out index 2j hits j-0.25, 2j+1 hits
// j+0.25, so the only interior weights are 0.25 and 0.75 (exact in binary).
struct TapTable {
    std::vector<std::int64_t> lo, hi;
    std::vector<double> t;  // weight of hi tap
};

TapTable make_taps(std::int64_t in_len) {
    TapTable tt;
    const std::int64_t out_len = in_len * 2;
    tt.lo.resize(static_cast<std::size_t>(out_len));
    tt.hi.resize(static_cast<std::size_t>(out_len));
    tt.t.resize(static_cast<std::size_t>(out_len));
    for (std::int64_t o = 0; o < out_len; ++o) {
        const double src = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
        std::int64_t lo = static_cast<std::int64_t>(std::floor(src));
        double t = src - static_cast<double>(lo);
        std::int64_t hi = lo + 1;
        if (lo < 0) lo = 0;
        if (hi > in_len - 1) hi = in_len - 1;
        tt.lo[static_cast<std::size_t>(o)] = lo;
        tt.hi[static_cast<std::size_t>(o)] = hi;
        tt.t[static_cast<std::size_t>(o)] = t;
    }
    return tt;
}

}  // namespace

Var bilinear_upsample2x(Var x) {
    const Tensor& xv = x.val();
    if (xv.rank() != 4) throw ShapeMismatch("bilinear_upsample2x input of rank 4", shape_str(xv.shape()));
    const std::int64_t n = xv.extent(0), c = xv.extent(1), h = xv.extent(2), w = xv.extent(3);
    const TapTable ty = make_taps(h), tx = make_taps(w);
    const std::int64_t ho = 2 * h, wo = 2 * w;

    Tensor value = Tensor::empty({n, c, ho, wo}, xv.dtype());
    DK_DISPATCH(xv.dtype(), [&]() {
        const scalar_t* px = xv.data<scalar_t>().data();
        scalar_t* po = value.data<scalar_t>().data();
        for (std::int64_t p = 0; p < n * c; ++p) {
            const scalar_t* plane = px + p * h * w;
            scalar_t* dst = po + p * ho * wo;
            for (std::int64_t oy = 0; oy < ho; ++oy) {
                const std::int64_t y0 = ty.lo[static_cast<std::size_t>(oy)];
                const std::int64_t y1 = ty.hi[static_cast<std::size_t>(oy)];
                const scalar_t wy = static_cast<scalar_t>(ty.t[static_cast<std::size_t>(oy)]);
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    const std::int64_t x0 = tx.lo[static_cast<std::size_t>(ox)];
                    const std::int64_t x1 = tx.hi[static_cast<std::size_t>(ox)];
                    const scalar_t wx = static_cast<scalar_t>(tx.t[static_cast<std::size_t>(ox)]);
                    const scalar_t a = plane[y0 * w + x0], b = plane[y0 * w + x1];
                    const scalar_t cc = plane[y1 * w + x0], dd = plane[y1 * w + x1];
                    const scalar_t top = a + wx * (b - a);
                    const scalar_t bot = cc + wx * (dd - cc);
                    dst[oy * wo + ox] = top + wy * (bot - top);
                }
            }
        }
    });

    const Shape in_shape = xv.shape();
    return x.g->emit(std::move(value), {x}, [ty, tx, in_shape](BackwardCtx& ctx) {
        if (!ctx.input_needs_grad(0)) return;
        const Tensor& gy = ctx.grad_out();
        const std::int64_t h = in_shape[2], w = in_shape[3];
        const std::int64_t planes = in_shape[0] * in_shape[1];
        const std::int64_t ho = 2 * h, wo = 2 * w;
        Tensor gx = Tensor::zeros(in_shape, gy.dtype());
        DK_DISPATCH(gy.dtype(), [&]() {
            const scalar_t* pg = gy.data<scalar_t>().data();
            scalar_t* pd = gx.data<scalar_t>().data();
            for (std::int64_t p = 0; p < planes; ++p) {
                const scalar_t* src = pg + p * ho * wo;
                scalar_t* dst = pd + p * h * w;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const std::int64_t y0 = ty.lo[static_cast<std::size_t>(oy)];
                    const std::int64_t y1 = ty.hi[static_cast<std::size_t>(oy)];
                    const scalar_t wy = static_cast<scalar_t>(ty.t[static_cast<std::size_t>(oy)]);
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        const std::int64_t x0 = tx.lo[static_cast<std::size_t>(ox)];
                        const std::int64_t x1 = tx.hi[static_cast<std::size_t>(ox)];
                        const scalar_t wx = static_cast<scalar_t>(tx.t[static_cast<std::size_t>(ox)]);
                        const scalar_t g = src[oy * wo + ox];
                        dst[y0 * w + x0] += (scalar_t(1) - wy) * (scalar_t(1) - wx) * g;
                        dst[y0 * w + x1] += (scalar_t(1) - wy) * wx * g;
                        dst[y1 * w + x0] += wy * (scalar_t(1) - wx) * g;
                        dst[y1 * w + x1] += wy * wx * g;
                    }
                }
            }
        });
        ctx.add_input_grad(0, std::move(gx));
    });
}

}  // namespace depthkit
