#include <optional>
#include <vector>

#include "depthkit/ops.hpp"
#include "op_common.hpp"

namespace depthkit {

namespace {

// All three kernels accumulate into c (caller zero-fills) with a fixed
// per-element reduction order, so results are bit-stable run to run. The
// 4-row blocks only regroup independent rows; every c element still sees
// the plain triple loop's add sequence, so blocking changes no bits.

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void mm_nn(const T* __restrict a, const T* __restrict b, T* __restrict c,
           std::int64_t m, std::int64_t k, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        T* c0 = c + i * n;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T a0 = a[i * k + p];
            const T a1 = a[(i + 1) * k + p];
            const T a2 = a[(i + 2) * k + p];
            const T a3 = a[(i + 3) * k + p];
            const T* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) {
                const T bv = brow[j];
                c0[j] += a0 * bv;
                c1[j] += a1 * bv;
                c2[j] += a2 * bv;
                c3[j] += a3 * bv;
            }
        }
    }
    for (; i < m; ++i)
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            const T* brow = b + p * n;
            T* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
}

// c[m,k] += a[m,n] * b[k,n]^T
template <typename T>
void mm_nt(const T* __restrict a, const T* __restrict b, T* __restrict c,
           std::int64_t m, std::int64_t n, std::int64_t k) {
    std::int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const T* a0 = a + i * n;
        const T* a1 = a0 + n;
        const T* a2 = a1 + n;
        const T* a3 = a2 + n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T* brow = b + p * n;
            T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            for (std::int64_t j = 0; j < n; ++j) {
                const T bv = brow[j];
                s0 += a0[j] * bv;
                s1 += a1[j] * bv;
                s2 += a2[j] * bv;
                s3 += a3[j] * bv;
            }
            c[i * k + p] += s0;
            c[(i + 1) * k + p] += s1;
            c[(i + 2) * k + p] += s2;
            c[(i + 3) * k + p] += s3;
        }
    }
    for (; i < m; ++i) {
        const T* arow = a + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T* brow = b + p * n;
            T acc = 0;
            for (std::int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            c[i * k + p] += acc;
        }
    }
}

// c[k,n] += a[m,k]^T * b[m,n]
template <typename T>
void mm_tn(const T* __restrict a, const T* __restrict b, T* __restrict c,
           std::int64_t m, std::int64_t k, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const T* b0 = b + i * n;
        const T* b1 = b0 + n;
        const T* b2 = b1 + n;
        const T* b3 = b2 + n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T a0 = a[i * k + p];
            const T a1 = a[(i + 1) * k + p];
            const T a2 = a[(i + 2) * k + p];
            const T a3 = a[(i + 3) * k + p];
            T* crow = c + p * n;
            for (std::int64_t j = 0; j < n; ++j) {
                T acc = crow[j];
                acc += a0 * b0[j];
                acc += a1 * b1[j];
                acc += a2 * b2[j];
                acc += a3 * b3[j];
                crow[j] = acc;
            }
        }
    }
    for (; i < m; ++i) {
        const T* brow = b + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            T* crow = c + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

struct MatmulDims {
    std::int64_t batch, m, k, n;
    bool batched;
};

MatmulDims matmul_dims(const Shape& a, const Shape& b) {
    if (a.size() == 2 && b.size() == 2) {
        if (a[1] != b[0]) throw ShapeMismatch("inner extent " + std::to_string(a[1]), shape_str(b));
        return {1, a[0], a[1], b[1], false};
    }
    if (a.size() == 3 && b.size() == 3) {
        if (a[0] != b[0] || a[2] != b[1])
            throw ShapeMismatch("batched operand compatible with " + shape_str(a), shape_str(b));
        return {a[0], a[1], a[2], b[2], true};
    }
    throw ShapeMismatch("both rank-2 or both rank-3 matmul operands",
                        shape_str(a) + " x " + shape_str(b));
}

}  // namespace

Var matmul(Var a, Var b) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    const MatmulDims d = matmul_dims(av.shape(), bv.shape());
    Shape out_shape = d.batched ? Shape{d.batch, d.m, d.n} : Shape{d.m, d.n};
    Tensor value = Tensor::zeros(out_shape, av.dtype());
    DK_DISPATCH(av.dtype(), [&]() {
        const scalar_t* pa = av.data<scalar_t>().data();
        const scalar_t* pb = bv.data<scalar_t>().data();
        scalar_t* pc = value.data<scalar_t>().data();
        for (std::int64_t bt = 0; bt < d.batch; ++bt)
            mm_nn(pa + bt * d.m * d.k, pb + bt * d.k * d.n, pc + bt * d.m * d.n, d.m, d.k, d.n);
    });
    return a.g->emit(std::move(value), {a, b}, [d](BackwardCtx& ctx) {
        const Tensor& av = ctx.input(0);
        const Tensor& bv = ctx.input(1);
        const Tensor& gy = ctx.grad_out();
        if (ctx.input_needs_grad(0)) {
            Tensor ga = Tensor::zeros(av.shape(), av.dtype());
            DK_DISPATCH(av.dtype(), [&]() {
                const scalar_t* pg = gy.data<scalar_t>().data();
                const scalar_t* pb = bv.data<scalar_t>().data();
                scalar_t* pa = ga.data<scalar_t>().data();
                for (std::int64_t bt = 0; bt < d.batch; ++bt)
                    mm_nt(pg + bt * d.m * d.n, pb + bt * d.k * d.n, pa + bt * d.m * d.k, d.m, d.n, d.k);
            });
            ctx.add_input_grad(0, std::move(ga));
        }
        if (ctx.input_needs_grad(1)) {
            Tensor gb = Tensor::zeros(bv.shape(), bv.dtype());
            DK_DISPATCH(bv.dtype(), [&]() {
                const scalar_t* pa = av.data<scalar_t>().data();
                const scalar_t* pg = gy.data<scalar_t>().data();
                scalar_t* pb = gb.data<scalar_t>().data();
                for (std::int64_t bt = 0; bt < d.batch; ++bt)
                    mm_tn(pa + bt * d.m * d.k, pg + bt * d.m * d.n, pb + bt * d.k * d.n, d.m, d.k, d.n);
            });
            ctx.add_input_grad(1, std::move(gb));
        }
    });
}

namespace {

struct ConvDims {
    std::int64_t n, c_in, h, w;
    std::int64_t c_out, kh, kw;
    std::int64_t h_out, w_out;
    std::int64_t groups, cg_in, cg_out;
    std::int64_t patch;  // cg_in * kh * kw
    std::int64_t cols;   // h_out * w_out
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, const Conv2dAttrs& at) {
    if (xs.size() != 4) throw ShapeMismatch("conv2d input of rank 4", shape_str(xs));
    if (ws.size() != 4) throw ShapeMismatch("conv2d weight of rank 4", shape_str(ws));
    ConvDims d;
    d.n = xs[0];
    d.c_in = xs[1];
    d.h = xs[2];
    d.w = xs[3];
    d.c_out = ws[0];
    d.kh = ws[2];
    d.kw = ws[3];
    d.groups = at.groups;
    if (d.groups < 1 || d.c_in % d.groups != 0 || d.c_out % d.groups != 0)
        throw ShapeMismatch("channel counts divisible by groups=" + std::to_string(d.groups),
                            shape_str(xs) + " w " + shape_str(ws));
    d.cg_in = d.c_in / d.groups;
    d.cg_out = d.c_out / d.groups;
    if (ws[1] != d.cg_in)
        throw ShapeMismatch("weight in-channels " + std::to_string(d.cg_in), shape_str(ws));
    d.h_out = (d.h + 2 * at.pad_h - d.kh) / at.stride_h + 1;
    d.w_out = (d.w + 2 * at.pad_w - d.kw) / at.stride_w + 1;
    if (d.h + 2 * at.pad_h < d.kh || d.w + 2 * at.pad_w < d.kw || d.h_out < 1 || d.w_out < 1)
        throw ShapeMismatch("spatial extents no smaller than the kernel", shape_str(xs));
    d.patch = d.cg_in * d.kh * d.kw;
    d.cols = d.h_out * d.w_out;
    return d;
}

// cols[(c*kh+ky)*kw+kx, oy*w_out+ox] = x[g_base+c, oy*s-p+ky, ox*s-p+kx] (0 outside)
template <typename T>
void im2col(const T* x_plane, const ConvDims& d, const Conv2dAttrs& at, std::int64_t g, T* cols) {
    const bool unit_stride = at.stride_h == 1 && at.stride_w == 1;
    for (std::int64_t c = 0; c < d.cg_in; ++c) {
        const T* src = x_plane + (g * d.cg_in + c) * d.h * d.w;
        for (std::int64_t ky = 0; ky < d.kh; ++ky)
            for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                T* dst = cols + ((c * d.kh + ky) * d.kw + kx) * d.cols;
                if (unit_stride) {
                    // ix = ox - pad + kx stays in range on one contiguous span.
                    const std::int64_t ox_lo = std::max<std::int64_t>(0, at.pad_w - kx);
                    const std::int64_t ox_hi = std::min(d.w_out, d.w + at.pad_w - kx);
                    for (std::int64_t oy = 0; oy < d.h_out; ++oy) {
                        const std::int64_t iy = oy - at.pad_h + ky;
                        T* drow = dst + oy * d.w_out;
                        if (iy < 0 || iy >= d.h || ox_lo >= ox_hi) {
                            std::fill(drow, drow + d.w_out, T(0));
                            continue;
                        }
                        std::fill(drow, drow + ox_lo, T(0));
                        std::copy(src + iy * d.w + ox_lo - at.pad_w + kx,
                                  src + iy * d.w + ox_hi - at.pad_w + kx, drow + ox_lo);
                        std::fill(drow + ox_hi, drow + d.w_out, T(0));
                    }
                    continue;
                }
                for (std::int64_t oy = 0; oy < d.h_out; ++oy) {
                    const std::int64_t iy = oy * at.stride_h - at.pad_h + ky;
                    for (std::int64_t ox = 0; ox < d.w_out; ++ox) {
                        const std::int64_t ix = ox * at.stride_w - at.pad_w + kx;
                        const bool in = iy >= 0 && iy < d.h && ix >= 0 && ix < d.w;
                        dst[oy * d.w_out + ox] = in ? src[iy * d.w + ix] : T(0);
                    }
                }
            }
    }
}

// Scatter-add of the im2col layout back onto the input plane.
template <typename T>
void col2im_add(const T* cols, const ConvDims& d, const Conv2dAttrs& at, std::int64_t g, T* x_plane) {
    const bool unit_stride = at.stride_h == 1 && at.stride_w == 1;
    for (std::int64_t c = 0; c < d.cg_in; ++c) {
        T* dst = x_plane + (g * d.cg_in + c) * d.h * d.w;
        for (std::int64_t ky = 0; ky < d.kh; ++ky)
            for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                const T* src = cols + ((c * d.kh + ky) * d.kw + kx) * d.cols;
                if (unit_stride) {
                    const std::int64_t ox_lo = std::max<std::int64_t>(0, at.pad_w - kx);
                    const std::int64_t ox_hi = std::min(d.w_out, d.w + at.pad_w - kx);
                    if (ox_lo >= ox_hi) continue;
                    const std::int64_t shift = kx - at.pad_w;
                    for (std::int64_t oy = 0; oy < d.h_out; ++oy) {
                        const std::int64_t iy = oy - at.pad_h + ky;
                        if (iy < 0 || iy >= d.h) continue;
                        T* drow = dst + iy * d.w;
                        const T* srow = src + oy * d.w_out;
                        for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) drow[ox + shift] += srow[ox];
                    }
                    continue;
                }
                for (std::int64_t oy = 0; oy < d.h_out; ++oy) {
                    const std::int64_t iy = oy * at.stride_h - at.pad_h + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    for (std::int64_t ox = 0; ox < d.w_out; ++ox) {
                        const std::int64_t ix = ox * at.stride_w - at.pad_w + kx;
                        if (ix < 0 || ix >= d.w) continue;
                        dst[iy * d.w + ix] += src[oy * d.w_out + ox];
                    }
                }
            }
    }
}

}  // namespace

Var conv2d(Var x, Var w, std::optional<Var> bias, const Conv2dAttrs& attrs) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    const ConvDims d = conv_dims(xv.shape(), wv.shape(), attrs);
    if (bias && (bias->val().rank() != 1 || bias->val().extent(0) != d.c_out))
        throw ShapeMismatch("bias of shape [" + std::to_string(d.c_out) + "]", shape_str(bias->val().shape()));

    // A 1x1 stride-1 unpadded conv reads the input plane as its own im2col
    // matrix, so the copy (and the scatter on the way back) can be skipped.
    const bool unit_patch = d.kh == 1 && d.kw == 1 && attrs.stride_h == 1 && attrs.stride_w == 1 &&
                            attrs.pad_h == 0 && attrs.pad_w == 0;
    Tensor value = Tensor::zeros({d.n, d.c_out, d.h_out, d.w_out}, xv.dtype());
    DK_DISPATCH(xv.dtype(), [&]() {
        const scalar_t* px = xv.data<scalar_t>().data();
        const scalar_t* pw = wv.data<scalar_t>().data();
        scalar_t* po = value.data<scalar_t>().data();
        std::vector<scalar_t> cols(unit_patch ? 0 : static_cast<std::size_t>(d.patch * d.cols));
        for (std::int64_t n = 0; n < d.n; ++n) {
            const scalar_t* x_plane = px + n * d.c_in * d.h * d.w;
            for (std::int64_t g = 0; g < d.groups; ++g) {
                const scalar_t* col_ptr = x_plane + g * d.cg_in * d.h * d.w;
                if (!unit_patch) {
                    im2col(x_plane, d, attrs, g, cols.data());
                    col_ptr = cols.data();
                }
                mm_nn(pw + g * d.cg_out * d.patch, col_ptr,
                      po + (n * d.c_out + g * d.cg_out) * d.cols, d.cg_out, d.patch, d.cols);
            }
        }
        if (bias) {
            const scalar_t* pb = bias->val().data<scalar_t>().data();
            for (std::int64_t n = 0; n < d.n; ++n)
                for (std::int64_t c = 0; c < d.c_out; ++c) {
                    scalar_t* dst = po + (n * d.c_out + c) * d.cols;
                    for (std::int64_t i = 0; i < d.cols; ++i) dst[i] += pb[c];
                }
        }
    });

    std::vector<Var> inputs{x, w};
    if (bias) inputs.push_back(*bias);
    const Conv2dAttrs at = attrs;
    return x.g->emit(std::move(value), std::move(inputs), [d, at, unit_patch](BackwardCtx& ctx) {
        const Tensor& xv = ctx.input(0);
        const Tensor& wv = ctx.input(1);
        const Tensor& gy = ctx.grad_out();
        const bool need_x = ctx.input_needs_grad(0);
        const bool need_w = ctx.input_needs_grad(1);
        const bool need_b = ctx.input_count() > 2 && ctx.input_needs_grad(2);
        Tensor gx = need_x ? Tensor::zeros(xv.shape(), xv.dtype()) : Tensor();
        Tensor gw = need_w ? Tensor::zeros(wv.shape(), wv.dtype()) : Tensor();
        DK_DISPATCH(xv.dtype(), [&]() {
            const scalar_t* px = xv.data<scalar_t>().data();
            const scalar_t* pw = wv.data<scalar_t>().data();
            const scalar_t* pg = gy.data<scalar_t>().data();
            std::vector<scalar_t> cols(unit_patch ? 0 : static_cast<std::size_t>(d.patch * d.cols));
            for (std::int64_t n = 0; n < d.n && (need_x || need_w); ++n) {
                const scalar_t* x_plane = px + n * d.c_in * d.h * d.w;
                for (std::int64_t g = 0; g < d.groups; ++g) {
                    const scalar_t* gy_g = pg + (n * d.c_out + g * d.cg_out) * d.cols;
                    if (need_w) {
                        const scalar_t* col_ptr = x_plane + g * d.cg_in * d.h * d.w;
                        if (!unit_patch) {
                            im2col(x_plane, d, at, g, cols.data());
                            col_ptr = cols.data();
                        }
                        mm_nt(gy_g, col_ptr, gw.data<scalar_t>().data() + g * d.cg_out * d.patch,
                              d.cg_out, d.cols, d.patch);
                    }
                    if (need_x) {
                        scalar_t* gx_plane = gx.data<scalar_t>().data() + n * d.c_in * d.h * d.w;
                        if (unit_patch) {
                            mm_tn(pw + g * d.cg_out * d.patch, gy_g,
                                  gx_plane + g * d.cg_in * d.h * d.w, d.cg_out, d.patch, d.cols);
                        } else {
                            std::fill(cols.begin(), cols.end(), scalar_t(0));
                            mm_tn(pw + g * d.cg_out * d.patch, gy_g, cols.data(), d.cg_out, d.patch,
                                  d.cols);
                            col2im_add(cols.data(), d, at, g, gx_plane);
                        }
                    }
                }
            }
        });
        if (need_x) ctx.add_input_grad(0, std::move(gx));
        if (need_w) ctx.add_input_grad(1, std::move(gw));
        if (need_b) {
            Tensor gb = Tensor::zeros({d.c_out}, gy.dtype());
            DK_DISPATCH(gy.dtype(), [&]() {
                const scalar_t* pg = gy.data<scalar_t>().data();
                scalar_t* pb = gb.data<scalar_t>().data();
                for (std::int64_t n = 0; n < d.n; ++n)
                    for (std::int64_t c = 0; c < d.c_out; ++c) {
                        const scalar_t* src = pg + (n * d.c_out + c) * d.cols;
                        scalar_t acc = 0;
                        for (std::int64_t i = 0; i < d.cols; ++i) acc += src[i];
                        pb[c] += acc;
                    }
            });
            ctx.add_input_grad(2, std::move(gb));
        }
    });
}

Var conv1d(Var x, Var w, std::optional<Var> bias, int stride, int pad) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    if (xv.rank() != 3) throw ShapeMismatch("conv1d input of rank 3", shape_str(xv.shape()));
    if (wv.rank() != 3) throw ShapeMismatch("conv1d weight of rank 3", shape_str(wv.shape()));
    Var x4 = reshape(x, {xv.extent(0), xv.extent(1), 1, xv.extent(2)});
    Var w4 = reshape(w, {wv.extent(0), wv.extent(1), 1, wv.extent(2)});
    Conv2dAttrs at;
    at.stride_w = stride;
    at.pad_w = pad;
    Var y4 = conv2d(x4, w4, bias, at);
    const Shape& ys = y4.val().shape();
    return reshape(y4, {ys[0], ys[1], ys[3]});
}

Var conv_transpose2d(Var x, Var w, std::optional<Var> bias, int stride_h, int stride_w) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    if (xv.rank() != 4) throw ShapeMismatch("conv_transpose2d input of rank 4", shape_str(xv.shape()));
    if (wv.rank() != 4 || wv.extent(0) != xv.extent(1))
        throw ShapeMismatch("weight [" + std::to_string(xv.extent(1)) + ", c_out, kh, kw]",
                            shape_str(wv.shape()));
    const std::int64_t n = xv.extent(0), ci = xv.extent(1), h = xv.extent(2), w_in = xv.extent(3);
    const std::int64_t co = wv.extent(1), kh = wv.extent(2), kw = wv.extent(3);
    const std::int64_t sh = stride_h, sw = stride_w;
    const std::int64_t ho = (h - 1) * sh + kh, wo = (w_in - 1) * sw + kw;
    if (bias && (bias->val().rank() != 1 || bias->val().extent(0) != co))
        throw ShapeMismatch("bias of shape [" + std::to_string(co) + "]", shape_str(bias->val().shape()));

    // Most (tap, output) pairs miss the stride lattice, so enumerate the
    // surviving taps per output row and column once, in ascending tap order.
    std::vector<std::int64_t> ty_start(ho + 1, 0), ty_k, ty_i;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
        for (std::int64_t ky = 0; ky < kh; ++ky) {
            const std::int64_t ry = oy - ky;
            if (ry < 0 || ry % sh != 0 || ry / sh >= h) continue;
            ty_k.push_back(ky);
            ty_i.push_back(ry / sh);
        }
        ty_start[oy + 1] = static_cast<std::int64_t>(ty_k.size());
    }
    std::vector<std::int64_t> tx_start(wo + 1, 0), tx_k, tx_i;
    for (std::int64_t ox = 0; ox < wo; ++ox) {
        for (std::int64_t kx = 0; kx < kw; ++kx) {
            const std::int64_t rx = ox - kx;
            if (rx < 0 || rx % sw != 0 || rx / sw >= w_in) continue;
            tx_k.push_back(kx);
            tx_i.push_back(rx / sw);
        }
        tx_start[ox + 1] = static_cast<std::int64_t>(tx_k.size());
    }

    Tensor value = Tensor::zeros({n, co, ho, wo}, xv.dtype());
    DK_DISPATCH(xv.dtype(), [&]() {
        const scalar_t* px = xv.data<scalar_t>().data();
        const scalar_t* pw = wv.data<scalar_t>().data();
        scalar_t* po = value.data<scalar_t>().data();
        for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t c = 0; c < co; ++c) {
                scalar_t* dst = po + (b * co + c) * ho * wo;
                for (std::int64_t oy = 0; oy < ho; ++oy)
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        scalar_t acc = 0;
                        for (std::int64_t ic = 0; ic < ci; ++ic) {
                            const scalar_t* src = px + (b * ci + ic) * h * w_in;
                            const scalar_t* wk = pw + (ic * co + c) * kh * kw;
                            for (std::int64_t t = ty_start[oy]; t < ty_start[oy + 1]; ++t) {
                                const scalar_t* srow = src + ty_i[t] * w_in;
                                const scalar_t* wrow = wk + ty_k[t] * kw;
                                for (std::int64_t u = tx_start[ox]; u < tx_start[ox + 1]; ++u)
                                    acc += srow[tx_i[u]] * wrow[tx_k[u]];
                            }
                        }
                        dst[oy * wo + ox] = acc;
                    }
            }
        if (bias) {
            const scalar_t* pb = bias->val().data<scalar_t>().data();
            for (std::int64_t b = 0; b < n; ++b)
                for (std::int64_t c = 0; c < co; ++c) {
                    scalar_t* dst = po + (b * co + c) * ho * wo;
                    for (std::int64_t i = 0; i < ho * wo; ++i) dst[i] += pb[c];
                }
        }
    });

    std::vector<Var> inputs{x, w};
    if (bias) inputs.push_back(*bias);
    return x.g->emit(std::move(value), std::move(inputs), [=](BackwardCtx& ctx) {
        const Tensor& xv = ctx.input(0);
        const Tensor& wv = ctx.input(1);
        const Tensor& gy = ctx.grad_out();
        if (ctx.input_needs_grad(0)) {
            Tensor gx = Tensor::zeros(xv.shape(), xv.dtype());
            DK_DISPATCH(xv.dtype(), [&]() {
                const scalar_t* pg = gy.data<scalar_t>().data();
                const scalar_t* pw = wv.data<scalar_t>().data();
                scalar_t* pd = gx.data<scalar_t>().data();
                for (std::int64_t b = 0; b < n; ++b)
                    for (std::int64_t ic = 0; ic < ci; ++ic) {
                        scalar_t* dst = pd + (b * ci + ic) * h * w_in;
                        for (std::int64_t iy = 0; iy < h; ++iy)
                            for (std::int64_t ix = 0; ix < w_in; ++ix) {
                                scalar_t acc = 0;
                                for (std::int64_t c = 0; c < co; ++c) {
                                    const scalar_t* gsrc = pg + (b * co + c) * ho * wo;
                                    const scalar_t* wk = pw + (ic * co + c) * kh * kw;
                                    for (std::int64_t ky = 0; ky < kh; ++ky)
                                        for (std::int64_t kx = 0; kx < kw; ++kx)
                                            acc += gsrc[(iy * sh + ky) * wo + ix * sw + kx] *
                                                   wk[ky * kw + kx];
                                }
                                dst[iy * w_in + ix] += acc;
                            }
                    }
            });
            ctx.add_input_grad(0, std::move(gx));
        }
        if (ctx.input_needs_grad(1)) {
            Tensor gw = Tensor::zeros(wv.shape(), wv.dtype());
            DK_DISPATCH(wv.dtype(), [&]() {
                const scalar_t* pg = gy.data<scalar_t>().data();
                const scalar_t* px = xv.data<scalar_t>().data();
                scalar_t* pd = gw.data<scalar_t>().data();
                for (std::int64_t b = 0; b < n; ++b)
                    for (std::int64_t ic = 0; ic < ci; ++ic) {
                        const scalar_t* src = px + (b * ci + ic) * h * w_in;
                        for (std::int64_t c = 0; c < co; ++c) {
                            const scalar_t* gsrc = pg + (b * co + c) * ho * wo;
                            scalar_t* wk = pd + (ic * co + c) * kh * kw;
                            for (std::int64_t ky = 0; ky < kh; ++ky)
                                for (std::int64_t kx = 0; kx < kw; ++kx) {
                                    scalar_t acc = 0;
                                    for (std::int64_t iy = 0; iy < h; ++iy)
                                        for (std::int64_t ix = 0; ix < w_in; ++ix)
                                            acc += src[iy * w_in + ix] *
                                                   gsrc[(iy * sh + ky) * wo + ix * sw + kx];
                                    wk[ky * kw + kx] += acc;
                                }
                        }
                    }
            });
            ctx.add_input_grad(1, std::move(gw));
        }
        if (ctx.input_count() > 2 && ctx.input_needs_grad(2)) {
            Tensor gb = Tensor::zeros({co}, gy.dtype());
            DK_DISPATCH(gy.dtype(), [&]() {
                const scalar_t* pg = gy.data<scalar_t>().data();
                scalar_t* pb = gb.data<scalar_t>().data();
                for (std::int64_t b = 0; b < n; ++b)
                    for (std::int64_t c = 0; c < co; ++c) {
                        const scalar_t* src = pg + (b * co + c) * ho * wo;
                        scalar_t acc = 0;
                        for (std::int64_t i = 0; i < ho * wo; ++i) acc += src[i];
                        pb[c] += acc;
                    }
            });
            ctx.add_input_grad(2, std::move(gb));
        }
    });
}

}  // namespace depthkit
