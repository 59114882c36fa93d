#include <algorithm>

#include "depthkit/ops.hpp"
#include "op_common.hpp"

namespace depthkit {

namespace {

using detail::row_major_strides;

Tensor transpose_t(const Tensor& x, const std::vector<int>& perm) {
    const Shape& xs = x.shape();
    Shape os(xs.size());
    for (std::size_t i = 0; i < perm.size(); ++i) os[i] = xs[static_cast<std::size_t>(perm[i])];
    Tensor out = Tensor::empty(os, x.dtype());
    const auto in_strides = row_major_strides(xs);
    std::vector<std::int64_t> gather(os.size());
    for (std::size_t i = 0; i < perm.size(); ++i) gather[i] = in_strides[static_cast<std::size_t>(perm[i])];
    DK_DISPATCH(x.dtype(), [&]() {
        const scalar_t* px = x.data<scalar_t>().data();
        scalar_t* po = out.data<scalar_t>().data();
        const int r = static_cast<int>(os.size());
        std::vector<std::int64_t> idx(os.size(), 0);
        std::int64_t src = 0;
        const std::int64_t n = out.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            po[i] = px[src];
            for (int d = r - 1; d >= 0; --d) {
                ++idx[d];
                src += gather[d];
                if (idx[d] < os[d]) break;
                idx[d] = 0;
                src -= gather[d] * os[d];
            }
        }
    });
    return out;
}

Tensor slice_t(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
    const Shape& xs = x.shape();
    Shape os = xs;
    os[static_cast<std::size_t>(axis)] = length;
    Tensor out = Tensor::empty(os, x.dtype());
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= xs[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < xs.size(); ++i) inner *= xs[i];
    const std::int64_t n_in = xs[static_cast<std::size_t>(axis)];
    DK_DISPATCH(x.dtype(), [&]() {
        const scalar_t* px = x.data<scalar_t>().data();
        scalar_t* po = out.data<scalar_t>().data();
        for (std::int64_t o = 0; o < outer; ++o) {
            const scalar_t* src = px + (o * n_in + start) * inner;
            scalar_t* dst = po + o * length * inner;
            std::copy(src, src + length * inner, dst);
        }
    });
    return out;
}

// Adds `g` into the [start, start+len) band of `acc` along `axis`.
void scatter_slice_add(Tensor& acc, const Tensor& g, int axis, std::int64_t start) {
    const Shape& as = acc.shape();
    const std::int64_t length = g.extent(static_cast<std::size_t>(axis));
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= as[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < as.size(); ++i) inner *= as[i];
    const std::int64_t n_acc = as[static_cast<std::size_t>(axis)];
    DK_DISPATCH(acc.dtype(), [&]() {
        scalar_t* pa = acc.data<scalar_t>().data();
        const scalar_t* pg = g.data<scalar_t>().data();
        for (std::int64_t o = 0; o < outer; ++o) {
            scalar_t* dst = pa + (o * n_acc + start) * inner;
            const scalar_t* src = pg + o * length * inner;
            for (std::int64_t i = 0; i < length * inner; ++i) dst[i] += src[i];
        }
    });
}

void check_axis(const Shape& s, int axis, const char* op) {
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw ShapeMismatch(std::string(op) + " axis within rank " + std::to_string(s.size()),
                            std::to_string(axis));
}

Shape as_nchw(const Shape& s, const char* op) {
    if (s.size() == 4) return s;
    if (s.size() == 3) return {1, s[0], s[1], s[2]};
    throw ShapeMismatch(std::string(op) + " input of rank 3 or 4", shape_str(s));
}

// out[n, c, 2h+r, 2w+s] = in[n, 4c + 2r + s, h, w]
Tensor pixel_shuffle_t(const Tensor& x4) {
    const std::int64_t n = x4.extent(0), ci = x4.extent(1), h = x4.extent(2), w = x4.extent(3);
    if (ci % 4 != 0) throw ShapeMismatch("channel count divisible by 4", shape_str(x4.shape()));
    const std::int64_t co = ci / 4;
    Tensor out = Tensor::empty({n, co, 2 * h, 2 * w}, x4.dtype());
    DK_DISPATCH(x4.dtype(), [&]() {
        const scalar_t* px = x4.data<scalar_t>().data();
        scalar_t* po = out.data<scalar_t>().data();
        for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t c = 0; c < co; ++c)
                for (std::int64_t r = 0; r < 2; ++r)
                    for (std::int64_t s = 0; s < 2; ++s) {
                        const scalar_t* src = px + ((b * ci + c * 4 + r * 2 + s) * h) * w;
                        scalar_t* dst = po + ((b * co + c) * 2 * h + r) * 2 * w + s;
                        for (std::int64_t y = 0; y < h; ++y)
                            for (std::int64_t xx = 0; xx < w; ++xx)
                                dst[(y * 2) * 2 * w + xx * 2] = src[y * w + xx];
                    }
    });
    return out;
}

// out[n, 4c + 2r + s, h, w] = in[n, c, 2h+r, 2w+s]
Tensor pixel_unshuffle_t(const Tensor& x4) {
    const std::int64_t n = x4.extent(0), ci = x4.extent(1), h2 = x4.extent(2), w2 = x4.extent(3);
    if (h2 % 2 != 0 || w2 % 2 != 0)
        throw ShapeMismatch("even spatial extents", shape_str(x4.shape()));
    const std::int64_t h = h2 / 2, w = w2 / 2;
    Tensor out = Tensor::empty({n, ci * 4, h, w}, x4.dtype());
    DK_DISPATCH(x4.dtype(), [&]() {
        const scalar_t* px = x4.data<scalar_t>().data();
        scalar_t* po = out.data<scalar_t>().data();
        for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t c = 0; c < ci; ++c)
                for (std::int64_t r = 0; r < 2; ++r)
                    for (std::int64_t s = 0; s < 2; ++s) {
                        scalar_t* dst = po + ((b * ci * 4 + c * 4 + r * 2 + s) * h) * w;
                        const scalar_t* src = px + ((b * ci + c) * h2 + r) * w2 + s;
                        for (std::int64_t y = 0; y < h; ++y)
                            for (std::int64_t xx = 0; xx < w; ++xx)
                                dst[y * w + xx] = src[(y * 2) * w2 + xx * 2];
                    }
    });
    return out;
}

// Height: out[n, c*S+r, h', w] = in[n, c, h'*S+r, w]
// Width:  out[n, c*S+r, h, w'] = in[n, c, h, w'*S+r]
Tensor axial_fold_t(const Tensor& x4, SpatialAxis which, std::int64_t S) {
    const std::int64_t n = x4.extent(0), c = x4.extent(1), h = x4.extent(2), w = x4.extent(3);
    const bool height = which == SpatialAxis::Height;
    const std::int64_t len = height ? h : w;
    if (len % S != 0)
        throw ShapeMismatch("spatial extent divisible by " + std::to_string(S), shape_str(x4.shape()));
    const std::int64_t ho = height ? h / S : h, wo = height ? w : w / S;
    Tensor out = Tensor::empty({n, c * S, ho, wo}, x4.dtype());
    DK_DISPATCH(x4.dtype(), [&]() {
        const scalar_t* px = x4.data<scalar_t>().data();
        scalar_t* po = out.data<scalar_t>().data();
        for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t ch = 0; ch < c; ++ch)
                for (std::int64_t r = 0; r < S; ++r) {
                    scalar_t* dst = po + ((b * c * S + ch * S + r) * ho) * wo;
                    const scalar_t* src = px + ((b * c + ch) * h) * w;
                    if (height) {
                        for (std::int64_t y = 0; y < ho; ++y)
                            for (std::int64_t xx = 0; xx < wo; ++xx)
                                dst[y * wo + xx] = src[(y * S + r) * w + xx];
                    } else {
                        for (std::int64_t y = 0; y < ho; ++y)
                            for (std::int64_t xx = 0; xx < wo; ++xx)
                                dst[y * wo + xx] = src[y * w + xx * S + r];
                    }
                }
    });
    return out;
}

Tensor axial_unfold_t(const Tensor& x4, SpatialAxis which, std::int64_t S) {
    const std::int64_t n = x4.extent(0), cs = x4.extent(1), h = x4.extent(2), w = x4.extent(3);
    if (cs % S != 0)
        throw ShapeMismatch("channel count divisible by " + std::to_string(S), shape_str(x4.shape()));
    const bool height = which == SpatialAxis::Height;
    const std::int64_t c = cs / S;
    const std::int64_t ho = height ? h * S : h, wo = height ? w : w * S;
    Tensor out = Tensor::empty({n, c, ho, wo}, x4.dtype());
    DK_DISPATCH(x4.dtype(), [&]() {
        const scalar_t* px = x4.data<scalar_t>().data();
        scalar_t* po = out.data<scalar_t>().data();
        for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t ch = 0; ch < c; ++ch)
                for (std::int64_t r = 0; r < S; ++r) {
                    const scalar_t* src = px + ((b * cs + ch * S + r) * h) * w;
                    scalar_t* dst = po + ((b * c + ch) * ho) * wo;
                    if (height) {
                        for (std::int64_t y = 0; y < h; ++y)
                            for (std::int64_t xx = 0; xx < w; ++xx)
                                dst[(y * S + r) * wo + xx] = src[y * w + xx];
                    } else {
                        for (std::int64_t y = 0; y < h; ++y)
                            for (std::int64_t xx = 0; xx < w; ++xx)
                                dst[y * wo + xx * S + r] = src[y * w + xx];
                    }
                }
    });
    return out;
}

// Wraps a bijective layout kernel so rank-3 inputs round-trip through NCHW.
template <typename FwdK, typename BwdK>
Var record_layout(Var x, const char* op, FwdK fwd, BwdK bwd) {
    const Tensor& xv = x.val();
    const Shape in_shape = xv.shape();
    const Shape in4 = as_nchw(in_shape, op);
    Tensor y4 = fwd(xv.reshaped(in4));
    Shape out_shape = y4.shape();
    if (in_shape.size() == 3) out_shape = {out_shape[1], out_shape[2], out_shape[3]};
    Tensor value = y4.reshaped(out_shape);
    Shape out4 = y4.shape();
    return x.g->emit(std::move(value), {x}, [bwd, in_shape, out4](BackwardCtx& ctx) {
        if (!ctx.input_needs_grad(0)) return;
        Tensor g4 = bwd(ctx.grad_out().reshaped(out4));
        ctx.add_input_grad(0, g4.reshaped(in_shape));
    });
}

}  // namespace

Var reshape(Var x, Shape shape) {
    const Shape in_shape = x.val().shape();
    Tensor value = x.val().reshaped(shape);
    return x.g->emit(std::move(value), {x}, [in_shape](BackwardCtx& ctx) {
        if (!ctx.input_needs_grad(0)) return;
        ctx.add_input_grad(0, ctx.grad_out().reshaped(in_shape));
    });
}

Var transpose(Var x, std::vector<int> perm) {
    const Tensor& xv = x.val();
    if (perm.size() != xv.rank())
        throw ShapeMismatch("permutation of length " + std::to_string(xv.rank()),
                            std::to_string(perm.size()));
    std::vector<bool> seen(perm.size(), false);
    for (int p : perm) {
        if (p < 0 || p >= static_cast<int>(perm.size()) || seen[static_cast<std::size_t>(p)])
            throw ShapeMismatch("valid axis permutation", shape_str(Shape(perm.begin(), perm.end())));
        seen[static_cast<std::size_t>(p)] = true;
    }
    std::vector<int> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    Tensor value = transpose_t(xv, perm);
    return x.g->emit(std::move(value), {x}, [inv](BackwardCtx& ctx) {
        if (!ctx.input_needs_grad(0)) return;
        ctx.add_input_grad(0, transpose_t(ctx.grad_out(), inv));
    });
}

Var concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw ShapeMismatch("at least one tensor to concat", "0");
    Graph* g = parts[0].g;
    const Tensor& first = parts[0].val();
    check_axis(first.shape(), axis, "concat");
    Shape out_shape = first.shape();
    std::vector<std::int64_t> sizes;
    sizes.reserve(parts.size());
    std::int64_t total = 0;
    for (const Var& p : parts) {
        const Tensor& t = p.val();
        if (t.rank() != first.rank() || t.dtype() != first.dtype())
            throw ShapeMismatch("concat operands of matching rank/dtype", shape_str(t.shape()));
        for (std::size_t i = 0; i < t.rank(); ++i)
            if (static_cast<int>(i) != axis && t.extent(i) != first.extent(i))
                throw ShapeMismatch("matching non-concat extents with " + shape_str(first.shape()),
                                    shape_str(t.shape()));
        sizes.push_back(t.extent(static_cast<std::size_t>(axis)));
        total += sizes.back();
    }
    out_shape[static_cast<std::size_t>(axis)] = total;

    Tensor value = Tensor::empty(out_shape, first.dtype());
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < out_shape.size(); ++i) inner *= out_shape[i];
    DK_DISPATCH(first.dtype(), [&]() {
        scalar_t* po = value.data<scalar_t>().data();
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const scalar_t* ps = parts[k].val().data<scalar_t>().data();
            const std::int64_t len = sizes[k];
            for (std::int64_t o = 0; o < outer; ++o)
                std::copy(ps + o * len * inner, ps + (o + 1) * len * inner,
                          po + (o * total + offset) * inner);
            offset += len;
        }
    });

    return g->emit(std::move(value), parts, [axis, sizes](BackwardCtx& ctx) {
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            if (ctx.input_needs_grad(k))
                ctx.add_input_grad(k, slice_t(ctx.grad_out(), axis, offset, sizes[k]));
            offset += sizes[k];
        }
    });
}

Var slice(Var x, int axis, std::int64_t start, std::int64_t length) {
    const Tensor& xv = x.val();
    check_axis(xv.shape(), axis, "slice");
    const std::int64_t extent = xv.extent(static_cast<std::size_t>(axis));
    if (start < 0 || length < 1 || start + length > extent)
        throw ShapeMismatch("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                ") within extent " + std::to_string(extent),
                            shape_str(xv.shape()));
    Tensor value = slice_t(xv, axis, start, length);
    const Shape in_shape = xv.shape();
    return x.g->emit(std::move(value), {x}, [axis, start, in_shape](BackwardCtx& ctx) {
        if (!ctx.input_needs_grad(0)) return;
        Tensor gx = Tensor::zeros(in_shape, ctx.grad_out().dtype());
        scatter_slice_add(gx, ctx.grad_out(), axis, start);
        ctx.add_input_grad(0, std::move(gx));
    });
}

std::vector<Var> split(Var x, int axis, const std::vector<std::int64_t>& sizes) {
    const Tensor& xv = x.val();
    check_axis(xv.shape(), axis, "split");
    std::int64_t total = 0;
    for (std::int64_t s : sizes) total += s;
    if (total != xv.extent(static_cast<std::size_t>(axis)))
        throw ShapeMismatch("split sizes summing to " + std::to_string(xv.extent(static_cast<std::size_t>(axis))),
                            std::to_string(total));
    std::vector<Var> out;
    out.reserve(sizes.size());
    std::int64_t offset = 0;
    for (std::int64_t s : sizes) {
        out.push_back(slice(x, axis, offset, s));
        offset += s;
    }
    return out;
}

Var pixel_shuffle(Var x) {
    return record_layout(x, "pixel_shuffle", pixel_shuffle_t, pixel_unshuffle_t);
}

Var pixel_unshuffle(Var x) {
    return record_layout(x, "pixel_unshuffle", pixel_unshuffle_t, pixel_shuffle_t);
}

Var axial_fold(Var x, SpatialAxis which, int factor) {
    const std::int64_t S = factor;
    return record_layout(
        x, "axial_fold", [=](const Tensor& t) { return axial_fold_t(t, which, S); },
        [=](const Tensor& t) { return axial_unfold_t(t, which, S); });
}

Var axial_unfold(Var x, SpatialAxis which, int factor) {
    const std::int64_t S = factor;
    return record_layout(
        x, "axial_unfold", [=](const Tensor& t) { return axial_unfold_t(t, which, S); },
        [=](const Tensor& t) { return axial_fold_t(t, which, S); });
}

}  // namespace depthkit
