#include <algorithm>
#include <cmath>

#include "depthkit/ops.hpp"
#include "op_common.hpp"

namespace depthkit {

namespace detail {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        const std::int64_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::int64_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (ea != eb && ea != 1 && eb != 1)
            throw ShapeMismatch("broadcast-compatible with " + shape_str(a), shape_str(b));
        out[i] = std::max(ea, eb);
    }
    return out;
}

std::vector<std::int64_t> broadcast_strides(const Shape& from, const Shape& to) {
    auto fs = row_major_strides(from);
    std::vector<std::int64_t> out(to.size(), 0);
    const std::size_t off = to.size() - from.size();
    for (std::size_t i = 0; i < from.size(); ++i) {
        if (from[i] != 1 && from[i] != to[off + i])
            throw ShapeMismatch("broadcastable to " + shape_str(to), shape_str(from));
        out[off + i] = (from[i] == 1) ? 0 : fs[i];
    }
    return out;
}

template <typename T, typename F>
static void bc_apply(const Tensor& a, const Tensor& b, Tensor& out, F f) {
    const Shape& os = out.shape();
    const T* pa = a.data<T>().data();
    const T* pb = b.data<T>().data();
    T* po = out.data<T>().data();
    const std::int64_t n = out.numel();
    if (a.shape() == b.shape()) {
        for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
        return;
    }
    const auto sa = broadcast_strides(a.shape(), os);
    const auto sb = broadcast_strides(b.shape(), os);
    const int r = static_cast<int>(os.size());
    std::vector<std::int64_t> idx(os.size(), 0);
    std::int64_t oa = 0, ob = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        po[i] = f(pa[oa], pb[ob]);
        for (int d = r - 1; d >= 0; --d) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < os[d]) break;
            idx[d] = 0;
            oa -= sa[d] * os[d];
            ob -= sb[d] * os[d];
        }
    }
}

template <typename F>
static Tensor ew_binary(const Tensor& a, const Tensor& b, F f) {
    if (a.dtype() != b.dtype())
        throw ShapeMismatch(std::string("matching dtype ") + dtype_name(a.dtype()), dtype_name(b.dtype()));
    Tensor out = Tensor::empty(broadcast_shape(a.shape(), b.shape()), a.dtype());
    DK_DISPATCH(a.dtype(), [&]() {
        bc_apply<scalar_t>(a, b, out, [&](scalar_t x, scalar_t y) { return static_cast<scalar_t>(f(x, y)); });
    });
    return out;
}

Tensor ew_mul(const Tensor& a, const Tensor& b) {
    return ew_binary(a, b, [](auto x, auto y) { return x * y; });
}
Tensor ew_add(const Tensor& a, const Tensor& b) {
    return ew_binary(a, b, [](auto x, auto y) { return x + y; });
}
Tensor ew_div(const Tensor& a, const Tensor& b) {
    return ew_binary(a, b, [](auto x, auto y) { return x / y; });
}

Tensor reduce_to_shape(const Tensor& t, const Shape& target) {
    if (t.shape() == target) return t;
    Tensor out = Tensor::zeros(target, t.dtype());
    DK_DISPATCH(t.dtype(), [&]() {
        const scalar_t* pt = t.data<scalar_t>().data();
        scalar_t* po = out.data<scalar_t>().data();
        const Shape& ts = t.shape();
        const auto so = broadcast_strides(target, ts);
        const int r = static_cast<int>(ts.size());
        std::vector<std::int64_t> idx(ts.size(), 0);
        std::int64_t oo = 0;
        const std::int64_t n = t.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            po[oo] += pt[i];
            for (int d = r - 1; d >= 0; --d) {
                ++idx[d];
                oo += so[d];
                if (idx[d] < ts[d]) break;
                idx[d] = 0;
                oo -= so[d] * ts[d];
            }
        }
    });
    return out;
}

Tensor broadcast_to(const Tensor& t, const Shape& target) {
    if (t.shape() == target) return t;
    Tensor out = Tensor::empty(target, t.dtype());
    DK_DISPATCH(t.dtype(), [&]() {
        const scalar_t* pt = t.data<scalar_t>().data();
        scalar_t* po = out.data<scalar_t>().data();
        const auto st = broadcast_strides(t.shape(), target);
        const int r = static_cast<int>(target.size());
        std::vector<std::int64_t> idx(target.size(), 0);
        std::int64_t ot = 0;
        const std::int64_t n = out.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            po[i] = pt[ot];
            for (int d = r - 1; d >= 0; --d) {
                ++idx[d];
                ot += st[d];
                if (idx[d] < target[d]) break;
                idx[d] = 0;
                ot -= st[d] * target[d];
            }
        }
    });
    return out;
}

template <typename F>
Tensor ew_unary(const Tensor& x, F f) {
    Tensor out = Tensor::empty(x.shape(), x.dtype());
    DK_DISPATCH(x.dtype(), [&]() {
        const scalar_t* px = x.data<scalar_t>().data();
        scalar_t* po = out.data<scalar_t>().data();
        const std::int64_t n = x.numel();
        for (std::int64_t i = 0; i < n; ++i) po[i] = static_cast<scalar_t>(f(px[i]));
    });
    return out;
}

Tensor ew_scale(const Tensor& x, double alpha) {
    return ew_unary(x, [&](auto v) { return static_cast<decltype(v)>(alpha) * v; });
}

}  // namespace detail

namespace {

using detail::broadcast_shape;
using detail::ew_binary;
using detail::ew_unary;
using detail::reduce_to_shape;

Var record_binary(Var a, Var b, Tensor value,
                  std::function<Tensor(const Tensor& gy, const Tensor& av, const Tensor& bv)> da,
                  std::function<Tensor(const Tensor& gy, const Tensor& av, const Tensor& bv)> db) {
    return a.g->emit(std::move(value), {a, b}, [da = std::move(da), db = std::move(db)](BackwardCtx& ctx) {
        const Tensor& av = ctx.input(0);
        const Tensor& bv = ctx.input(1);
        if (ctx.input_needs_grad(0))
            ctx.add_input_grad(0, reduce_to_shape(da(ctx.grad_out(), av, bv), av.shape()));
        if (ctx.input_needs_grad(1))
            ctx.add_input_grad(1, reduce_to_shape(db(ctx.grad_out(), av, bv), bv.shape()));
    });
}

template <typename FwdF, typename GradF>
Var record_unary(Var x, FwdF f, GradF dfdx_times_gy) {
    Tensor value = ew_unary(x.val(), f);
    return x.g->emit(std::move(value), {x}, [dfdx_times_gy](BackwardCtx& ctx) {
        if (!ctx.input_needs_grad(0)) return;
        ctx.add_input_grad(0, dfdx_times_gy(ctx.grad_out(), ctx.input(0), ctx.output()));
    });
}

}  // namespace

Var add(Var a, Var b) {
    return record_binary(a, b, detail::ew_add(a.val(), b.val()),
                         [](const Tensor& gy, const Tensor&, const Tensor&) { return gy; },
                         [](const Tensor& gy, const Tensor&, const Tensor&) { return gy; });
}

Var sub(Var a, Var b) {
    return record_binary(a, b, ew_binary(a.val(), b.val(), [](auto x, auto y) { return x - y; }),
                         [](const Tensor& gy, const Tensor&, const Tensor&) { return gy; },
                         [](const Tensor& gy, const Tensor&, const Tensor&) { return detail::ew_scale(gy, -1.0); });
}

Var mul(Var a, Var b) {
    return record_binary(a, b, detail::ew_mul(a.val(), b.val()),
                         [](const Tensor& gy, const Tensor&, const Tensor& bv) { return detail::ew_mul(gy, bv); },
                         [](const Tensor& gy, const Tensor& av, const Tensor&) { return detail::ew_mul(gy, av); });
}

Var div(Var a, Var b) {
    return record_binary(a, b, detail::ew_div(a.val(), b.val()),
                         [](const Tensor& gy, const Tensor&, const Tensor& bv) { return detail::ew_div(gy, bv); },
                         [](const Tensor& gy, const Tensor& av, const Tensor& bv) {
                             Tensor t = detail::ew_mul(gy, av);  // gy * a
                             Tensor b2 = detail::ew_mul(bv, bv);
                             return detail::ew_scale(detail::ew_div(t, b2), -1.0);
                         });
}

Var neg(Var x) { return scale(x, -1.0); }

Var scale(Var x, double alpha) {
    return record_unary(
        x, [alpha](auto v) { return alpha * v; },
        [alpha](const Tensor& gy, const Tensor&, const Tensor&) { return detail::ew_scale(gy, alpha); });
}

Var add_scalar(Var x, double beta) {
    return record_unary(
        x, [beta](auto v) { return v + beta; },
        [](const Tensor& gy, const Tensor&, const Tensor&) { return gy; });
}

Var abs(Var x) {
    return record_unary(
        x, [](auto v) { return v < 0 ? -v : v; },
        [](const Tensor& gy, const Tensor& xv, const Tensor&) {
            return ew_binary(gy, xv, [](auto g, auto v) { return v > 0 ? g : (v < 0 ? -g : decltype(g)(0)); });
        });
}

Var log(Var x) {
    return record_unary(
        x, [](auto v) { return std::log(v); },
        [](const Tensor& gy, const Tensor& xv, const Tensor&) { return detail::ew_div(gy, xv); });
}

Var sqrt(Var x) {
    return record_unary(
        x, [](auto v) { return std::sqrt(v); },
        [](const Tensor& gy, const Tensor&, const Tensor& yv) {
            return ew_binary(gy, yv, [](auto g, auto y) { return g / (decltype(g)(2) * y); });
        });
}

Var relu(Var x) {
    return record_unary(
        x, [](auto v) { return v > 0 ? v : decltype(v)(0); },
        [](const Tensor& gy, const Tensor& xv, const Tensor&) {
            return ew_binary(gy, xv, [](auto g, auto v) { return v > 0 ? g : decltype(g)(0); });
        });
}

Var elu(Var x) {
    return record_unary(
        x, [](auto v) { return v > 0 ? v : std::exp(v) - decltype(v)(1); },
        [](const Tensor& gy, const Tensor& xv, const Tensor&) {
            return ew_binary(gy, xv, [](auto g, auto v) { return v > 0 ? g : g * std::exp(v); });
        });
}

Var gelu(Var x) {
    constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
    constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
    return record_unary(
        x,
        [=](auto v) {
            const double d = static_cast<double>(v);
            return decltype(v)(0.5 * d * (1.0 + std::erf(d * kInvSqrt2)));
        },
        [=](const Tensor& gy, const Tensor& xv, const Tensor&) {
            return ew_binary(gy, xv, [=](auto g, auto v) {
                const double d = static_cast<double>(v);
                const double cdf = 0.5 * (1.0 + std::erf(d * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * d * d);
                return decltype(g)(static_cast<double>(g) * (cdf + d * pdf));
            });
        });
}

Var sigmoid(Var x) {
    return record_unary(
        x, [](auto v) { return decltype(v)(1) / (decltype(v)(1) + std::exp(-v)); },
        [](const Tensor& gy, const Tensor&, const Tensor& yv) {
            return ew_binary(gy, yv, [](auto g, auto y) { return g * y * (decltype(y)(1) - y); });
        });
}

namespace {

struct AxisSplit {
    std::int64_t outer, n, inner;
};

AxisSplit axis_split(const Shape& s, int axis) {
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw ShapeMismatch("axis within rank " + std::to_string(s.size()), std::to_string(axis));
    AxisSplit out{1, s[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) out.outer *= s[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) out.inner *= s[i];
    return out;
}

}  // namespace

Var softmax(Var x, int axis) {
    const Tensor& xv = x.val();
    const auto sp = axis_split(xv.shape(), axis);
    Tensor value = Tensor::empty(xv.shape(), xv.dtype());
    DK_DISPATCH(xv.dtype(), [&]() {
        const scalar_t* px = xv.data<scalar_t>().data();
        scalar_t* po = value.data<scalar_t>().data();
        for (std::int64_t o = 0; o < sp.outer; ++o) {
            for (std::int64_t in = 0; in < sp.inner; ++in) {
                const std::int64_t base = o * sp.n * sp.inner + in;
                scalar_t mx = px[base];
                for (std::int64_t j = 1; j < sp.n; ++j) mx = std::max(mx, px[base + j * sp.inner]);
                scalar_t sum = 0;
                for (std::int64_t j = 0; j < sp.n; ++j) {
                    const scalar_t e = std::exp(px[base + j * sp.inner] - mx);
                    po[base + j * sp.inner] = e;
                    sum += e;
                }
                for (std::int64_t j = 0; j < sp.n; ++j) po[base + j * sp.inner] /= sum;
            }
        }
    });
    return x.g->emit(std::move(value), {x}, [axis](BackwardCtx& ctx) {
        if (!ctx.input_needs_grad(0)) return;
        const Tensor& y = ctx.output();
        const Tensor& gy = ctx.grad_out();
        const auto sp = axis_split(y.shape(), axis);
        Tensor gx = Tensor::empty(y.shape(), y.dtype());
        DK_DISPATCH(y.dtype(), [&]() {
            const scalar_t* py = y.data<scalar_t>().data();
            const scalar_t* pg = gy.data<scalar_t>().data();
            scalar_t* po = gx.data<scalar_t>().data();
            for (std::int64_t o = 0; o < sp.outer; ++o) {
                for (std::int64_t in = 0; in < sp.inner; ++in) {
                    const std::int64_t base = o * sp.n * sp.inner + in;
                    scalar_t dot = 0;
                    for (std::int64_t j = 0; j < sp.n; ++j)
                        dot += pg[base + j * sp.inner] * py[base + j * sp.inner];
                    for (std::int64_t j = 0; j < sp.n; ++j) {
                        const std::int64_t k = base + j * sp.inner;
                        po[k] = py[k] * (pg[k] - dot);
                    }
                }
            }
        });
        ctx.add_input_grad(0, std::move(gx));
    });
}

namespace {

std::vector<int> normalize_axes(std::vector<int> axes, std::size_t rank) {
    for (int a : axes) {
        if (a < 0 || a >= static_cast<int>(rank))
            throw ShapeMismatch("axes within rank " + std::to_string(rank), std::to_string(a));
    }
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    return axes;
}

Shape reduced_shape(const Shape& in, const std::vector<int>& axes, bool keepdims) {
    Shape out;
    std::size_t k = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        const bool is_reduced = k < axes.size() && axes[k] == static_cast<int>(i);
        if (is_reduced) {
            ++k;
            if (keepdims) out.push_back(1);
        } else {
            out.push_back(in[i]);
        }
    }
    return out;
}

Var reduce_impl(Var x, std::vector<int> axes, bool keepdims, bool mean) {
    const Tensor& xv = x.val();
    axes = normalize_axes(std::move(axes), xv.rank());
    Shape keep_shape = reduced_shape(xv.shape(), axes, /*keepdims=*/true);
    Shape out_shape = reduced_shape(xv.shape(), axes, keepdims);

    std::int64_t count = 1;
    for (int a : axes) count *= xv.extent(static_cast<std::size_t>(a));

    Tensor sum = reduce_to_shape(xv, keep_shape);
    if (mean && count > 1) sum = detail::ew_scale(sum, 1.0 / static_cast<double>(count));
    Tensor value = sum.reshaped(out_shape);

    const Shape x_shape = xv.shape();
    return x.g->emit(std::move(value), {x}, [keep_shape, x_shape, count, mean](BackwardCtx& ctx) {
        if (!ctx.input_needs_grad(0)) return;
        Tensor gy = ctx.grad_out().reshaped(keep_shape);
        if (mean && count > 1) gy = detail::ew_scale(gy, 1.0 / static_cast<double>(count));
        ctx.add_input_grad(0, detail::broadcast_to(gy, x_shape));
    });
}

}  // namespace

Var reduce_sum(Var x, std::vector<int> axes, bool keepdims) {
    return reduce_impl(x, std::move(axes), keepdims, /*mean=*/false);
}

Var reduce_mean(Var x, std::vector<int> axes, bool keepdims) {
    return reduce_impl(x, std::move(axes), keepdims, /*mean=*/true);
}

Var reduce_sum_all(Var x) {
    std::vector<int> axes(x.val().rank());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
    return reduce_sum(x, std::move(axes), /*keepdims=*/false);
}

Var reduce_mean_all(Var x) {
    std::vector<int> axes(x.val().rank());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
    return reduce_mean(x, std::move(axes), /*keepdims=*/false);
}

}  // namespace depthkit
