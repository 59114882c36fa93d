#include "depthkit/nn.hpp"

#include <cmath>

namespace depthkit::nn {

Conv2d::Conv2d(ParamRegistry& reg, const std::string& scope, std::int64_t c_in, std::int64_t c_out,
               int k, int stride, int pad, int groups, bool bias) {
    *this = rect(reg, scope, c_in, c_out, k, k, stride, stride, pad, pad, groups, bias);
}

Conv2d Conv2d::rect(ParamRegistry& reg, const std::string& scope, std::int64_t c_in,
                    std::int64_t c_out, int kh, int kw, int stride_h, int stride_w, int pad_h,
                    int pad_w, int groups, bool bias) {
    Conv2d c;
    const std::int64_t fan_in = (c_in / groups) * kh * kw;
    c.w = reg.create(scoped(scope, "w"), {c_out, c_in / groups, kh, kw}, Init::uniform_fan(fan_in));
    if (bias) c.b = reg.create(scoped(scope, "b"), {c_out}, Init::zero());
    c.attrs.stride_h = stride_h;
    c.attrs.stride_w = stride_w;
    c.attrs.pad_h = pad_h;
    c.attrs.pad_w = pad_w;
    c.attrs.groups = groups;
    return c;
}

Var Conv2d::operator()(Var x) const {
    std::optional<Var> bias;
    if (b) bias = x.g->param(b);
    return conv2d(x, x.g->param(w), bias, attrs);
}

Conv1d::Conv1d(ParamRegistry& reg, const std::string& scope, std::int64_t c_in, std::int64_t c_out,
               int k, int stride_, int pad_, bool bias)
    : stride(stride_), pad(pad_) {
    const std::int64_t fan_in = c_in * k;
    w = reg.create(scoped(scope, "w"), {c_out, c_in, k}, Init::uniform_fan(fan_in));
    if (bias) b = reg.create(scoped(scope, "b"), {c_out}, Init::zero());
}

Var Conv1d::operator()(Var x) const {
    std::optional<Var> bias;
    if (b) bias = x.g->param(b);
    return conv1d(x, x.g->param(w), bias, stride, pad);
}

ConvTranspose2d::ConvTranspose2d(ParamRegistry& reg, const std::string& scope, std::int64_t c_in,
                                 std::int64_t c_out, int kh, int kw, int stride_h_, int stride_w_,
                                 bool bias)
    : stride_h(stride_h_), stride_w(stride_w_) {
    const std::int64_t fan_in = c_in * kh * kw;
    w = reg.create(scoped(scope, "w"), {c_in, c_out, kh, kw}, Init::uniform_fan(fan_in));
    if (bias) b = reg.create(scoped(scope, "b"), {c_out}, Init::zero());
}

Var ConvTranspose2d::operator()(Var x) const {
    std::optional<Var> bias;
    if (b) bias = x.g->param(b);
    return conv_transpose2d(x, x.g->param(w), bias, stride_h, stride_w);
}

Linear::Linear(ParamRegistry& reg, const std::string& scope, std::int64_t in, std::int64_t out,
               bool bias) {
    w = reg.create(scoped(scope, "w"), {in, out}, Init::uniform_fan(in));
    if (bias) b = reg.create(scoped(scope, "b"), {out}, Init::zero());
}

Var Linear::operator()(Var x) const {
    const Shape& xs = x.shape();
    if (xs.size() != 2 && xs.size() != 3)
        throw ShapeMismatch("linear input of rank 2 or 3", shape_str(xs));
    const std::int64_t in = w->value.extent(0), out = w->value.extent(1);
    if (xs.back() != in)
        throw ShapeMismatch("trailing extent " + std::to_string(in), shape_str(xs));
    Var x2 = x;
    if (xs.size() == 3) x2 = reshape(x, {xs[0] * xs[1], xs[2]});
    Var y = matmul(x2, x.g->param(w));
    if (b) y = add(y, x.g->param(b));
    if (xs.size() == 3) y = reshape(y, {xs[0], xs[1], out});
    return y;
}

Var standardize(Var x, double eps) {
    const std::size_t r = x.shape().size();
    if (r < 2) throw ShapeMismatch("standardize input of rank >= 2", shape_str(x.shape()));
    std::vector<int> axes;
    for (std::size_t i = 1; i < r; ++i) axes.push_back(static_cast<int>(i));
    Var mean = reduce_mean(x, axes, /*keepdims=*/true);
    Var centered = sub(x, mean);
    Var var = reduce_mean(mul(centered, centered), axes, /*keepdims=*/true);
    Var sigma = sqrt(var);
    return div(centered, add_scalar(sigma, eps));
}

TokenEmbed::TokenEmbed(ParamRegistry& reg, const std::string& scope, std::int64_t c_in,
                       std::int64_t c_embed, int h_sub_, int w_sub_)
    : h_sub(h_sub_), w_sub(w_sub_) {
    patch = Conv2d::rect(reg, scoped(scope, "patch"), c_in, c_in, h_sub, w_sub, h_sub, w_sub, 0, 0);
    embed = Conv2d(reg, scoped(scope, "embed"), c_in, c_embed, 1);
}

Var TokenEmbed::operator()(Var x) const {
    const Shape& xs = x.shape();
    if (xs.size() != 4) throw ShapeMismatch("token embed input of rank 4", shape_str(xs));
    if (xs[2] % h_sub != 0 || xs[3] % w_sub != 0)
        throw ShapeMismatch("spatial extents divisible by (" + std::to_string(h_sub) + ", " +
                                std::to_string(w_sub) + ")",
                            shape_str(xs));
    Var y = elu(embed(patch(x)));  // (n, c_embed, gh, gw)
    const Shape& ys = y.shape();
    Var flat = reshape(y, {ys[0], ys[1], ys[2] * ys[3]});
    return transpose(flat, {0, 2, 1});  // (n, T, c_embed)
}

MhaBlock::MhaBlock(ParamRegistry& reg, const std::string& scope, std::int64_t c_embed_, int heads_)
    : c_embed(c_embed_), heads(heads_) {
    if (c_embed % heads != 0)
        throw ShapeMismatch("embed dim divisible by heads=" + std::to_string(heads),
                            std::to_string(c_embed));
    qkv = Linear(reg, scoped(scope, "qkv"), c_embed, 3 * c_embed);
    proj = Linear(reg, scoped(scope, "proj"), c_embed, c_embed);
    mlp_fc1 = Linear(reg, scoped(scope, "mlp_fc1"), c_embed, 4 * c_embed);
    mlp_fc2 = Linear(reg, scoped(scope, "mlp_fc2"), 4 * c_embed, c_embed);
    attn_scale = 1.0 / std::sqrt(static_cast<double>(c_embed / heads));
}

Var MhaBlock::forward(Var x, MhaTrace* trace) const {
    const Shape& xs = x.shape();
    if (xs.size() != 3 || xs[2] != c_embed)
        throw ShapeMismatch("(n, T, " + std::to_string(c_embed) + ") tokens", shape_str(xs));
    const std::int64_t n = xs[0], t = xs[1], hd = c_embed / heads;

    Var qkv_out = qkv(x);  // (n, T, 3C)
    auto parts = split(qkv_out, 2, {c_embed, c_embed, c_embed});
    auto to_heads = [&](Var v) {
        Var r = reshape(v, {n, t, heads, hd});
        r = transpose(r, {0, 2, 1, 3});  // (n, heads, T, hd)
        return reshape(r, {n * heads, t, hd});
    };
    Var q = to_heads(parts[0]), k = to_heads(parts[1]), v = to_heads(parts[2]);

    Var logits = scale(matmul(q, transpose(k, {0, 2, 1})), attn_scale);  // (n*heads, T, T)
    Var attn = softmax(logits, 2);
    Var ctx = matmul(attn, v);  // (n*heads, T, hd)

    Var merged = reshape(ctx, {n, heads, t, hd});
    merged = transpose(merged, {0, 2, 1, 3});
    merged = reshape(merged, {n, t, c_embed});
    if (trace) {
        trace->attn = attn;
        trace->head_out = merged;
    }

    Var x1 = proj(merged);
    Var h = add(x, x1);
    Var mlp = mlp_fc2(gelu(mlp_fc1(h)));
    return add(h, mlp);
}

TokenToMap::TokenToMap(ParamRegistry& reg, const std::string& scope, std::int64_t c_embed,
                       std::int64_t c_out, int h_sub, int w_sub) {
    up = ConvTranspose2d(reg, scoped(scope, "up"), c_embed, c_out, h_sub, w_sub, h_sub, w_sub);
}

Var TokenToMap::operator()(Var tokens, std::int64_t grid_h, std::int64_t grid_w) const {
    const Shape& ts = tokens.shape();
    if (ts.size() != 3 || ts[1] != grid_h * grid_w)
        throw ShapeMismatch("(n, " + std::to_string(grid_h * grid_w) + ", c_embed) tokens",
                            shape_str(ts));
    Var maps = transpose(tokens, {0, 2, 1});  // (n, c_embed, T)
    maps = reshape(maps, {ts[0], ts[2], grid_h, grid_w});
    return up(maps);
}

}  // namespace depthkit::nn
