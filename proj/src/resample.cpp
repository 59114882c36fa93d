#include "depthkit/resample.hpp"

namespace depthkit {

const char* down_kind_name(DownKind k) {
    switch (k) {
        case DownKind::MaxPool: return "MaxPool";
        case DownKind::Stride: return "Stride";
        case DownKind::MaxPoolStride: return "MaxPoolStride";
        case DownKind::CAS: return "CAS";
        case DownKind::NCAS: return "NCAS";
        case DownKind::AdaNCAS: return "AdaNCAS";
        case DownKind::AdaNPCAS: return "AdaNPCAS";
        case DownKind::AdaAxialNPCAS: return "AdaAxialNPCAS";
    }
    return "?";
}

const char* up_kind_name(UpKind k) {
    switch (k) {
        case UpKind::BIU: return "BIU";
        case UpKind::RCU: return "RCU";
        case UpKind::NRCU: return "NRCU";
        case UpKind::AdaNRSU: return "AdaNRSU";
        case UpKind::DAdaNRSU: return "DAdaNRSU";
    }
    return "?";
}

std::optional<DownKind> parse_down_kind(const std::string& name) {
    for (DownKind k : {DownKind::MaxPool, DownKind::Stride, DownKind::MaxPoolStride, DownKind::CAS,
                       DownKind::NCAS, DownKind::AdaNCAS, DownKind::AdaNPCAS, DownKind::AdaAxialNPCAS})
        if (name == down_kind_name(k)) return k;
    return std::nullopt;
}

std::optional<UpKind> parse_up_kind(const std::string& name) {
    for (UpKind k : {UpKind::BIU, UpKind::RCU, UpKind::NRCU, UpKind::AdaNRSU, UpKind::DAdaNRSU})
        if (name == up_kind_name(k)) return k;
    return std::nullopt;
}

namespace {

bool has_pos_weight(DownKind k) {
    return k == DownKind::AdaNPCAS || k == DownKind::AdaAxialNPCAS;
}

bool has_gate(DownKind k) {
    return k == DownKind::AdaNCAS || k == DownKind::AdaNPCAS || k == DownKind::AdaAxialNPCAS;
}

// h: (n, channels) pooled head -> sigmoid(conv1d over the channel sequence),
// reshaped for per-channel broadcast.
Var channel_attention(const nn::Conv1d& attn, Var head) {
    const Shape& hs = head.shape();
    Var seq = reshape(head, {hs[0], 1, hs[1]});
    Var a = sigmoid(attn(seq));
    return reshape(a, {hs[0], hs[1], 1, 1});
}

}  // namespace

Downsampler::Downsampler(ParamRegistry& reg, const std::string& scope, DownKind kind,
                         std::int64_t channels, std::int64_t h, std::int64_t w)
    : kind_(kind), c_(channels), h_(h), w_(w) {
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeMismatch("even extents", std::to_string(h) + "x" + std::to_string(w));
    const std::int64_t c = channels;
    switch (kind) {
        case DownKind::MaxPool:
            break;
        case DownKind::Stride:
            stride_conv_ = nn::Conv2d(reg, scoped(scope, "stride"), c, c, 3, 2, 1);
            break;
        case DownKind::MaxPoolStride:
            stride_conv_ = nn::Conv2d(reg, scoped(scope, "stride"), c, c, 3, 2, 1);
            align_ = nn::Conv2d(reg, scoped(scope, "align"), c, c, 1);
            break;
        case DownKind::CAS:
        case DownKind::NCAS:
        case DownKind::AdaNCAS:
        case DownKind::AdaNPCAS:
            recomb_ = nn::Conv2d(reg, scoped(scope, "recomb"), 4 * c, 4 * c, 3, 1, 1);
            chan_attn_ = nn::Conv1d(reg, scoped(scope, "attn"), 1, 1, 3, 1, 1);
            squeeze_ = nn::Conv2d(reg, scoped(scope, "squeeze"), 4 * c, c, 3, 1, 1);
            if (kind == DownKind::NCAS)
                merge_ = nn::Conv2d(reg, scoped(scope, "merge"), 2 * c, c, 1);
            if (kind == DownKind::AdaNPCAS) {
                pos_ = reg.create(scoped(scope, "pos"), {4 * c, h / 2, w / 2}, Init::zero());
                we_ = reg.create(scoped(scope, "we"), {4 * c, h / 2, w / 2}, Init::one());
            }
            break;
        case DownKind::AdaAxialNPCAS:
            // Height pass on the folded (2C, H/2, W) map; one group per
            // original channel so recombination mixes only its folded rows.
            recomb_ = nn::Conv2d(reg, scoped(scope, "recomb_h"), 2 * c, 2 * c, 3, 1, 1,
                                 static_cast<int>(c));
            chan_attn_ = nn::Conv1d(reg, scoped(scope, "attn_h"), 1, 1, 3, 1, 1);
            squeeze_ = nn::Conv2d(reg, scoped(scope, "squeeze_h"), 2 * c, c, 3, 1, 1);
            pos_ = reg.create(scoped(scope, "pos_h"), {2 * c, h / 2, w}, Init::zero());
            we_ = reg.create(scoped(scope, "we_h"), {2 * c, h / 2, w}, Init::one());
            // Width pass on (2C, H/2, W/2).
            recomb_w_ = nn::Conv2d(reg, scoped(scope, "recomb_w"), 2 * c, 2 * c, 3, 1, 1,
                                   static_cast<int>(c));
            chan_attn_w_ = nn::Conv1d(reg, scoped(scope, "attn_w"), 1, 1, 3, 1, 1);
            squeeze_w_ = nn::Conv2d(reg, scoped(scope, "squeeze_w"), 2 * c, c, 3, 1, 1);
            pos_w_ = reg.create(scoped(scope, "pos_w"), {2 * c, h / 2, w / 2}, Init::zero());
            we_w_ = reg.create(scoped(scope, "we_w"), {2 * c, h / 2, w / 2}, Init::one());
            break;
    }
    if (has_gate(kind)) gate_ = reg.create(scoped(scope, "gate"), {c, h / 2, w / 2}, Init::zero());
}

Var Downsampler::cas_core(Var x) const {
    Var folded = pixel_unshuffle(x);  // (n, 4c, h/2, w/2)
    if (pos_) folded = add(folded, x.g->param(pos_));
    Var recombined = recomb_(folded);
    Var weighted = we_ ? mul(x.g->param(we_), recombined) : recombined;
    Var head = reduce_mean(weighted, {2, 3}, /*keepdims=*/false);  // (n, 4c)
    Var a = channel_attention(chan_attn_, head);
    Var attended = mul(recombined, a);
    return elu(squeeze_(attended));  // (n, c, h/2, w/2)
}

Var Downsampler::axial_pass(Var x, SpatialAxis axis, const nn::Conv2d& recomb, const ParamPtr& pos,
                            const ParamPtr& we, const nn::Conv1d& attn,
                            const nn::Conv2d& squeeze) const {
    Var folded = axial_fold(x, axis, 2);
    folded = add(folded, x.g->param(pos));
    Var recombined = recomb(folded);
    Var weighted = mul(x.g->param(we), recombined);
    Var head = reduce_mean(weighted, {2, 3}, /*keepdims=*/false);
    Var a = channel_attention(attn, head);
    Var attended = mul(recombined, a);
    return elu(squeeze(attended));
}

Var Downsampler::attention_path(Var x) const {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != c_)
        throw ShapeMismatch("(n, " + std::to_string(c_) + ", h, w)", shape_str(s));
    if (s[2] % 2 != 0 || s[3] % 2 != 0) throw ShapeMismatch("even extents", shape_str(s));
    if ((has_gate(kind_) || has_pos_weight(kind_)) && (s[2] != h_ || s[3] != w_))
        throw ShapeMismatch("(n, " + std::to_string(c_) + ", " + std::to_string(h_) + ", " +
                                std::to_string(w_) + ")",
                            shape_str(s));
    switch (kind_) {
        case DownKind::MaxPool:
            return max_pool2d(x, 2, 2, 2, 2);
        case DownKind::Stride:
            return elu(stride_conv_(x));
        case DownKind::MaxPoolStride:
            return add(align_(max_pool2d(x, 2, 2, 2, 2)), elu(stride_conv_(x)));
        case DownKind::NCAS: {
            Var cas = cas_core(x);
            Var pooled = max_pool2d(x, 2, 2, 2, 2);
            Var both = concat({nn::standardize(cas), nn::standardize(pooled)}, 1);
            return merge_(both);
        }
        case DownKind::CAS:
        case DownKind::AdaNCAS:
        case DownKind::AdaNPCAS:
            return cas_core(x);
        case DownKind::AdaAxialNPCAS: {
            Var after_h = axial_pass(x, SpatialAxis::Height, recomb_, pos_, we_, chan_attn_, squeeze_);
            return axial_pass(after_h, SpatialAxis::Width, recomb_w_, pos_w_, we_w_, chan_attn_w_,
                              squeeze_w_);
        }
    }
    throw std::logic_error("unhandled downsampler kind");
}

Var Downsampler::operator()(Var x) const {
    Var core = attention_path(x);
    if (!has_gate(kind_)) return core;
    Var pooled = nn::standardize(max_pool2d(x, 2, 2, 2, 2));
    return add(core, mul(x.g->param(gate_), pooled));
}

DownStack::DownStack(ParamRegistry& reg, const std::string& scope, DownKind kind,
                     std::int64_t channels, std::int64_t h, std::int64_t w, int times) {
    steps_.reserve(static_cast<std::size_t>(times));
    for (int j = 0; j < times; ++j) {
        steps_.emplace_back(reg, scoped(scope, "d" + std::to_string(j)), kind, channels, h, w);
        h /= 2;
        w /= 2;
    }
}

Var DownStack::operator()(Var x) const {
    for (const Downsampler& d : steps_) x = d(x);
    return x;
}

Upsampler::Upsampler(ParamRegistry& reg, const std::string& scope, UpKind kind,
                     std::int64_t channels, const AdaRmConfig& refine_cfg)
    : kind_(kind), c_(channels) {
    if (kind == UpKind::BIU) return;
    if (refine_cfg.channels != 4 * channels)
        throw ShapeMismatch("refine config on " + std::to_string(4 * channels) + " channels",
                            std::to_string(refine_cfg.channels));
    expand_ = nn::Conv2d(reg, scoped(scope, "expand"), channels, 4 * channels, 1);
    AdaRmConfig rc = refine_cfg;
    rc.adaptive = kind == UpKind::DAdaNRSU;
    refine_ = AdaRm(reg, scoped(scope, "refine"), rc);
    if (kind == UpKind::RCU || kind == UpKind::NRCU)
        merge_ = nn::Conv2d(reg, scoped(scope, "merge"), 2 * channels, channels, 1);
    else
        gate_ = reg.create(scoped(scope, "gate"),
                           {channels, 2 * refine_cfg.height, 2 * refine_cfg.width}, Init::zero());
}

Var Upsampler::operator()(Var x) const {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != c_)
        throw ShapeMismatch("(n, " + std::to_string(c_) + ", h, w)", shape_str(s));
    Var high1 = bilinear_upsample2x(x);
    if (kind_ == UpKind::BIU) return high1;
    Var low1 = expand_(x);
    Var low2 = refine_(low1);
    Var high2 = pixel_shuffle(low2);
    switch (kind_) {
        case UpKind::RCU:
            return merge_(concat({high1, high2}, 1));
        case UpKind::NRCU:
            return merge_(concat({nn::standardize(high1), nn::standardize(high2)}, 1));
        case UpKind::AdaNRSU:
        case UpKind::DAdaNRSU:
            return add(nn::standardize(high1), mul(x.g->param(gate_), nn::standardize(high2)));
        case UpKind::BIU:
            break;
    }
    throw std::logic_error("unhandled upsampler kind");
}

}  // namespace depthkit
