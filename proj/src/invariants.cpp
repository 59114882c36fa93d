#include "depthkit/invariants.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "depthkit/adarm.hpp"
#include "depthkit/gradcheck.hpp"
#include "depthkit/io.hpp"
#include "depthkit/train.hpp"

namespace depthkit::invariants {
namespace {

bool fail(std::string* detail, const std::string& msg) {
    if (detail != nullptr) *detail = msg;
    return false;
}

Tensor rnd(Rng& rng, Shape shape, Dtype dt = Dtype::F64) {
    return rng.uniform_tensor(std::move(shape), -1.0, 1.0, dt);
}

std::vector<double> sorted_values(const Tensor& t) {
    std::vector<double> v(static_cast<std::size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i) v[static_cast<std::size_t>(i)] = t.get(i);
    std::sort(v.begin(), v.end());
    return v;
}

std::filesystem::path temp_file(std::uint64_t seed, const char* stem) {
    return std::filesystem::temp_directory_path() /
           ("depthkit_" + std::string(stem) + "_" + std::to_string(seed) + ".tmp");
}

bool rng_determinism(std::uint64_t seed, bool inject, std::string* detail) {
    Rng a(seed), b(inject ? seed + 1 : seed);
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() != b.next_u64()) return fail(detail, "same-seed streams diverged");
    Rng c(seed), d(seed + 1);
    bool differ = false;
    for (int i = 0; i < 64; ++i)
        if (c.next_u64() != d.next_u64()) differ = true;
    if (!differ) return fail(detail, "distinct seeds produced one stream");
    return true;
}

bool dtype_parity(std::uint64_t seed, bool inject, std::string* detail) {
    Rng rng(seed);
    Tensor x32 = rnd(rng, {3, 4, 5}, Dtype::F32);
    auto compute = [](Tensor x) {
        Graph g;
        Var v = g.constant(std::move(x));
        return elu(mul(add(v, v), sigmoid(v))).val();
    };
    Tensor y32 = compute(x32);
    Tensor y64 = compute(x32.astype(Dtype::F64));
    if (inject) y32.set(0, y32.get(0) + 1e-3);
    if (max_abs_diff(y32.astype(Dtype::F64), y64) > 1e-6)
        return fail(detail, "f32/f64 op results diverge beyond f32 rounding");
    return true;
}

bool softmax_rows(std::uint64_t seed, bool inject, std::string* detail) {
    Rng rng(seed);
    Graph g;
    Var x = g.constant(rng.uniform_tensor({3, 4, 6}, -4.0, 4.0, Dtype::F64));
    for (int axis = 0; axis < 3; ++axis) {
        Tensor y = softmax(x, axis).val();
        if (inject && axis == 1) y.set(5, y.get(5) * 1.01);
        const Shape& s = y.shape();
        const std::int64_t n = s[static_cast<std::size_t>(axis)];
        std::int64_t outer = 1, inner = 1;
        for (int d = 0; d < axis; ++d) outer *= s[static_cast<std::size_t>(d)];
        for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t i = 0; i < inner; ++i) {
                double sum = 0;
                for (std::int64_t k = 0; k < n; ++k) sum += y.get((o * n + k) * inner + i);
                if (std::abs(sum - 1.0) > 1e-6)
                    return fail(detail, "softmax row sum " + std::to_string(sum) + " on axis " +
                                            std::to_string(axis));
            }
    }
    return true;
}

bool mha_single_token(std::uint64_t seed, bool inject, std::string* detail) {
    ParamRegistry reg(seed, Dtype::F64);
    Rng rng(seed + 3);
    nn::MhaBlock mha(reg, "mha", 8, 2);
    gradcheck::randomize_params(reg, rng);
    Graph g;
    Var x = g.constant(rnd(rng, {2, 1, 8}));
    nn::MhaTrace trace;
    (void)mha.forward(x, &trace);
    const Tensor& attn = trace.attn.val();
    for (std::int64_t i = 0; i < attn.numel(); ++i)
        if (attn.get(i) != 1.0)
            return fail(detail, "single-token attention weight is " + std::to_string(attn.get(i)));
    Var v = slice(mha.qkv(x), 2, inject ? 0 : 16, 8);
    if (!bit_equal(trace.head_out.val(), v.val()))
        return fail(detail, "single-token head output is not the value path bit-for-bit");
    return true;
}

bool mha_zero_tail(std::uint64_t seed, bool inject, std::string* detail) {
    ParamRegistry reg(seed, Dtype::F64);
    Rng rng(seed + 5);
    nn::MhaBlock mha(reg, "mha", 6, 2);
    gradcheck::randomize_params(reg, rng);
    for (const ParamPtr& p : {mha.proj.w, mha.proj.b, mha.mlp_fc2.w, mha.mlp_fc2.b})
        for (std::int64_t i = 0; i < p->value.numel(); ++i) p->value.set(i, 0.0);
    if (inject) mha.proj.b->value.set(0, 1e-7);
    Graph g;
    Var x = g.constant(rnd(rng, {2, 5, 6}));
    if (!bit_equal(mha(x).val(), x.val()))
        return fail(detail, "zero-projection attention block is not an exact identity");
    return true;
}

bool layout_roundtrip(std::uint64_t seed, bool inject, std::string* detail) {
    Rng rng(seed);
    Graph g;
    Var a = g.constant(rnd(rng, {2, 8, 3, 5}));  // (n, 4c, h, w)
    Var b = g.constant(rnd(rng, {2, 2, 6, 10}));
    Tensor back_a = pixel_unshuffle(pixel_shuffle(a)).val();
    if (inject) back_a.set(7, back_a.get(7) + 1.0);
    if (!bit_equal(back_a, a.val())) return fail(detail, "unshuffle(shuffle) is not the identity");
    if (!bit_equal(pixel_shuffle(pixel_unshuffle(b)).val(), b.val()))
        return fail(detail, "shuffle(unshuffle) is not the identity");
    if (sorted_values(pixel_shuffle(a).val()) != sorted_values(a.val()))
        return fail(detail, "shuffle changed the value multiset");
    Var c = g.constant(rnd(rng, {2, 3, 6, 6}));
    for (const SpatialAxis axis : {SpatialAxis::Height, SpatialAxis::Width})
        for (const int s : {2, 3}) {
            Var folded = axial_fold(c, axis, s);
            if (sorted_values(folded.val()) != sorted_values(c.val()))
                return fail(detail, "fold changed the value multiset");
            if (!bit_equal(axial_unfold(folded, axis, s).val(), c.val()))
                return fail(detail, "unfold(fold) is not the identity");
        }
    return true;
}

bool token_map_shapes(std::uint64_t seed, bool inject, std::string* detail) {
    ParamRegistry reg(seed, Dtype::F64);
    Rng rng(seed + 9);
    nn::TokenEmbed emb(reg, "emb", 3, 6, 2, 3);
    nn::TokenToMap to_map(reg, "map", 6, 5, 2, 3);
    Graph g;
    Var x = g.constant(rnd(rng, {2, 3, 4, 6}));
    Var tokens = emb(x);
    const Shape want_tokens{2, 4, 6};
    if (tokens.shape() != want_tokens)
        return fail(detail, "token sequence shape " + shape_str(tokens.shape()));
    Var map = to_map(tokens, 2, 2);
    const Shape want_map{2, 5, inject ? 5 : 4, 6};
    if (map.shape() != want_map)
        return fail(detail, "token map shape " + shape_str(map.shape()));
    return true;
}

AdaRmConfig small_rm(bool adaptive) {
    AdaRmConfig rc;
    rc.channels = 8;
    rc.height = 4;
    rc.width = 6;
    rc.n_sq = 2;
    rc.h_sub = 2;
    rc.w_sub = 2;
    rc.c_embed = 6;
    rc.heads = 2;
    rc.adaptive = adaptive;
    return rc;
}

bool adarm_identity(std::uint64_t seed, bool inject, std::string* detail) {
    ParamRegistry reg(seed, Dtype::F64);
    Rng rng(seed + 7);
    AdaRm rm(reg, "rm", small_rm(true));
    if (inject) rm.gate_local()->value.set(3, 1e-3);
    Graph g;
    Var x = g.constant(rnd(rng, {2, 8, 4, 6}));
    if (!bit_equal(rm(x).val(), x.val()))
        return fail(detail, "fresh adaptive refinement is not a bit-exact identity");
    return true;
}

bool adarm_gates_learn(std::uint64_t seed, bool inject, std::string* detail) {
    ParamRegistry reg(seed, Dtype::F64);
    Rng rng(seed + 11);
    AdaRm rm(reg, "rm", small_rm(true));
    Graph g;
    Var x = g.constant(rnd(rng, {2, 8, 4, 6}));
    Var loss = reduce_sum_all(mul(rm(x), g.constant(rnd(rng, {2, 8, 4, 6}))));
    Gradients grads = g.backward(loss, reg.params());
    for (const ParamPtr& gate : {rm.gate_local(), rm.gate_global()}) {
        Tensor gg = grads.of(gate->name);
        if (inject) gg = Tensor::zeros(gg.shape(), gg.dtype());
        bool any = false;
        for (std::int64_t i = 0; i < gg.numel(); ++i)
            if (gg.get(i) != 0.0) any = true;
        if (!any) return fail(detail, "gate " + gate->name + " received no gradient");
    }
    return true;
}

bool adarm_recomposition(std::uint64_t seed, bool inject, std::string* detail) {
    for (const bool adaptive : {true, false}) {
        ParamRegistry reg(seed, Dtype::F64);
        Rng rng(seed + 13);
        AdaRm rm(reg, "rm", small_rm(adaptive));
        gradcheck::randomize_params(reg, rng);
        Graph g;
        Var x = g.constant(rnd(rng, {2, 8, 4, 6}));
        Var out = rm(x);
        Var x1 = rm.squeezed(x);
        Var x3 = rm.local_branch(x1);
        Var x5 = rm.global_branch(x1);
        Var manual;
        if (adaptive) {
            Var g1 = g.param(rm.gate_local());
            Var g2 = g.param(rm.gate_global());
            manual = add(add(x, mul(g1, x3)), mul(g2, x5));
        } else {
            manual = add(add(x, x3), x5);
        }
        Tensor m = manual.val();
        if (inject) m.set(0, m.get(0) + 1e-9);
        if (!bit_equal(out.val(), m))
            return fail(detail, std::string("branch recomposition differs (adaptive = ") +
                                    (adaptive ? "true)" : "false)"));
    }
    return true;
}

bool fold_unfold_bijection(std::uint64_t seed, bool inject, std::string* detail) {
    Rng rng(seed);
    Graph g;
    Var x = g.constant(rnd(rng, {2, 3, 6, 6}));
    Var both = axial_fold(axial_fold(x, SpatialAxis::Height, 2), SpatialAxis::Width, 2);
    if (!bit_equal(both.val(), pixel_unshuffle(x).val()))
        return fail(detail, "height-then-width fold does not equal space-to-depth");
    Tensor back =
        axial_unfold(axial_fold(x, SpatialAxis::Height, 3), SpatialAxis::Height, 3).val();
    if (inject) back.set(11, back.get(11) * (1 + 1e-12) + 1e-30);
    if (!bit_equal(back, x.val())) return fail(detail, "fold round trip is not bit-exact");
    return true;
}

bool ada_matches_core(std::uint64_t seed, bool inject, std::string* detail) {
    ParamRegistry reg(seed, Dtype::F64);
    Rng rng(seed + 15);
    Graph g;
    Var x = g.constant(rnd(rng, {2, 4, 6, 8}));
    bool first = true;
    for (const DownKind kind : {DownKind::AdaNCAS, DownKind::AdaNPCAS, DownKind::AdaAxialNPCAS}) {
        Downsampler down(reg, std::string("down.") + down_kind_name(kind), kind, 4, 6, 8);
        if (inject && first) down.gate()->value.set(2, 1e-4);
        first = false;
        if (!bit_equal(down(x).val(), down.attention_path(x).val()))
            return fail(detail, std::string("fresh ") + down_kind_name(kind) +
                                    " is not its ungated core");
    }
    Var xu = g.constant(rnd(rng, {1, 4, 4, 6}));
    for (const UpKind kind : {UpKind::AdaNRSU, UpKind::DAdaNRSU}) {
        AdaRmConfig rc = small_rm(true);
        rc.channels = 16;
        rc.n_sq = 4;
        Upsampler up(reg, std::string("up.") + up_kind_name(kind), kind, 4, rc);
        if (!bit_equal(up(xu).val(), nn::standardize(bilinear_upsample2x(xu)).val()))
            return fail(detail, std::string("fresh ") + up_kind_name(kind) +
                                    " is not the standardized bilinear base");
    }
    return true;
}

bool resample_shapes(std::uint64_t seed, bool inject, std::string* detail) {
    ParamRegistry reg(seed, Dtype::F64);
    Rng rng(seed + 17);
    Graph g;
    Var x = g.constant(rnd(rng, {2, 4, 8, 8}));
    for (const DownKind kind :
         {DownKind::MaxPool, DownKind::Stride, DownKind::MaxPoolStride, DownKind::CAS,
          DownKind::NCAS, DownKind::AdaNCAS, DownKind::AdaNPCAS, DownKind::AdaAxialNPCAS}) {
        Downsampler down(reg, std::string("d.") + down_kind_name(kind), kind, 4, 8, 8);
        const Shape want{2, 4, 4, 4};
        if (down(x).shape() != want)
            return fail(detail, std::string(down_kind_name(kind)) + " output " +
                                    shape_str(down(x).shape()));
    }
    DownStack stack(reg, "stack", DownKind::MaxPool, 4, 8, 8, 2);
    const Shape want_stack{2, 4, 2, 2};
    if (stack(x).shape() != want_stack)
        return fail(detail, "two-step stack output " + shape_str(stack(x).shape()));
    Var xu = g.constant(rnd(rng, {1, 4, 4, 6}));
    for (const UpKind kind :
         {UpKind::BIU, UpKind::RCU, UpKind::NRCU, UpKind::AdaNRSU, UpKind::DAdaNRSU}) {
        AdaRmConfig rc = small_rm(true);
        rc.channels = 16;
        rc.n_sq = 4;
        Upsampler up(reg, std::string("u.") + up_kind_name(kind), kind, 4, rc);
        const Shape want{1, 4, inject ? 9 : 8, 12};
        if (up(xu).shape() != want)
            return fail(detail, std::string(up_kind_name(kind)) + " output " +
                                    shape_str(up(xu).shape()));
    }
    return true;
}

bool adaie_equals_noie(std::uint64_t seed, bool inject, std::string* detail) {
    NetConfig ada = tiny_config();
    NetConfig noie = tiny_config();
    noie.ie = IeMode::NoIE;
    ParamRegistry ra(seed, Dtype::F64), rn(seed, Dtype::F64);
    DecoderNet na(ra, ada), nn_(rn, noie);
    if (inject) na.ie_gate(3, 1)->value.set(4, 1e-5);
    Rng rng(seed + 19);
    Tensor image = rnd(rng, {1, 3, 32, 32});
    Graph ga, gn;
    std::vector<Var> da = na.decode(na.encode(ga.constant(image)));
    std::vector<Var> dn = nn_.decode(nn_.encode(gn.constant(image)));
    for (std::size_t i = 0; i < da.size(); ++i)
        if (!bit_equal(da[i].val(), dn[i].val()))
            return fail(detail, "fresh gated exchange differs from no-exchange at state " +
                                    std::to_string(i));
    return true;
}

bool plainie_equals_unit_gates(std::uint64_t seed, bool inject, std::string* detail) {
    NetConfig ada = tiny_config();
    NetConfig plain = tiny_config();
    plain.ie = IeMode::PlainIE;
    ParamRegistry ra(seed, Dtype::F64), rp(seed, Dtype::F64);
    DecoderNet na(ra, ada), np(rp, plain);
    for (int k = 0; k < 4; ++k)
        for (int i = 0; i < k; ++i) {
            const ParamPtr& gate = na.ie_gate(k, i);
            for (std::int64_t e = 0; e < gate->value.numel(); ++e) gate->value.set(e, 1.0);
        }
    if (inject) na.ie_gate(2, 0)->value.set(0, 0.5);
    Rng rng(seed + 21);
    Tensor image = rnd(rng, {1, 3, 32, 32});
    Graph ga, gp;
    std::vector<Var> da = na.decode(na.encode(ga.constant(image)));
    std::vector<Var> dp = np.decode(np.encode(gp.constant(image)));
    for (std::size_t i = 0; i < da.size(); ++i)
        if (!bit_equal(da[i].val(), dp[i].val()))
            return fail(detail, "unit gates do not reproduce plain exchange at state " +
                                    std::to_string(i));
    return true;
}

bool net_stride_contracts(std::uint64_t seed, bool inject, std::string* detail) {
    ParamRegistry reg(seed, Dtype::F64);
    DepthModel model(reg, tiny_config());
    Rng rng(seed + 23);
    Graph g;
    Var image = g.constant(rnd(rng, {1, 3, 32, 32}));
    FeaturePyramid pyr = model.net().encode(image);
    for (int s = 0; s < 5; ++s) {
        const auto& level = pyr.levels[static_cast<std::size_t>(s)];
        if (level.stride != (1 << (s + 1)))
            return fail(detail, "stage " + std::to_string(s) + " stride " +
                                    std::to_string(level.stride));
        const Shape want{1, tiny_config().enc_channels[static_cast<std::size_t>(s)], 32 >> (s + 1),
                         32 >> (s + 1)};
        if (level.feature.shape() != want)
            return fail(detail, "stage " + std::to_string(s) + " feature " +
                                    shape_str(level.feature.shape()));
    }
    std::vector<Var> disps = model.disparities(image, 3);
    for (int k = 0; k < 3; ++k) {
        const Shape want{1, 1, 32 >> k, (inject && k == 1) ? 17 : 32 >> k};
        if (disps[static_cast<std::size_t>(k)].shape() != want)
            return fail(detail, "scale " + std::to_string(k) + " disparity " +
                                    shape_str(disps[static_cast<std::size_t>(k)].shape()));
    }
    return true;
}

bool disp_output_range(std::uint64_t seed, bool inject, std::string* detail) {
    for (const bool attention : {true, false}) {
        ParamRegistry reg(seed, Dtype::F64);
        Rng rng(seed + 25);
        DispConfig dc;
        dc.c_in = 6;
        dc.height = 8;
        dc.width = 8;
        dc.c_embed = 6;
        dc.heads = 2;
        dc.h_sub = 4;
        dc.w_sub = 4;
        dc.attention = attention;
        DispHead head(reg, "head", dc);
        gradcheck::randomize_params(reg, rng, -1.0, 1.0);
        Graph g;
        Tensor y = head(g.constant(rnd(rng, {2, 6, 8, 8}))).val();
        if (inject && attention) y.set(0, 1.5);
        for (std::int64_t i = 0; i < y.numel(); ++i)
            if (!(y.get(i) > 0.0 && y.get(i) < 1.0))
                return fail(detail, "disparity " + std::to_string(y.get(i)) + " leaves (0,1)");
    }
    return true;
}

bool disp_depth_mapping(std::uint64_t seed, bool inject, std::string* detail) {
    (void)seed;
    const int n = 33;
    Tensor grid = Tensor::zeros({n}, Dtype::F64);
    for (int i = 0; i < n; ++i) grid.set(i, static_cast<double>(i) / (n - 1));
    Tensor depth = disp_to_depth(grid);
    if (inject) depth.set(0, depth.get(0) * 1.0001);
    Graph g;
    Tensor depth_var = disp_to_depth(g.constant(grid)).val();
    if (!inject && !bit_equal(depth, depth_var))
        return fail(detail, "graph and tensor depth mappings disagree");
    if (std::abs(depth.get(0) - 100.0) > 1e-12)
        return fail(detail, "depth at zero disparity is " + std::to_string(depth.get(0)));
    if (std::abs(depth.get(n - 1) - 1.0 / 10.01) > 1e-12)
        return fail(detail, "depth at unit disparity is " + std::to_string(depth.get(n - 1)));
    for (int i = 0; i + 1 < n; ++i)
        if (!(depth.get(i) > depth.get(i + 1)))
            return fail(detail, "depth is not strictly decreasing");
    for (const double bad : {-1e-9, 1.0 + 1e-9}) {
        Tensor t = Tensor::scalar(bad, Dtype::F64);
        try {
            (void)disp_to_depth(t);
            return fail(detail, "out-of-range disparity was accepted");
        } catch (const DomainError&) {
        }
    }
    return true;
}

Tensor uniform_positive(Rng& rng, Shape shape, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape), Dtype::F64);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
    return t;
}

bool ada_dominance(std::uint64_t seed, bool inject, std::string* detail) {
    Rng rng(seed);
    const Tensor mask = Tensor::ones({60}, Dtype::F64);
    for (int trial = 0; trial < 40; ++trial) {
        Tensor pred = uniform_positive(rng, {60}, 0.3, 30.0);
        Tensor gt = uniform_positive(rng, {60}, 0.5, 50.0);
        const ScaleAlignResult ada = ada_search_scale(pred, gt, mask, 80.0);
        auto absrel_at = [&](double zeta) {
            const double s = scale_factor(pred, gt, mask, zeta);
            Tensor scaled = Tensor::zeros(pred.shape(), Dtype::F64);
            for (std::int64_t i = 0; i < pred.numel(); ++i) scaled.set(i, s * pred.get(i));
            return compute_metrics(scaled, gt, mask, 80.0).abs_rel;
        };
        if (ada.abs_rel_at_zeta > absrel_at(1.0) || ada.abs_rel_at_zeta > absrel_at(0.0))
            return fail(detail, "grid search lost to an endpoint on trial " + std::to_string(trial));
    }
    // Crafted pair where mean alignment strictly beats median alignment:
    // forty pixels at scale 2 set the median, twenty at scale 1/2 drag the
    // mean to the compromise that scores better. The search must match it.
    Tensor pred = Tensor::zeros({60}, Dtype::F64);
    Tensor gt = Tensor::full({60}, 2.0, Dtype::F64);
    for (std::int64_t i = 0; i < 60; ++i) pred.set(i, i < 40 ? 1.0 : 4.0);
    const ScaleAlignResult ada = ada_search_scale(pred, gt, mask, 80.0);
    const double s_med = scale_factor(pred, gt, mask, 1.0);
    Tensor scaled = Tensor::zeros({60}, Dtype::F64);
    for (std::int64_t i = 0; i < 60; ++i) scaled.set(i, s_med * pred.get(i));
    const double med = compute_metrics(scaled, gt, mask, 80.0).abs_rel;
    if (inject) {
        if (!(med <= ada.abs_rel_at_zeta)) return fail(detail, "median lost to the grid search");
        return true;
    }
    if (!(ada.abs_rel_at_zeta <= med)) return fail(detail, "grid search lost to median alignment");
    return true;
}

bool exact_rescale(std::uint64_t seed, bool inject, std::string* detail) {
    Rng rng(seed);
    Tensor pred = uniform_positive(rng, {48}, 0.5, 20.0);
    Tensor gt = uniform_positive(rng, {48}, 1.0, 60.0);
    const Tensor mask = Tensor::ones({48}, Dtype::F64);
    const double factor = inject ? 3.0 : 2.0;
    Tensor pred2 = Tensor::zeros({48}, Dtype::F64);
    for (std::int64_t i = 0; i < 48; ++i) pred2.set(i, factor * pred.get(i));
    for (const double zeta : {0.0, 0.5, 1.0}) {
        auto aligned = [&](const Tensor& p) {
            const double s = scale_factor(p, gt, mask, zeta);
            Tensor scaled = Tensor::zeros(p.shape(), Dtype::F64);
            for (std::int64_t i = 0; i < p.numel(); ++i) scaled.set(i, s * p.get(i));
            return compute_metrics(scaled, gt, mask, 80.0);
        };
        const DepthMetrics a = aligned(pred);
        const DepthMetrics b = aligned(pred2);
        if (a.abs_rel != b.abs_rel || a.sq_rel != b.sq_rel || a.rmse != b.rmse ||
            a.rmse_log != b.rmse_log || a.delta1 != b.delta1 || a.delta2 != b.delta2 ||
            a.delta3 != b.delta3)
            return fail(detail, "power-of-two rescale changed aligned metrics at zeta " +
                                    std::to_string(zeta));
    }
    return true;
}

bool identity_zero(std::uint64_t seed, bool inject, std::string* detail) {
    Rng rng(seed);
    Tensor gt = uniform_positive(rng, {2, 5, 7}, 0.5, 70.0);
    Tensor pred = gt;
    if (inject) {
        pred = Tensor::zeros(gt.shape(), Dtype::F64);
        for (std::int64_t i = 0; i < gt.numel(); ++i) pred.set(i, 1.01 * gt.get(i));
    }
    const DepthMetrics m = compute_metrics(pred, gt, Tensor::ones(gt.shape(), Dtype::F64), 80.0);
    if (m.abs_rel != 0.0 || m.sq_rel != 0.0 || m.rmse != 0.0 || m.rmse_log != 0.0)
        return fail(detail, "identical maps produced nonzero error");
    if (m.delta1 != 1.0 || m.delta2 != 1.0 || m.delta3 != 1.0)
        return fail(detail, "identical maps produced imperfect inlier ratios");
    return true;
}

bool io_roundtrip(std::uint64_t seed, bool inject, std::string* detail) {
    Rng rng(seed);
    const std::vector<Shape> shapes{{}, {5}, {2, 3}, {2, 3, 4}, {1, 2, 3, 4}};
    for (const Dtype dt : {Dtype::F32, Dtype::F64})
        for (const Shape& s : shapes) {
            const Tensor t = rnd(rng, s, dt);
            std::vector<std::uint8_t> bytes = encode_tensor(t);
            if (inject) bytes.back() ^= 0x40;
            if (!bit_equal(decode_tensor(bytes.data(), bytes.size()), t))
                return fail(detail, "in-memory record round trip is not bit-exact");
        }
    const Tensor t = rnd(rng, {3, 4}, Dtype::F64);
    const auto path = temp_file(seed, "roundtrip");
    write_tensor(path.string(), t);
    const Tensor back = read_tensor(path.string());
    std::filesystem::remove(path);
    if (!bit_equal(back, t)) return fail(detail, "file round trip is not bit-exact");
    return true;
}

bool scene_determinism(std::uint64_t seed, bool inject, std::string* detail) {
    SceneSpec spec;
    spec.seed = seed ^ 0xABCDEFull;
    spec.height = 24;
    spec.width = 32;
    spec.objects = 3;
    spec.near = 1.0;
    spec.far = 50.0;
    const Scene a = synth_scene(spec);
    SceneSpec spec2 = spec;
    if (inject) spec2.far += 1e-3;
    const Scene b = synth_scene(spec2);
    if (!bit_equal(a.image, b.image) || !bit_equal(a.depth, b.depth))
        return fail(detail, "identical specs rendered different frames");
    for (std::int64_t i = 0; i < a.depth.numel(); ++i)
        if (a.depth.get(i) < spec.near || a.depth.get(i) > spec.far)
            return fail(detail, "depth " + std::to_string(a.depth.get(i)) + " leaves the range");
    SceneSpec bare = spec;
    bare.objects = 0;
    const Scene plane = synth_scene(bare);
    const double f = kSceneFocalFactor * static_cast<double>(std::max(bare.height, bare.width));
    for (std::int64_t y = 0; y < bare.height; ++y)
        for (std::int64_t x = 0; x < bare.width; ++x) {
            const double dy =
                (static_cast<double>(y) + 0.5 - static_cast<double>(bare.height) / 2) / f;
            const double want =
                dy > 0 ? std::clamp(kSceneGroundY / dy, bare.near, bare.far) : bare.far;
            const double got = plane.depth.get(y * bare.width + x);
            if (got != static_cast<float>(want))
                return fail(detail, "plane depth differs from the closed form at pixel (" +
                                        std::to_string(y) + ", " + std::to_string(x) + ")");
        }
    return true;
}

bool checkpoint_roundtrip(std::uint64_t seed, bool inject, std::string* detail) {
    auto build = [](std::uint64_t s) {
        auto reg = std::make_unique<ParamRegistry>(s, Dtype::F32);
        reg->create("w1", {3, 4}, Init::gaussian(1.0));
        reg->create("b1", {4}, Init::zero());
        reg->create("deep.w2", {2, 2, 3}, Init::uniform_fan(12));
        return reg;
    };
    auto ra = build(seed);
    const auto path = temp_file(seed, "ckpt");
    save_checkpoint(path.string(), *ra);
    auto rb = build(seed + 1);
    bool mismatch_before = false;
    for (std::size_t i = 0; i < ra->params().size(); ++i)
        if (!bit_equal(ra->params()[i]->value, rb->params()[i]->value)) mismatch_before = true;
    if (!mismatch_before) {
        std::filesystem::remove(path);
        return fail(detail, "differently seeded registries started identical");
    }
    if (!inject) load_checkpoint(path.string(), *rb);
    for (std::size_t i = 0; i < ra->params().size(); ++i)
        if (!bit_equal(ra->params()[i]->value, rb->params()[i]->value)) {
            std::filesystem::remove(path);
            return fail(detail, "restored values differ from the saved ones");
        }
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    std::filesystem::resize_file(path, size - 5, ec);
    bool threw = false;
    try {
        load_checkpoint(path.string(), *rb);
    } catch (const TruncatedFile&) {
        threw = true;
    }
    std::filesystem::remove(path);
    if (!threw) return fail(detail, "truncated checkpoint was accepted");
    return true;
}

bool config_errors(std::uint64_t seed, bool inject, std::string* detail) {
    const auto path = temp_file(seed, "config");
    auto expect_error = [&](const std::string& body, const std::string& label) {
        std::ofstream(path) << body;
        try {
            (void)load_overfit_config(path.string());
        } catch (const ConfigError&) {
            return true;
        }
        if (detail != nullptr) *detail = label + " was accepted";
        return false;
    };
    bool ok = expect_error("{\"bogus_field\": 1}", "an unknown field") &&
              expect_error("{\"steps\": -5}", "a negative step count") &&
              expect_error("{\"down\": \"Bogus\"}", "an unknown downsampler") &&
              expect_error("{\"height\": 33}", "a non-divisible height") &&
              expect_error("not json at all", "malformed JSON");
    if (ok) {
        std::ofstream(path) << (inject ? "{\"steps\": []}" : "{\"steps\": 3, \"lr\": 0.01}");
        try {
            const OverfitConfig cfg = load_overfit_config(path.string());
            ok = cfg.steps == 3 && cfg.lr == 0.01;
            if (!ok && detail != nullptr) *detail = "parsed values differ from the file";
        } catch (const ConfigError& e) {
            ok = false;
            if (detail != nullptr) *detail = std::string("valid config rejected: ") + e.what();
        }
    }
    std::filesystem::remove(path);
    return ok;
}

bool overfit_determinism(std::uint64_t seed, bool inject, std::string* detail) {
    OverfitConfig cfg;
    cfg.net = tiny_config();
    cfg.seed = seed;
    cfg.steps = 1;
    cfg.frames = 1;
    cfg.objects = 2;
    cfg.log_every = 1;
    const OverfitReport a = overfit_run(cfg, "");
    if (inject) cfg.seed = seed + 1;
    const OverfitReport b = overfit_run(cfg, "");
    if (a.rows.size() != b.rows.size()) return fail(detail, "row counts differ");
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        if (a.rows[i].loss != b.rows[i].loss)
            return fail(detail, "loss diverged at logged row " + std::to_string(i));
        for (std::size_t s = 0; s < 4; ++s)
            if (a.rows[i].metrics[s].abs_rel != b.rows[i].metrics[s].abs_rel)
                return fail(detail, "metrics diverged at logged row " + std::to_string(i));
    }
    return true;
}

}  // namespace

const std::vector<InvariantUnit>& invariant_units() {
    static const std::vector<InvariantUnit> units = [] {
        std::vector<InvariantUnit> out;
        auto unit = [&](std::string name, std::string module,
                        bool (*fn)(std::uint64_t, bool, std::string*)) {
            out.push_back({std::move(name), std::move(module), fn});
        };
        unit("core.rng_determinism", "core", &rng_determinism);
        unit("core.dtype_parity", "core", &dtype_parity);
        unit("nn.softmax_rows", "nn", &softmax_rows);
        unit("nn.mha_single_token", "nn", &mha_single_token);
        unit("nn.mha_zero_tail_identity", "nn", &mha_zero_tail);
        unit("nn.layout_roundtrip", "nn", &layout_roundtrip);
        unit("nn.token_map_shapes", "nn", &token_map_shapes);
        unit("adarm.identity_at_init", "adarm", &adarm_identity);
        unit("adarm.gates_learn", "adarm", &adarm_gates_learn);
        unit("adarm.recomposition", "adarm", &adarm_recomposition);
        unit("resample.fold_unfold_bijection", "resample", &fold_unfold_bijection);
        unit("resample.ada_matches_core_at_init", "resample", &ada_matches_core);
        unit("resample.shape_contracts", "resample", &resample_shapes);
        unit("net.adaie_equals_noie_at_init", "net", &adaie_equals_noie);
        unit("net.plainie_equals_unit_gates", "net", &plainie_equals_unit_gates);
        unit("net.stride_contracts", "net", &net_stride_contracts);
        unit("disp.output_range", "disp", &disp_output_range);
        unit("disp.depth_mapping", "disp", &disp_depth_mapping);
        unit("eval.ada_dominance", "eval", &ada_dominance);
        unit("eval.exact_rescale", "eval", &exact_rescale);
        unit("eval.identity_zero", "eval", &identity_zero);
        unit("io.tensor_roundtrip", "io", &io_roundtrip);
        unit("io.scene_determinism", "io", &scene_determinism);
        unit("io.checkpoint_roundtrip", "io", &checkpoint_roundtrip);
        unit("io.config_errors", "io", &config_errors);
        unit("io.overfit_determinism", "io", &overfit_determinism);
        return out;
    }();
    return units;
}

}  // namespace depthkit::invariants
