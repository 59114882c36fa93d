// Release gate: nine go/no-go checks, one PASS/FAIL line each. Exit code is
// the number of failed checks. Tolerances and budgets are pinned here.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "depthkit/adarm.hpp"
#include "depthkit/decoder_net.hpp"
#include "depthkit/depth_eval.hpp"
#include "depthkit/disparity.hpp"
#include "depthkit/gradcheck.hpp"
#include "depthkit/graph.hpp"
#include "depthkit/io.hpp"
#include "depthkit/nn.hpp"
#include "depthkit/ops.hpp"
#include "depthkit/resample.hpp"
#include "depthkit/tensor.hpp"
#include "depthkit/train.hpp"

namespace {

using namespace depthkit;
using Clock = std::chrono::steady_clock;

constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSec = 600.0;
constexpr std::uint64_t kGradSeeds[] = {11, 31, 71};
constexpr double kSoftmaxRowTol = 1e-6;
constexpr double kEndpointTol = 1e-12;
constexpr double kMetricOracleTol = 1e-12;
constexpr double kProportionalTol = 1e-12;  // non-dyadic factors only
constexpr double kOverfitAbsRel = 0.05;
constexpr int kOverfitStepCap = 2000;
constexpr double kOverfitBudgetSec = 1800.0;

struct Outcome {
    bool pass = true;
    std::string detail;
};

Outcome fail(std::string why) { return {false, std::move(why)}; }

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// ---- criterion 1: analytic gradients match central differences ----

Outcome criterion_gradients() {
    static const char* required[] = {
        "adarm.AdaRM",           "adarm.RM",
        "resample.down.MaxPool", "resample.down.Stride",  "resample.down.MaxPoolStride",
        "resample.down.CAS",     "resample.down.NCAS",    "resample.down.AdaNCAS",
        "resample.down.AdaNPCAS", "resample.down.AdaAxialNPCAS",
        "resample.up.BIU",       "resample.up.RCU",       "resample.up.NRCU",
        "resample.up.AdaNRSU",   "resample.up.DAdaNRSU",
        "disp.AttDisp",          "disp.Conv2dDisp",
        "net.refine_skip",       "net.decode",            "net.forward",
    };
    const auto t0 = Clock::now();
    const auto& units = gradcheck::check_units();
    for (const char* name : required) {
        const bool found = std::any_of(units.begin(), units.end(),
                                       [&](const auto& u) { return u.name == name; });
        if (!found) return fail(std::string("no certification unit named ") + name);
    }
    double worst = 0;
    std::string worst_at;
    for (const auto& u : units)
        for (const std::uint64_t seed : kGradSeeds) {
            const double err = u.run(seed, 0.0);
            if (err > worst) {
                worst = err;
                worst_at = u.name;
            }
            if (err > kGradTol)
                return fail(u.name + " seed " + std::to_string(seed) + " rel err " + fmt(err));
        }
    const double elapsed = seconds_since(t0);
    if (elapsed > kGradBudgetSec)
        return fail("suite took " + fmt(elapsed) + " s, budget " + fmt(kGradBudgetSec));
    return {true, std::to_string(units.size()) + " units x 3 seeds, worst rel err " + fmt(worst) +
                      " (" + worst_at + "), " + fmt(elapsed) + " s"};
}

// ---- criterion 2: zero-init modules are exact identities / cores ----

Outcome criterion_zero_init() {
    {
        ParamRegistry reg(21, Dtype::F64);
        AdaRmConfig rc;
        rc.channels = 8;
        rc.height = 8;
        rc.width = 12;
        rc.n_sq = 2;
        rc.h_sub = 4;
        rc.w_sub = 4;
        rc.c_embed = 8;
        rc.heads = 2;
        AdaRm m(reg, "m", rc);
        Rng rng(22);
        const Tensor xt = rng.uniform_tensor({2, 8, 8, 12}, -1, 1, Dtype::F64);
        Graph g;
        if (!bit_equal(m(g.constant(xt)).val(), xt)) return fail("fresh AdaRM is not the identity");
    }
    {
        NetConfig a = tiny_config(), b = tiny_config();
        a.ie = IeMode::AdaIE;
        b.ie = IeMode::NoIE;
        ParamRegistry ra(33, Dtype::F32), rb(33, Dtype::F32);
        DecoderNet na(ra, a), nb(rb, b);
        Rng rng(34);
        const Tensor img = rng.uniform_tensor({1, 3, 32, 32}, 0, 1, Dtype::F32);
        Graph ga, gb;
        const auto da = na.decode(na.encode(ga.constant(img)));
        const auto db = nb.decode(nb.encode(gb.constant(img)));
        if (da.size() != db.size()) return fail("decode state counts differ");
        for (std::size_t i = 0; i < da.size(); ++i)
            if (!bit_equal(da[i].val(), db[i].val()))
                return fail("AdaIE decode differs from NoIE at state " + std::to_string(i));
    }
    {
        ParamRegistry reg(35, Dtype::F64);
        Rng rng(36);
        const Tensor xt = rng.uniform_tensor({2, 4, 4, 6}, -1, 1, Dtype::F64);
        AdaRmConfig rc;
        rc.channels = 16;
        rc.height = 4;
        rc.width = 6;
        rc.n_sq = 4;
        rc.h_sub = 2;
        rc.w_sub = 2;
        rc.c_embed = 6;
        rc.heads = 2;
        for (const UpKind k : {UpKind::AdaNRSU, UpKind::DAdaNRSU}) {
            Upsampler up(reg, std::string("u.") + up_kind_name(k), k, 4, rc);
            Graph g;
            Var x = g.constant(xt);
            if (!bit_equal(up(x).val(), nn::standardize(bilinear_upsample2x(x)).val()))
                return fail(std::string("fresh ") + up_kind_name(k) +
                            " is not the standardized bilinear upsample");
        }
    }
    {
        ParamRegistry reg(37, Dtype::F64);
        Rng rng(38);
        const Tensor xt = rng.uniform_tensor({2, 8, 8, 12}, -1, 1, Dtype::F64);
        for (const DownKind k : {DownKind::AdaNCAS, DownKind::AdaNPCAS, DownKind::AdaAxialNPCAS}) {
            Downsampler down(reg, std::string("d.") + down_kind_name(k), k, 8, 8, 12);
            Graph g;
            Var x = g.constant(xt);
            if (!bit_equal(down(x).val(), down.attention_path(x).val()))
                return fail(std::string("fresh ") + down_kind_name(k) +
                            " differs from its ungated core");
        }
    }
    return {true, "AdaRM identity, AdaIE==NoIE decode, gated up/down cores, all bit-exact"};
}

// ---- criterion 3: folds and shuffles are lossless permutations ----

std::vector<double> sorted_values(const Tensor& t) {
    std::vector<double> v(static_cast<std::size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i) v[static_cast<std::size_t>(i)] = t.get(i);
    std::sort(v.begin(), v.end());
    return v;
}

Outcome criterion_lossless() {
    Rng rng(5);
    for (int it = 0; it < 100; ++it) {
        const Dtype dt = it % 2 ? Dtype::F64 : Dtype::F32;
        const int factor = 2 + it % 2;
        const SpatialAxis axis = it % 4 < 2 ? SpatialAxis::Height : SpatialAxis::Width;
        const std::int64_t n = rng.uniform_int(1, 2), c = rng.uniform_int(1, 4);
        std::int64_t h = rng.uniform_int(1, 6), w = rng.uniform_int(1, 6);
        (axis == SpatialAxis::Height ? h : w) = factor * rng.uniform_int(1, 5);
        {
            Graph g;
            Var x = g.constant(rng.uniform_tensor({n, c, h, w}, -3, 3, dt));
            Var folded = axial_fold(x, axis, factor);
            if (!bit_equal(axial_unfold(folded, axis, factor).val(), x.val()))
                return fail("axial round trip broke at shape " + shape_str(x.val().shape()));
            if (sorted_values(folded.val()) != sorted_values(x.val()))
                return fail("axial fold changed the value multiset");
        }
        {
            Graph g;
            const std::int64_t c4 = 4 * rng.uniform_int(1, 3);
            Var x = g.constant(rng.uniform_tensor(
                {n, c4, rng.uniform_int(1, 5), rng.uniform_int(1, 5)}, -3, 3, dt));
            Var up = pixel_shuffle(x);
            if (!bit_equal(pixel_unshuffle(up).val(), x.val()))
                return fail("pixel_shuffle round trip broke at " + shape_str(x.val().shape()));
            if (sorted_values(up.val()) != sorted_values(x.val()))
                return fail("pixel_shuffle changed the value multiset");
        }
        {
            Graph g;
            Var x = g.constant(rng.uniform_tensor(
                {n, rng.uniform_int(1, 3), 2 * rng.uniform_int(1, 5), 2 * rng.uniform_int(1, 5)},
                -3, 3, dt));
            Var down = pixel_unshuffle(x);  // non-axial space-to-depth
            if (!bit_equal(pixel_shuffle(down).val(), x.val()))
                return fail("space-to-depth round trip broke at " + shape_str(x.val().shape()));
            if (sorted_values(down.val()) != sorted_values(x.val()))
                return fail("space-to-depth changed the value multiset");
        }
    }
    return {true, "100 random shapes per family, round trips bit-exact, multisets preserved"};
}

// ---- criterion 4: attention normalization ----

Outcome criterion_attention() {
    Rng rng(9);
    for (int it = 0; it < 20; ++it) {
        Shape shape;
        const int rank = 2 + it % 3;
        for (int a = 0; a < rank; ++a) shape.push_back(rng.uniform_int(1, 6));
        const Tensor xt = rng.uniform_tensor(shape, -8, 8, it % 2 ? Dtype::F64 : Dtype::F32);
        for (int axis = 0; axis < rank; ++axis) {
            Graph g;
            const Tensor y = softmax(g.constant(xt), axis).val();
            std::int64_t outer = 1, inner = 1;
            for (int a = 0; a < axis; ++a) outer *= shape[static_cast<std::size_t>(a)];
            for (int a = axis + 1; a < rank; ++a) inner *= shape[static_cast<std::size_t>(a)];
            const std::int64_t extent = shape[static_cast<std::size_t>(axis)];
            for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t i = 0; i < inner; ++i) {
                    double sum = 0;
                    for (std::int64_t k = 0; k < extent; ++k)
                        sum += y.get((o * extent + k) * inner + i);
                    if (std::abs(sum - 1.0) > kSoftmaxRowTol)
                        return fail("softmax row sums to " + fmt(sum) + " at shape " +
                                    shape_str(shape) + " axis " + std::to_string(axis));
                }
        }
    }
    {
        ParamRegistry reg(13, Dtype::F64);
        nn::MhaBlock mha(reg, "m", 8, 2);
        Rng mr(14);
        Graph g;
        Var x = g.constant(mr.uniform_tensor({3, 1, 8}, -1, 1, Dtype::F64));
        nn::MhaTrace trace;
        mha.forward(x, &trace);
        const Tensor& attn = trace.attn.val();
        for (std::int64_t i = 0; i < attn.numel(); ++i)
            if (attn.get(i) != 1.0)
                return fail("single-token attention weight is " + fmt(attn.get(i)));
        Var v = slice(mha.qkv(x), 2, 16, 8);
        if (!bit_equal(trace.head_out.val(), v.val()))
            return fail("single-token head output is not the value path");
    }
    return {true, "row sums within 1e-6 over 20 tensors x all axes; T=1 value path exact"};
}

// ---- criterion 5: disparity-to-depth range ----

Outcome criterion_depth_range(const Tensor& depths, const std::string& label) {
    const double lo = 1.0 / 10.01, hi = 100.0;
    const std::int64_t last = depths.numel() - 1;
    if (std::abs(depths.get(0) - hi) > kEndpointTol)
        return fail(label + ": depth at disparity 0 is " + fmt(depths.get(0)));
    if (std::abs(depths.get(last) - lo) > kEndpointTol)
        return fail(label + ": depth at disparity 1 is " + fmt(depths.get(last)));
    for (std::int64_t i = 0; i <= last; ++i) {
        const double d = depths.get(i);
        if (!(d >= lo && d <= hi)) return fail(label + ": depth " + fmt(d) + " leaves the range");
        if (i > 0 && !(d < depths.get(i - 1)))
            return fail(label + ": not strictly decreasing at index " + std::to_string(i));
    }
    return {true, ""};
}

Outcome criterion_depth() {
    for (const std::int64_t points : {11, 1001}) {
        std::vector<double> grid(static_cast<std::size_t>(points));
        for (std::int64_t i = 0; i < points; ++i)
            grid[static_cast<std::size_t>(i)] = static_cast<double>(i) / (points - 1);
        const Tensor disp = Tensor::from_data({points}, grid);
        Outcome o = criterion_depth_range(disp_to_depth(disp),
                                          std::to_string(points) + "-point tensor grid");
        if (!o.pass) return o;
        Graph g;
        o = criterion_depth_range(disp_to_depth(g.constant(disp)).val(),
                                  std::to_string(points) + "-point graph grid");
        if (!o.pass) return o;
    }
    return {true, "grids stay in [1/10.01, 100], strictly decreasing, endpoints to 1e-12"};
}

// ---- criterion 6: adaptive scale search dominates both endpoints ----

Tensor scaled_by(const Tensor& pred, double s) {
    Tensor out = Tensor::empty(pred.shape(), pred.dtype());
    for (std::int64_t i = 0; i < pred.numel(); ++i) out.set(i, pred.get(i) * s);
    return out;
}

Outcome criterion_scale_alignment() {
    Rng rng(17);
    const double cap = kDefaultCap;
    for (int it = 0; it < 1000; ++it) {
        const std::int64_t m = rng.uniform_int(20, 400);
        const Tensor gt = rng.uniform_tensor({m}, 0.2, 60.0, Dtype::F64);
        const Tensor pred = rng.uniform_tensor({m}, 0.05, 90.0, Dtype::F64);
        const Tensor mask = Tensor::ones({m}, Dtype::F64);
        const ScaleAlignResult ada = ada_search_scale(pred, gt, mask, cap);
        const double med =
            compute_metrics(scaled_by(pred, scale_factor(pred, gt, mask, 1.0)), gt, mask, cap)
                .abs_rel;
        const double mean =
            compute_metrics(scaled_by(pred, scale_factor(pred, gt, mask, 0.0)), gt, mask, cap)
                .abs_rel;
        if (!(ada.abs_rel_at_zeta <= med && ada.abs_rel_at_zeta <= mean))
            return fail("search lost to an endpoint at pair " + std::to_string(it) + ": ada " +
                        fmt(ada.abs_rel_at_zeta) + " median " + fmt(med) + " mean " + fmt(mean));
    }
    for (const double factor : {2.0, 4.0, 0.5, 3.0}) {
        const Tensor gt = rng.uniform_tensor({257}, 0.5, 40.0, Dtype::F64);
        const Tensor pred = scaled_by(gt, factor);
        const Tensor mask = Tensor::ones({257}, Dtype::F64);
        const bool dyadic = factor == 2.0 || factor == 4.0 || factor == 0.5;
        for (int k = 0; k <= 10; ++k) {
            const double s = scale_factor(pred, gt, mask, k / 10.0);
            if (dyadic ? s != 1.0 / factor : std::abs(s * factor - 1.0) > kProportionalTol)
                return fail("proportional pair factor " + fmt(factor) + " zeta " + fmt(k / 10.0) +
                            " gave scale " + fmt(s));
        }
        const ScaleAlignResult ada = ada_search_scale(pred, gt, mask, cap);
        if (dyadic && (ada.scale != 1.0 / factor || ada.abs_rel_at_zeta != 0.0))
            return fail("search on proportional pair factor " + fmt(factor) + " gave scale " +
                        fmt(ada.scale) + " abs_rel " + fmt(ada.abs_rel_at_zeta));
    }
    return {true, "1000 random pairs, zero endpoint violations; proportional scales exact"};
}

// ---- criterion 7: metric protocol equals the per-pixel oracle ----

DepthMetrics naive_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask, double cap) {
    std::vector<double> ps, gs;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        if (mask.get(i) == 0.0) continue;
        double p = pred.get(i), g = gt.get(i);
        if (p < kMinDepth) p = kMinDepth;
        if (p > cap) p = cap;
        if (g < kMinDepth) g = kMinDepth;
        if (g > cap) g = cap;
        ps.push_back(p);
        gs.push_back(g);
    }
    DepthMetrics m;
    const std::size_t n = ps.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double p = ps[i], g = gs[i], d = p - g, ld = std::log(p) - std::log(g);
        m.abs_rel += std::abs(d) / g;
        m.sq_rel += d * d / g;
        m.rmse += d * d;
        m.rmse_log += ld * ld;
        const double r = p > g ? p / g : g / p;
        m.delta1 += r < 1.25 ? 1.0 : 0.0;
        m.delta2 += r < 1.5625 ? 1.0 : 0.0;
        m.delta3 += r < 1.953125 ? 1.0 : 0.0;
    }
    const double inv = 1.0 / static_cast<double>(n);
    m.abs_rel *= inv;
    m.sq_rel *= inv;
    m.rmse = std::sqrt(m.rmse * inv);
    m.rmse_log = std::sqrt(m.rmse_log * inv);
    m.delta1 *= inv;
    m.delta2 *= inv;
    m.delta3 *= inv;
    return m;
}

Outcome criterion_metric_oracle() {
    Rng rng(23);
    for (int it = 0; it < 100; ++it) {
        const std::int64_t h = rng.uniform_int(4, 16), w = rng.uniform_int(4, 16);
        const Tensor pred = rng.uniform_tensor({1, h, w}, 0.02, 120.0, Dtype::F64);
        const Tensor gt = rng.uniform_tensor({1, h, w}, 0.02, 120.0, Dtype::F64);
        Tensor mask = Tensor::zeros({1, h, w}, Dtype::F64);
        for (std::int64_t i = 0; i < mask.numel(); ++i)
            if (rng.uniform() < 0.8) mask.set(i, 1.0);
        mask.set(0, 1.0);
        const double cap = it % 2 ? 50.0 : 80.0;
        const DepthMetrics got = compute_metrics(pred, gt, mask, cap);
        const DepthMetrics want = naive_metrics(pred, gt, mask, cap);
        const double diff = std::max(
            {std::abs(got.abs_rel - want.abs_rel), std::abs(got.sq_rel - want.sq_rel),
             std::abs(got.rmse - want.rmse), std::abs(got.rmse_log - want.rmse_log),
             std::abs(got.delta1 - want.delta1), std::abs(got.delta2 - want.delta2),
             std::abs(got.delta3 - want.delta3)});
        if (diff > kMetricOracleTol)
            return fail("frame " + std::to_string(it) + " disagrees with the oracle by " +
                        fmt(diff));
    }
    return {true, "100 random frames within 1e-12, caps 50/80 and masks exercised"};
}

// ---- criterion 8: desk-scale overfit plus the variant comparison table ----

void variant_table() {
    struct Row {
        std::string axis, name;
        OverfitConfig cfg;
    };
    OverfitConfig base;
    base.net = tiny_config();
    base.frames = 2;
    base.objects = 4;
    base.steps = 150;
    base.log_every = 150;
    std::vector<Row> rows;
    for (const DownKind k :
         {DownKind::AdaNPCAS, DownKind::AdaNCAS, DownKind::NCAS, DownKind::CAS,
          DownKind::MaxPoolStride, DownKind::Stride, DownKind::MaxPool}) {
        Row r{"down", down_kind_name(k), base};
        r.cfg.net.down = k;
        rows.push_back(std::move(r));
    }
    for (const UpKind k :
         {UpKind::AdaNRSU, UpKind::NRCU, UpKind::RCU, UpKind::BIU}) {
        Row r{"up", up_kind_name(k), base};
        r.cfg.net.up = k;
        rows.push_back(std::move(r));
    }
    for (const IeMode m : {IeMode::PlainIE, IeMode::NoIE}) {
        Row r{"ie", ie_mode_name(m), base};
        r.cfg.net.ie = m;
        rows.push_back(std::move(r));
    }
    {
        Row r{"disp", "Conv2dDisp", base};
        r.cfg.net.att_disp = false;
        rows.push_back(std::move(r));
    }

    const auto held = render_frames(base, 1);
    std::cout << "  variant table (held-out frames, " << base.steps << " steps at "
              << base.net.h_in << "x" << base.net.w_in << ", median-aligned):\n";
    std::cout << "    flagship = AdaAxialNPCAS + DAdaNRSU + AdaIE + AttDisp\n";
    const std::string out_root = "/tmp/depthkit_acceptance";
    auto run_one = [&](const std::string& axis, const std::string& name, const OverfitConfig& cfg) {
        const std::string dir = out_root + "/" + axis + "_" + name;
        overfit_run(cfg, dir);
        ParamRegistry reg(cfg.seed, Dtype::F32);
        DepthModel model(reg, cfg.net);
        load_checkpoint(dir + "/model.ckpt", reg);
        Graph g;
        Var depth = disp_to_depth(model.disparities(g.constant(held.first), 1)[0]);
        const DepthMetrics m = eval_strategy(depth.val(), held.second, cfg.far, "median");
        std::cout << "    " << axis << "=" << name << ": abs_rel " << fmt(m.abs_rel) << ", delta1 "
                  << fmt(m.delta1) << "\n";
    };
    try {
        run_one("flagship", "all-adaptive", base);
        for (const Row& r : rows) run_one(r.axis, r.name, r.cfg);
    } catch (const std::exception& e) {
        std::cout << "    (table aborted: " << e.what() << ")\n";
    }
    std::filesystem::remove_all(out_root);
}

Outcome criterion_overfit() {
    OverfitConfig cfg;
    if (cfg.steps > kOverfitStepCap)
        return fail("default config asks for " + std::to_string(cfg.steps) + " steps");
    const auto t0 = Clock::now();
    const OverfitReport rep = overfit_run(cfg, "");
    const double elapsed = seconds_since(t0);
    const double abs_rel = rep.rows.back().metrics[0].abs_rel;  // median alignment
    variant_table();
    if (elapsed > kOverfitBudgetSec)
        return fail("training took " + fmt(elapsed) + " s, budget " + fmt(kOverfitBudgetSec));
    if (!(abs_rel < kOverfitAbsRel))
        return fail("final median-aligned abs_rel " + fmt(abs_rel) + " on the training frames");
    return {true, "abs_rel(median) " + fmt(abs_rel) + " after " + std::to_string(cfg.steps) +
                      " steps in " + fmt(elapsed) + " s"};
}

// ---- criterion 9: tensor file round trip, rejection, replay determinism ----

template <typename Error>
bool rejects(const std::vector<std::uint8_t>& bytes) {
    try {
        decode_tensor(bytes.data(), bytes.size());
    } catch (const Error&) {
        return true;
    } catch (...) {
        return false;
    }
    return false;
}

Outcome criterion_io() {
    Rng rng(29);
    const std::vector<Shape> shapes{{}, {5}, {2, 3}, {2, 1, 4}, {2, 3, 2, 2}};
    for (const Shape& s : shapes)
        for (const Dtype dt : {Dtype::F32, Dtype::F64}) {
            const Tensor t = rng.uniform_tensor(s, -100, 100, dt);
            const auto bytes = encode_tensor(t);
            const Tensor back = decode_tensor(bytes.data(), bytes.size());
            if (back.dtype() != dt || back.shape() != s || !bit_equal(back, t))
                return fail("round trip broke at shape " + shape_str(s));
        }
    const auto good = encode_tensor(Tensor::from_data({2}, std::vector<float>{1.5f, -2.0f}));
    auto corrupt = [&](std::size_t at, std::uint8_t v) {
        auto b = good;
        b[at] = v;
        return b;
    };
    if (!rejects<BadMagic>(corrupt(0, 'X'))) return fail("corrupt magic accepted");
    if (!rejects<UnknownDtype>(corrupt(4, 7))) return fail("unknown dtype accepted");
    if (!rejects<BadMagic>(corrupt(6, 1))) return fail("nonzero reserved byte accepted");
    for (const std::size_t len : {std::size_t{3}, std::size_t{9}, good.size() - 1})
        if (!rejects<TruncatedFile>({good.begin(), good.begin() + static_cast<std::ptrdiff_t>(len)}))
            return fail("truncation to " + std::to_string(len) + " bytes accepted");

    OverfitConfig cfg;
    cfg.net = tiny_config();
    cfg.frames = 2;
    cfg.objects = 3;
    cfg.steps = 6;
    cfg.log_every = 2;
    const OverfitReport a = overfit_run(cfg, "");
    const OverfitReport b = overfit_run(cfg, "");
    if (a.rows.size() != b.rows.size()) return fail("replay logged a different number of rows");
    for (std::size_t i = 0; i < a.rows.size(); ++i)
        if (a.rows[i].loss != b.rows[i].loss)
            return fail("replay loss diverged at row " + std::to_string(i) + ": " +
                        fmt(a.rows[i].loss) + " vs " + fmt(b.rows[i].loss));
    return {true, "10 round trips bit-exact, 5 malformed records rejected, replay curves identical"};
}

}  // namespace

int main() {
    using Runner = std::function<Outcome()>;
    const std::pair<const char*, Runner> criteria[] = {
        {"gradient certification", criterion_gradients},
        {"zero-init identities", criterion_zero_init},
        {"lossless rearrangement", criterion_lossless},
        {"attention normalization", criterion_attention},
        {"depth range contract", criterion_depth},
        {"scale-alignment dominance", criterion_scale_alignment},
        {"metric oracle equivalence", criterion_metric_oracle},
        {"desk-scale overfit", criterion_overfit},
        {"tensor file and replay", criterion_io},
    };
    int failures = 0, id = 0;
    for (const auto& [title, run] : criteria) {
        ++id;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = fail(std::string("unexpected exception: ") + e.what());
        }
        if (!o.pass) ++failures;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << title;
        if (!o.detail.empty()) std::cout << " (" << o.detail << ")";
        std::cout << std::endl;
    }
    std::cout << "acceptance: " << (9 - failures) << "/9 criteria passed" << std::endl;
    return failures;
}
