#include "depthkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "depthkit/adarm.hpp"
#include "depthkit/disparity.hpp"
#include "depthkit/resample.hpp"
#include "depthkit/train.hpp"

namespace depthkit::gradcheck {
namespace {

using BuildFn = std::function<Var(Graph&)>;
using BodyFn = std::function<std::vector<Var>(Graph&)>;

double eval_scalar(ParamRegistry& reg, const BuildFn& build) {
    (void)reg;
    Graph g;
    return build(g).val().get(0);
}

/// Fixed-probe scalarization: loss = sum_k sum(y_k * r_k). The probes are
/// drawn once so every rebuild scores the same functional.
BuildFn probed(Rng& rng, BodyFn body) {
    std::vector<Tensor> probes;
    {
        Graph g;
        for (Var y : body(g)) probes.push_back(rng.uniform_tensor(y.shape(), -1.0, 1.0, Dtype::F64));
    }
    return [body = std::move(body), probes = std::move(probes)](Graph& g) {
        std::vector<Var> ys = body(g);
        Var loss;
        for (std::size_t k = 0; k < ys.size(); ++k) {
            Var term = reduce_sum_all(mul(ys[k], g.constant(probes[k])));
            loss = k == 0 ? term : add(loss, term);
        }
        return loss;
    };
}

ParamPtr input(ParamRegistry& reg, const std::string& name, Shape shape, Rng& rng, double lo = -1.0,
               double hi = 1.0) {
    ParamPtr p = reg.create(name, std::move(shape), Init::zero());
    for (std::int64_t i = 0; i < p->value.numel(); ++i) p->value.set(i, rng.uniform(lo, hi));
    return p;
}

/// Values bounded away from zero on both sides, for |x|-style kinks.
ParamPtr input_signed(ParamRegistry& reg, const std::string& name, Shape shape, Rng& rng) {
    ParamPtr p = reg.create(name, std::move(shape), Init::zero());
    for (std::int64_t i = 0; i < p->value.numel(); ++i) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        p->value.set(i, sign * (0.2 + rng.uniform()));
    }
    return p;
}

/// Pairwise-distinct values with gaps far above the FD step, for argmax ops.
ParamPtr input_distinct(ParamRegistry& reg, const std::string& name, Shape shape, Rng& rng) {
    ParamPtr p = reg.create(name, std::move(shape), Init::zero());
    const std::int64_t n = p->value.numel();
    std::vector<double> vals(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
        vals[static_cast<std::size_t>(i)] = 0.013 * static_cast<double>(i - n / 2);
    for (std::int64_t i = n - 1; i > 0; --i) {
        const std::int64_t j = std::min<std::int64_t>(i, static_cast<std::int64_t>(rng.uniform() * static_cast<double>(i + 1)));
        std::swap(vals[static_cast<std::size_t>(i)], vals[static_cast<std::size_t>(j)]);
    }
    for (std::int64_t i = 0; i < n; ++i) p->value.set(i, vals[static_cast<std::size_t>(i)]);
    return p;
}

struct UnitSpec {
    std::string name;
    std::string module;
    std::int64_t budget;  // 0 = exhaustive
    std::function<BuildFn(ParamRegistry&, Rng&)> make;
};

double run_unit(const UnitSpec& spec, std::uint64_t seed, double fault) {
    ParamRegistry reg(seed, Dtype::F64);
    Rng rng(seed * 0x9E3779B97F4A7C15ull + 1);
    BuildFn build = spec.make(reg, rng);
    FdOptions opt;
    opt.budget = spec.budget;
    opt.fault = fault;
    Rng pick(seed + 17);
    return check(reg, build, opt, pick).max_rel_err;
}

AdaRmConfig small_adarm(std::int64_t channels, std::int64_t h, std::int64_t w, bool adaptive) {
    AdaRmConfig rc;
    rc.channels = channels;
    rc.height = h;
    rc.width = w;
    rc.n_sq = 2;
    rc.h_sub = 2;
    rc.w_sub = 2;
    rc.c_embed = 6;
    rc.heads = 2;
    rc.adaptive = adaptive;
    return rc;
}

std::vector<UnitSpec> make_specs() {
    std::vector<UnitSpec> specs;
    auto unit = [&](std::string name, std::string module, std::int64_t budget,
                    std::function<BuildFn(ParamRegistry&, Rng&)> make) {
        specs.push_back({std::move(name), std::move(module), budget, std::move(make)});
    };

    // Primitive elementwise ops, each probed over plain plus broadcast shapes.
    auto binary_unit = [&](const char* name, Var (*op)(Var, Var), bool away_from_zero) {
        unit(name, "core", 0, [op, away_from_zero](ParamRegistry& reg, Rng& rng) {
            ParamPtr a = input(reg, "a", {3, 4}, rng);
            ParamPtr b = away_from_zero ? input_signed(reg, "b", {3, 4}, rng)
                                        : input(reg, "b", {3, 4}, rng);
            ParamPtr c = input(reg, "c", {2, 3, 4}, rng);
            ParamPtr d = away_from_zero ? input_signed(reg, "d", {4}, rng)
                                        : input(reg, "d", {4}, rng);
            ParamPtr e = input(reg, "e", {2, 1, 4}, rng);
            ParamPtr f = away_from_zero ? input_signed(reg, "f", {}, rng)
                                        : input(reg, "f", {}, rng);
            return probed(rng, [=](Graph& g) {
                return std::vector<Var>{op(g.param(a), g.param(b)), op(g.param(c), g.param(d)),
                                        op(g.param(e), g.param(f))};
            });
        });
    };
    binary_unit("core.add", &add, false);
    binary_unit("core.sub", &sub, false);
    binary_unit("core.mul", &mul, false);
    binary_unit("core.div", &div, true);

    unit("core.neg_scale_shift", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr a = input(reg, "a", {2, 5}, rng);
        return probed(rng, [=](Graph& g) {
            Var x = g.param(a);
            return std::vector<Var>{neg(x), scale(x, 1.7), add_scalar(x, -0.3)};
        });
    });

    auto unary_unit = [&](const char* name, Var (*op)(Var), int domain) {
        unit(name, "core", 0, [op, domain](ParamRegistry& reg, Rng& rng) {
            ParamPtr a = domain == 1   ? input(reg, "a", {3, 5}, rng, 0.4, 2.0)
                         : domain == 2 ? input_signed(reg, "a", {3, 5}, rng)
                                       : input(reg, "a", {3, 5}, rng, -2.0, 2.0);
            return probed(rng, [=](Graph& g) { return std::vector<Var>{op(g.param(a))}; });
        });
    };
    unary_unit("core.abs", &abs, 2);
    unary_unit("core.log", &log, 1);
    unary_unit("core.sqrt", &sqrt, 1);
    unary_unit("core.relu", &relu, 2);
    unary_unit("core.elu", &elu, 2);
    unary_unit("core.gelu", &gelu, 0);
    unary_unit("core.sigmoid", &sigmoid, 0);

    unit("core.softmax", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr a = input(reg, "a", {2, 3, 5}, rng, -2.0, 2.0);
        return probed(rng, [=](Graph& g) {
            Var x = g.param(a);
            return std::vector<Var>{softmax(x, 0), softmax(x, 1), softmax(x, 2)};
        });
    });

    unit("core.reduce", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr a = input(reg, "a", {2, 3, 2, 2}, rng);
        return probed(rng, [=](Graph& g) {
            Var x = g.param(a);
            return std::vector<Var>{reduce_sum(x, {1, 3}, true), reduce_mean(x, {0, 2}, false),
                                    reduce_sum_all(x), reduce_mean_all(x)};
        });
    });

    unit("core.reshape_transpose", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr a = input(reg, "a", {2, 3, 4}, rng);
        return probed(rng, [=](Graph& g) {
            Var x = g.param(a);
            return std::vector<Var>{reshape(x, {6, 4}), transpose(x, {2, 0, 1}),
                                    transpose(reshape(x, {2, 12}), {1, 0})};
        });
    });

    unit("core.concat_slice_split", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr a = input(reg, "a", {2, 3, 4}, rng);
        ParamPtr b = input(reg, "b", {2, 2, 4}, rng);
        return probed(rng, [=](Graph& g) {
            Var cat = concat({g.param(a), g.param(b)}, 1);
            std::vector<Var> parts = split(cat, 1, {2, 1, 2});
            std::vector<Var> ys{cat, slice(cat, 2, 1, 2), slice(cat, 0, 1, 1)};
            ys.insert(ys.end(), parts.begin(), parts.end());
            return ys;
        });
    });

    unit("core.matmul", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr a = input(reg, "a", {3, 4}, rng);
        ParamPtr b = input(reg, "b", {4, 5}, rng);
        ParamPtr c = input(reg, "c", {2, 3, 4}, rng);
        ParamPtr d = input(reg, "d", {2, 4, 5}, rng);
        return probed(rng, [=](Graph& g) {
            return std::vector<Var>{matmul(g.param(a), g.param(b)),
                                    matmul(g.param(c), g.param(d))};
        });
    });

    unit("core.conv2d", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr x = input(reg, "x", {2, 4, 6, 6}, rng);
        ParamPtr w = input(reg, "w", {5, 4, 3, 3}, rng);
        ParamPtr b = input(reg, "b", {5}, rng);
        ParamPtr wg = input(reg, "wg", {6, 2, 3, 3}, rng);
        return probed(rng, [=](Graph& g) {
            Conv2dAttrs strided{2, 2, 1, 1, 1};
            Conv2dAttrs grouped{1, 1, 1, 1, 2};
            return std::vector<Var>{conv2d(g.param(x), g.param(w), g.param(b), strided),
                                    conv2d(g.param(x), g.param(wg), std::nullopt, grouped)};
        });
    });

    unit("core.conv1d", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr x = input(reg, "x", {2, 3, 8}, rng);
        ParamPtr w = input(reg, "w", {4, 3, 3}, rng);
        ParamPtr b = input(reg, "b", {4}, rng);
        return probed(rng, [=](Graph& g) {
            return std::vector<Var>{conv1d(g.param(x), g.param(w), g.param(b), 1, 1),
                                    conv1d(g.param(x), g.param(w), std::nullopt, 2, 0)};
        });
    });

    unit("core.conv_transpose2d", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr x = input(reg, "x", {1, 4, 3, 4}, rng);
        ParamPtr w = input(reg, "w", {4, 3, 2, 2}, rng);
        ParamPtr b = input(reg, "b", {3}, rng);
        return probed(rng, [=](Graph& g) {
            return std::vector<Var>{conv_transpose2d(g.param(x), g.param(w), g.param(b), 2, 2),
                                    conv_transpose2d(g.param(x), g.param(w), std::nullopt, 3, 2)};
        });
    });

    unit("core.max_pool2d", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr x = input_distinct(reg, "x", {1, 3, 6, 8}, rng);
        return probed(rng, [=](Graph& g) {
            return std::vector<Var>{max_pool2d(g.param(x), 2, 2, 2, 2),
                                    max_pool2d(g.param(x), 3, 3, 2, 2)};
        });
    });

    unit("core.bilinear_upsample2x", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr x = input(reg, "x", {1, 3, 4, 6}, rng);
        return probed(rng, [=](Graph& g) { return std::vector<Var>{bilinear_upsample2x(g.param(x))}; });
    });

    unit("core.pixel_shuffle", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr a = input(reg, "a", {1, 8, 3, 4}, rng);
        ParamPtr b = input(reg, "b", {1, 2, 6, 8}, rng);
        return probed(rng, [=](Graph& g) {
            return std::vector<Var>{pixel_shuffle(g.param(a)), pixel_unshuffle(g.param(b))};
        });
    });

    unit("core.axial_fold", "core", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr a = input(reg, "a", {1, 3, 4, 6}, rng);
        ParamPtr b = input(reg, "b", {1, 4, 3, 5}, rng);
        return probed(rng, [=](Graph& g) {
            return std::vector<Var>{axial_fold(g.param(a), SpatialAxis::Height, 2),
                                    axial_fold(g.param(a), SpatialAxis::Width, 2),
                                    axial_unfold(g.param(b), SpatialAxis::Height, 2),
                                    axial_unfold(g.param(b), SpatialAxis::Width, 2)};
        });
    });

    // nn layers.
    unit("nn.linear", "nn", 0, [](ParamRegistry& reg, Rng& rng) {
        nn::Linear lin(reg, "lin", 5, 4);
        ParamPtr x2 = input(reg, "x2", {3, 5}, rng);
        ParamPtr x3 = input(reg, "x3", {2, 3, 5}, rng);
        randomize_params(reg, rng);
        return probed(rng, [=](Graph& g) {
            return std::vector<Var>{lin(g.param(x2)), lin(g.param(x3))};
        });
    });

    unit("nn.standardize", "nn", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr x = input(reg, "x", {2, 3, 4, 5}, rng);
        ParamPtr t = input(reg, "t", {3, 7}, rng);
        return probed(rng, [=](Graph& g) {
            return std::vector<Var>{nn::standardize(g.param(x)), nn::standardize(g.param(t))};
        });
    });

    unit("nn.token_embed", "nn", 0, [](ParamRegistry& reg, Rng& rng) {
        nn::TokenEmbed emb(reg, "emb", 3, 6, 2, 3);
        ParamPtr x = input(reg, "x", {2, 3, 4, 6}, rng);
        randomize_params(reg, rng);
        return probed(rng, [=](Graph& g) { return std::vector<Var>{emb(g.param(x))}; });
    });

    unit("nn.mha", "nn", 0, [](ParamRegistry& reg, Rng& rng) {
        nn::MhaBlock mha(reg, "mha", 8, 2);
        ParamPtr x = input(reg, "x", {2, 5, 8}, rng);
        randomize_params(reg, rng);
        return probed(rng, [=](Graph& g) { return std::vector<Var>{mha(g.param(x))}; });
    });

    unit("nn.token_to_map", "nn", 0, [](ParamRegistry& reg, Rng& rng) {
        nn::TokenToMap to_map(reg, "map", 6, 4, 2, 3);
        ParamPtr t = input(reg, "t", {2, 6, 6}, rng);
        randomize_params(reg, rng);
        return probed(rng, [=](Graph& g) { return std::vector<Var>{to_map(g.param(t), 2, 3)}; });
    });

    unit("nn.attention_stack", "nn", 300, [](ParamRegistry& reg, Rng& rng) {
        nn::TokenEmbed emb(reg, "emb", 4, 6, 2, 2);
        nn::MhaBlock mha(reg, "mha", 6, 2);
        nn::TokenToMap to_map(reg, "map", 6, 4, 2, 2);
        ParamPtr x = input(reg, "x", {1, 4, 4, 6}, rng);
        randomize_params(reg, rng);
        return probed(rng, [=](Graph& g) {
            return std::vector<Var>{to_map(mha(emb(g.param(x))), 2, 3)};
        });
    });

    // Refinement modules.
    for (const bool adaptive : {true, false}) {
        unit(adaptive ? "adarm.AdaRM" : "adarm.RM", "adarm", 400,
             [adaptive](ParamRegistry& reg, Rng& rng) {
                 AdaRm rm(reg, "rm", small_adarm(8, 4, 6, adaptive));
                 ParamPtr x = input(reg, "x", {2, 8, 4, 6}, rng);
                 randomize_params(reg, rng);
                 return probed(rng, [=](Graph& g) { return std::vector<Var>{rm(g.param(x))}; });
             });
    }

    // Downsampler family.
    for (const DownKind kind :
         {DownKind::MaxPool, DownKind::Stride, DownKind::MaxPoolStride, DownKind::CAS,
          DownKind::NCAS, DownKind::AdaNCAS, DownKind::AdaNPCAS, DownKind::AdaAxialNPCAS}) {
        unit(std::string("resample.down.") + down_kind_name(kind), "resample", 400,
             [kind](ParamRegistry& reg, Rng& rng) {
                 Downsampler down(reg, "down", kind, 4, 4, 6);
                 ParamPtr x = input(reg, "x", {2, 4, 4, 6}, rng);
                 randomize_params(reg, rng);
                 return probed(rng, [=](Graph& g) { return std::vector<Var>{down(g.param(x))}; });
             });
    }

    // Upsampler family.
    for (const UpKind kind :
         {UpKind::BIU, UpKind::RCU, UpKind::NRCU, UpKind::AdaNRSU, UpKind::DAdaNRSU}) {
        unit(std::string("resample.up.") + up_kind_name(kind), "resample", 400,
             [kind](ParamRegistry& reg, Rng& rng) {
                 AdaRmConfig rc = small_adarm(16, 4, 6, true);
                 rc.n_sq = 4;
                 Upsampler up(reg, "up", kind, 4, rc);
                 ParamPtr x = input(reg, "x", {1, 4, 4, 6}, rng);
                 randomize_params(reg, rng);
                 return probed(rng, [=](Graph& g) { return std::vector<Var>{up(g.param(x))}; });
             });
    }

    // Disparity heads and the depth mapping.
    for (const bool attention : {true, false}) {
        unit(attention ? "disp.AttDisp" : "disp.Conv2dDisp", "disp", 400,
             [attention](ParamRegistry& reg, Rng& rng) {
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
                 ParamPtr x = input(reg, "x", {1, 6, 8, 8}, rng);
                 randomize_params(reg, rng);
                 return probed(rng, [=](Graph& g) { return std::vector<Var>{head(g.param(x))}; });
             });
    }

    unit("disp.depth_map", "disp", 0, [](ParamRegistry& reg, Rng& rng) {
        ParamPtr x = input(reg, "x", {2, 1, 3, 4}, rng, -2.0, 2.0);
        return probed(rng, [=](Graph& g) {
            Var depth = disp_to_depth(sigmoid(g.param(x)));
            return std::vector<Var>{depth, log(depth)};
        });
    });

    // Decoder network at the tiny 32x32 configuration.
    unit("net.refine_skip", "net", 200, [](ParamRegistry& reg, Rng& rng) {
        DecoderNet net(reg, tiny_config());
        ParamPtr x = input(reg, "x", {1, 3, 32, 32}, rng);
        randomize_params(reg, rng);
        return probed(rng, [=](Graph& g) {
            FeaturePyramid pyr = net.encode(g.param(x));
            return std::vector<Var>{net.refine_skip(pyr, 0, 1), net.refine_skip(pyr, 2, 0)};
        });
    });

    unit("net.decode", "net", 560, [](ParamRegistry& reg, Rng& rng) {
        DecoderNet net(reg, tiny_config());
        ParamPtr x = input(reg, "x", {1, 3, 32, 32}, rng);
        randomize_params(reg, rng);
        return probed(rng, [=](Graph& g) { return net.decode(net.encode(g.param(x))); });
    });

    unit("net.forward", "net", 640, [](ParamRegistry& reg, Rng& rng) {
        DepthModel model(reg, tiny_config());
        ParamPtr x = input(reg, "x", {1, 3, 32, 32}, rng);
        randomize_params(reg, rng);
        return probed(rng, [=](Graph& g) { return model.disparities(g.param(x), 3); });
    });

    return specs;
}

}  // namespace

FdReport check(ParamRegistry& reg, const BuildFn& build, const FdOptions& opt, Rng& pick) {
    Graph g;
    Var loss = build(g);
    Gradients grads = g.backward(loss, reg.params());

    std::vector<std::pair<ParamPtr, std::int64_t>> targets;
    std::int64_t total = 0;
    for (const ParamPtr& p : reg.params()) total += p->value.numel();
    if (opt.budget == 0 || total <= opt.budget) {
        for (const ParamPtr& p : reg.params())
            for (std::int64_t e = 0; e < p->value.numel(); ++e) targets.emplace_back(p, e);
    } else {
        const std::int64_t leaves = static_cast<std::int64_t>(reg.params().size());
        const std::int64_t per_leaf = std::max<std::int64_t>(1, opt.budget / leaves);
        for (const ParamPtr& p : reg.params()) {
            const std::int64_t n = p->value.numel();
            const std::int64_t k = std::min(n, per_leaf);
            for (std::int64_t t = 0; t < k; ++t) {
                const std::int64_t e =
                    std::min(n - 1, static_cast<std::int64_t>(pick.uniform() * static_cast<double>(n)));
                targets.emplace_back(p, e);
            }
        }
    }

    FdReport rep;
    for (const auto& [p, e] : targets) {
        const double orig = p->value.get(e);
        p->value.set(e, orig + opt.step);
        const double fp = eval_scalar(reg, build);
        p->value.set(e, orig - opt.step);
        const double fm = eval_scalar(reg, build);
        p->value.set(e, orig);
        const double fd = (fp - fm) / (2.0 * opt.step);
        const double analytic = grads.of(p->name).get(e) + opt.fault;
        const double rel = std::abs(analytic - fd) / std::max(std::abs(fd), 1.0);
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst = p->name + "[" + std::to_string(e) + "]";
        }
    }
    return rep;
}

void randomize_params(ParamRegistry& reg, Rng& rng, double lo, double hi) {
    for (const ParamPtr& p : reg.params())
        for (std::int64_t i = 0; i < p->value.numel(); ++i) p->value.set(i, rng.uniform(lo, hi));
}

const std::vector<CheckUnit>& check_units() {
    static const std::vector<CheckUnit> units = [] {
        std::vector<CheckUnit> out;
        for (const UnitSpec& spec : make_specs()) {
            CheckUnit u;
            u.name = spec.name;
            u.module = spec.module;
            u.run = [spec](std::uint64_t seed, double fault) { return run_unit(spec, seed, fault); };
            out.push_back(std::move(u));
        }
        return out;
    }();
    return units;
}

const std::vector<std::string>& report_modules() {
    static const std::vector<std::string> modules{"core", "nn",   "adarm", "resample", "net",
                                                 "disp", "eval", "io",    "cli"};
    return modules;
}

}  // namespace depthkit::gradcheck
