#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "depthkit/gradcheck.hpp"
#include "depthkit/resample.hpp"

using namespace depthkit;

namespace {

constexpr DownKind kAllDown[]{DownKind::MaxPool,  DownKind::Stride,   DownKind::MaxPoolStride,
                              DownKind::CAS,      DownKind::NCAS,     DownKind::AdaNCAS,
                              DownKind::AdaNPCAS, DownKind::AdaAxialNPCAS};
constexpr UpKind kAllUp[]{UpKind::BIU, UpKind::RCU, UpKind::NRCU, UpKind::AdaNRSU,
                          UpKind::DAdaNRSU};

AdaRmConfig refine_cfg(std::int64_t c4, std::int64_t h, std::int64_t w) {
    AdaRmConfig rc;
    rc.channels = c4;
    rc.height = h;
    rc.width = w;
    rc.n_sq = 4;
    rc.h_sub = 2;
    rc.w_sub = 2;
    rc.c_embed = 6;
    rc.heads = 2;
    return rc;
}

}  // namespace

TEST_CASE("kind names parse back") {
    for (const DownKind k : kAllDown) {
        auto parsed = parse_down_kind(down_kind_name(k));
        REQUIRE(parsed.has_value());
        CHECK(*parsed == k);
    }
    for (const UpKind k : kAllUp) {
        auto parsed = parse_up_kind(up_kind_name(k));
        REQUIRE(parsed.has_value());
        CHECK(*parsed == k);
    }
    CHECK_FALSE(parse_down_kind("Bogus").has_value());
    CHECK_FALSE(parse_up_kind("Bogus").has_value());
}

TEST_CASE("downsamplers halve both extents for every kind") {
    ParamRegistry reg(1, Dtype::F64);
    Rng rng(2);
    Graph g;
    Var x = g.constant(rng.uniform_tensor({2, 4, 6, 8}, -1, 1, Dtype::F64));
    for (const DownKind k : kAllDown) {
        Downsampler down(reg, std::string("d.") + down_kind_name(k), k, 4, 6, 8);
        CHECK(down(x).shape() == Shape{2, 4, 3, 4});
    }
}

TEST_CASE("max-pool kind is exactly max_pool2d") {
    ParamRegistry reg(1, Dtype::F64);
    Rng rng(3);
    Graph g;
    Var x = g.constant(rng.uniform_tensor({1, 3, 4, 4}, -1, 1, Dtype::F64));
    Downsampler down(reg, "d", DownKind::MaxPool, 3, 4, 4);
    CHECK(bit_equal(down(x).val(), max_pool2d(x, 2, 2, 2, 2).val()));
}

TEST_CASE("adaptive downsamplers equal their core at init and the gate opens them") {
    ParamRegistry reg(4, Dtype::F64);
    Rng rng(5);
    const Tensor xt = rng.uniform_tensor({2, 4, 6, 8}, -1, 1, Dtype::F64);
    for (const DownKind k : {DownKind::AdaNCAS, DownKind::AdaNPCAS, DownKind::AdaAxialNPCAS}) {
        Downsampler down(reg, std::string("d.") + down_kind_name(k), k, 4, 6, 8);
        REQUIRE(down.gate() != nullptr);
        CHECK(down.gate()->value.shape() == Shape{4, 3, 4});
        {
            Graph g;
            Var x = g.constant(xt);
            CHECK(bit_equal(down(x).val(), down.attention_path(x).val()));
        }
        down.gate()->value.set(0, 0.75);
        {
            // A graph snapshots params at first use, so reevaluate on a fresh tape.
            Graph g;
            Var x = g.constant(xt);
            CHECK_FALSE(bit_equal(down(x).val(), down.attention_path(x).val()));
        }
    }
    Downsampler plain(reg, "d.plain", DownKind::CAS, 4, 6, 8);
    CHECK(plain.gate() == nullptr);
    Graph g;
    Var x = g.constant(xt);
    CHECK(bit_equal(plain(x).val(), plain.attention_path(x).val()));
}

TEST_CASE("gated downsamplers pin their build extents") {
    ParamRegistry reg(6, Dtype::F64);
    Graph g;
    Var wrong = g.constant(Tensor::zeros({1, 4, 4, 8}, Dtype::F64));
    Downsampler down(reg, "d", DownKind::AdaNPCAS, 4, 6, 8);
    CHECK_THROWS_AS(down(wrong), ShapeMismatch);
}

TEST_CASE("stacks compose independent steps") {
    ParamRegistry reg(7, Dtype::F64);
    Rng rng(8);
    Graph g;
    Var x = g.constant(rng.uniform_tensor({1, 4, 8, 8}, -1, 1, Dtype::F64));

    DownStack id(reg, "s0", DownKind::MaxPool, 4, 8, 8, 0);
    CHECK(id.size() == 0);
    CHECK(bit_equal(id(x).val(), x.val()));

    DownStack two(reg, "s2", DownKind::MaxPool, 4, 8, 8, 2);
    REQUIRE(two.size() == 2);
    Var manual = two.step(1)(two.step(0)(x));
    CHECK(bit_equal(two(x).val(), manual.val()));
    CHECK(two(x).shape() == Shape{1, 4, 2, 2});
}

TEST_CASE("upsamplers double both extents for every kind") {
    ParamRegistry reg(9, Dtype::F64);
    Rng rng(10);
    Graph g;
    Var x = g.constant(rng.uniform_tensor({2, 4, 4, 6}, -1, 1, Dtype::F64));
    for (const UpKind k : kAllUp) {
        Upsampler up(reg, std::string("u.") + up_kind_name(k), k, 4, refine_cfg(16, 4, 6));
        CHECK(up(x).shape() == Shape{2, 4, 8, 12});
    }
}

TEST_CASE("bilinear kind is exactly the primitive") {
    ParamRegistry reg(11, Dtype::F64);
    Rng rng(12);
    Graph g;
    Var x = g.constant(rng.uniform_tensor({1, 3, 5, 4}, -1, 1, Dtype::F64));
    Upsampler up(reg, "u", UpKind::BIU, 3, refine_cfg(12, 5, 4));
    CHECK(bit_equal(up(x).val(), bilinear_upsample2x(x).val()));
}

TEST_CASE("gated upsamplers reduce to the standardized base at init") {
    ParamRegistry reg(13, Dtype::F64);
    Rng rng(14);
    const Tensor xt = rng.uniform_tensor({2, 4, 4, 6}, -1, 1, Dtype::F64);
    for (const UpKind k : {UpKind::AdaNRSU, UpKind::DAdaNRSU}) {
        Upsampler up(reg, std::string("u.") + up_kind_name(k), k, 4, refine_cfg(16, 4, 6));
        REQUIRE(up.gate() != nullptr);
        CHECK(up.gate()->value.shape() == Shape{4, 8, 12});
        {
            Graph g;
            Var x = g.constant(xt);
            CHECK(bit_equal(up(x).val(), nn::standardize(bilinear_upsample2x(x)).val()));
        }
        up.gate()->value.set(5, 0.5);
        {
            // A graph snapshots params at first use, so reevaluate on a fresh tape.
            Graph g;
            Var x = g.constant(xt);
            CHECK_FALSE(bit_equal(up(x).val(), nn::standardize(bilinear_upsample2x(x)).val()));
        }
    }
    Graph g;
    Var x = g.constant(xt);
    Upsampler merged(reg, "u.rcu", UpKind::RCU, 4, refine_cfg(16, 4, 6));
    CHECK(merged.gate() == nullptr);
    CHECK_FALSE(bit_equal(merged(x).val(), bilinear_upsample2x(x).val()));
}

TEST_CASE("finite differences certify one gated pair") {
    ParamRegistry reg(15, Dtype::F64);
    Rng rng(16);
    Downsampler down(reg, "down", DownKind::AdaAxialNPCAS, 4, 8, 8);
    Upsampler up(reg, "up", UpKind::DAdaNRSU, 4, refine_cfg(16, 4, 4));
    gradcheck::randomize_params(reg, rng);
    ParamPtr px = reg.create("x", {1, 4, 8, 8}, Init::gaussian(0.5));
    Rng pick(17);
    gradcheck::FdOptions opt;
    opt.budget = 250;
    auto build = [&](Graph& g) {
        Var y = up(down(g.param(px)));
        Var r = g.constant(Rng(18).uniform_tensor({1, 4, 8, 8}, -1, 1, Dtype::F64));
        return reduce_sum_all(mul(y, r));
    };
    CHECK(gradcheck::check(reg, build, opt, pick).max_rel_err < 1e-4);
}
