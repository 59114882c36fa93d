#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "depthkit/disparity.hpp"
#include "depthkit/gradcheck.hpp"

using namespace depthkit;

namespace {

DispConfig head_cfg(bool attention) {
    DispConfig c;
    c.c_in = 6;
    c.height = 8;
    c.width = 12;
    c.c_embed = 6;
    c.heads = 2;
    c.h_sub = 4;
    c.w_sub = 4;
    c.attention = attention;
    return c;
}

}  // namespace

TEST_CASE("both head variants emit one bounded channel") {
    for (const bool attention : {true, false}) {
        ParamRegistry reg(1, Dtype::F64);
        Rng rng(2);
        DispHead head(reg, "h", head_cfg(attention));
        gradcheck::randomize_params(reg, rng);
        Graph g;
        Var y = head(g.constant(rng.uniform_tensor({2, 6, 8, 12}, -1, 1, Dtype::F64)));
        CHECK(y.shape() == Shape{2, 1, 8, 12});
        for (std::int64_t i = 0; i < y.val().numel(); ++i) {
            CHECK(y.val().get(i) > 0.0);
            CHECK(y.val().get(i) < 1.0);
        }
    }
}

TEST_CASE("attention gating changes the plain prediction") {
    ParamRegistry ra(3, Dtype::F64), rb(3, Dtype::F64);
    DispHead att(ra, "h", head_cfg(true));
    DispHead plain(rb, "h", head_cfg(false));
    Rng rng(4);
    gradcheck::randomize_params(ra, rng);
    Rng rng2(4);
    gradcheck::randomize_params(rb, rng2);
    Graph g;
    Var x = g.constant(Rng(5).uniform_tensor({1, 6, 8, 12}, -1, 1, Dtype::F64));
    CHECK_FALSE(bit_equal(att(x).val(), plain(x).val()));
}

TEST_CASE("head validates input geometry") {
    ParamRegistry reg(6, Dtype::F64);
    DispHead head(reg, "h", head_cfg(true));
    Graph g;
    CHECK_THROWS_AS(head(g.constant(Tensor::zeros({1, 6, 8, 8}, Dtype::F64))), ShapeMismatch);
    DispConfig bad = head_cfg(true);
    bad.h_sub = 3;  // 8 not divisible
    CHECK_THROWS_AS(DispHead(reg, "h2", bad), ShapeMismatch);
}

TEST_CASE("depth mapping endpoints and monotonicity") {
    const int n = 101;
    Tensor grid = Tensor::zeros({n}, Dtype::F64);
    for (int i = 0; i < n; ++i) grid.set(i, static_cast<double>(i) / (n - 1));
    Tensor depth = disp_to_depth(grid);
    CHECK(std::abs(depth.get(0) - 100.0) <= 1e-12);
    CHECK(std::abs(depth.get(n - 1) - 1.0 / 10.01) <= 1e-12);
    for (int i = 0; i + 1 < n; ++i) CHECK(depth.get(i) > depth.get(i + 1));
    for (int i = 0; i < n; ++i) {
        CHECK(depth.get(i) <= 100.0);
        CHECK(depth.get(i) >= 1.0 / 10.01);
    }
}

TEST_CASE("graph and tensor forms agree in f64") {
    Rng rng(7);
    Tensor d = rng.uniform_tensor({3, 5}, 0.0, 1.0, Dtype::F64);
    Graph g;
    CHECK(bit_equal(disp_to_depth(g.constant(d)).val(), disp_to_depth(d)));
    Tensor d32 = d.astype(Dtype::F32);
    CHECK(disp_to_depth(d32).dtype() == Dtype::F32);
}

TEST_CASE("out-of-range disparities are rejected") {
    for (const double bad : {-1e-12, -0.5, 1.0 + 1e-12, 2.0}) {
        Tensor t = Tensor::scalar(bad, Dtype::F64);
        CHECK_THROWS_AS(disp_to_depth(t), DomainError);
        Graph g;
        CHECK_THROWS_AS(disp_to_depth(g.constant(t)), DomainError);
    }
    CHECK_NOTHROW(disp_to_depth(Tensor::scalar(0.0, Dtype::F64)));
    CHECK_NOTHROW(disp_to_depth(Tensor::scalar(1.0, Dtype::F64)));
}

TEST_CASE("depth gradient matches the closed form") {
    // d/dx 1/(10x + 0.01) = -10 / (10x + 0.01)^2
    for (const double x0 : {0.0, 0.25, 0.6, 1.0}) {
        ParamRegistry reg(8, Dtype::F64);
        ParamPtr p = reg.create("d", {1}, Init::zero());
        p->value.set(0, x0);
        Graph g;
        Var loss = reduce_sum_all(disp_to_depth(g.param(p)));
        Gradients grads = g.backward(loss, reg.params());
        const double denom = 10.0 * x0 + 0.01;
        CHECK(grads.of("d").get(0) == doctest::Approx(-10.0 / (denom * denom)).epsilon(1e-12));
    }
}

TEST_CASE("finite differences certify the attention head") {
    ParamRegistry reg(9, Dtype::F64);
    Rng rng(10);
    DispHead head(reg, "h", head_cfg(true));
    gradcheck::randomize_params(reg, rng);
    ParamPtr px = reg.create("x", {1, 6, 8, 12}, Init::gaussian(0.5));
    Rng pick(11);
    gradcheck::FdOptions opt;
    opt.budget = 250;
    auto build = [&](Graph& g) {
        Var r = g.constant(Rng(12).uniform_tensor({1, 1, 8, 12}, -1, 1, Dtype::F64));
        return reduce_sum_all(mul(head(g.param(px)), r));
    };
    CHECK(gradcheck::check(reg, build, opt, pick).max_rel_err < 1e-4);
}
