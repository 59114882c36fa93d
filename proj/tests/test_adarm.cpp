#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "depthkit/adarm.hpp"
#include "depthkit/gradcheck.hpp"

using namespace depthkit;

namespace {

AdaRmConfig cfg(bool adaptive) {
    AdaRmConfig c;
    c.channels = 8;
    c.height = 4;
    c.width = 6;
    c.n_sq = 2;
    c.h_sub = 2;
    c.w_sub = 2;
    c.c_embed = 6;
    c.heads = 2;
    c.adaptive = adaptive;
    return c;
}

}  // namespace

TEST_CASE("construction validates divisibility") {
    ParamRegistry reg(1, Dtype::F64);
    AdaRmConfig bad = cfg(true);
    bad.n_sq = 3;
    CHECK_THROWS_AS(AdaRm(reg, "a", bad), ShapeMismatch);
    bad = cfg(true);
    bad.h_sub = 3;
    CHECK_THROWS_AS(AdaRm(reg, "b", bad), ShapeMismatch);
}

TEST_CASE("operator() validates the input shape") {
    ParamRegistry reg(1, Dtype::F64);
    AdaRm rm(reg, "rm", cfg(true));
    Graph g;
    CHECK_THROWS_AS(rm(g.constant(Tensor::zeros({2, 8, 4, 5}, Dtype::F64))), ShapeMismatch);
    CHECK_THROWS_AS(rm(g.constant(Tensor::zeros({2, 7, 4, 6}, Dtype::F64))), ShapeMismatch);
}

TEST_CASE("adaptive module is an exact identity at init") {
    ParamRegistry reg(2, Dtype::F64);
    AdaRm rm(reg, "rm", cfg(true));
    CHECK(rm.gate_local()->value.shape() == Shape{4, 6});
    CHECK(rm.gate_global()->value.shape() == Shape{4, 6});
    Rng rng(3);
    Graph g;
    Var x = g.constant(rng.uniform_tensor({3, 8, 4, 6}, -2, 2, Dtype::F64));
    CHECK(bit_equal(rm(x).val(), x.val()));
}

TEST_CASE("direct-sum module moves the input at init") {
    ParamRegistry reg(2, Dtype::F64);
    AdaRm rm(reg, "rm", cfg(false));
    CHECK(rm.gate_local() == nullptr);
    Rng rng(3);
    Graph g;
    Var x = g.constant(rng.uniform_tensor({3, 8, 4, 6}, -2, 2, Dtype::F64));
    CHECK_FALSE(bit_equal(rm(x).val(), x.val()));
}

TEST_CASE("output recombines from the published branches") {
    for (const bool adaptive : {true, false}) {
        ParamRegistry reg(4, Dtype::F64);
        Rng rng(5);
        AdaRm rm(reg, "rm", cfg(adaptive));
        gradcheck::randomize_params(reg, rng);
        Graph g;
        Var x = g.constant(rng.uniform_tensor({2, 8, 4, 6}, -1, 1, Dtype::F64));
        Var x1 = rm.squeezed(x);
        CHECK(x1.shape() == Shape{2, 4, 4, 6});
        Var x3 = rm.local_branch(x1);
        Var x5 = rm.global_branch(x1);
        CHECK(x3.shape() == x.shape());
        CHECK(x5.shape() == x.shape());
        Var manual;
        if (adaptive) {
            manual = add(add(x, mul(g.param(rm.gate_local()), x3)),
                         mul(g.param(rm.gate_global()), x5));
        } else {
            manual = add(add(x, x3), x5);
        }
        CHECK(bit_equal(rm(x).val(), manual.val()));
    }
}

TEST_CASE("gates receive gradient once opened") {
    ParamRegistry reg(6, Dtype::F64);
    Rng rng(7);
    AdaRm rm(reg, "rm", cfg(true));
    Graph g;
    Var x = g.constant(rng.uniform_tensor({1, 8, 4, 6}, -1, 1, Dtype::F64));
    Var loss = reduce_sum_all(mul(rm(x), g.constant(rng.uniform_tensor({1, 8, 4, 6}, -1, 1, Dtype::F64))));
    Gradients grads = g.backward(loss, reg.params());
    bool any = false;
    for (std::int64_t i = 0; i < 24; ++i)
        any = any || grads.of(rm.gate_local()->name).get(i) != 0.0;
    CHECK(any);
}

TEST_CASE("finite differences certify both modes") {
    for (const bool adaptive : {true, false}) {
        ParamRegistry reg(8, Dtype::F64);
        Rng rng(9);
        AdaRm rm(reg, "rm", cfg(adaptive));
        gradcheck::randomize_params(reg, rng);
        ParamPtr px = reg.create("x", {2, 8, 4, 6}, Init::gaussian(0.5));
        Rng pick(10);
        gradcheck::FdOptions opt;
        opt.budget = 300;
        auto build = [&](Graph& g) {
            Var r = g.constant(Rng(11).uniform_tensor({2, 8, 4, 6}, -1, 1, Dtype::F64));
            return reduce_sum_all(mul(rm(g.param(px)), r));
        };
        CHECK(gradcheck::check(reg, build, opt, pick).max_rel_err < 1e-4);
    }
}
