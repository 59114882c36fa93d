#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "depthkit/decoder_net.hpp"
#include "depthkit/gradcheck.hpp"

using namespace depthkit;

TEST_CASE("presets validate") {
    CHECK_NOTHROW(validate_config(desk_config()));
    CHECK_NOTHROW(validate_config(tiny_config()));
    CHECK_NOTHROW(validate_config(paper_config()));
    CHECK(desk_config().h_in == 64);
    CHECK(tiny_config().h_in == 32);
    CHECK(paper_config().h_in == 384);
    CHECK(paper_config().w_in == 1280);
}

TEST_CASE("invalid geometry is rejected") {
    NetConfig bad = tiny_config();
    bad.h_in = 33;
    CHECK_THROWS_AS(validate_config(bad), ShapeMismatch);
    bad = tiny_config();
    bad.stage_attn[0].c_embed = 7;  // not divisible by heads
    CHECK_THROWS_AS(validate_config(bad), ShapeMismatch);
    bad = tiny_config();
    bad.enc_channels[4] = 17;  // breaks the n_sq squeeze at the deepest stage
    CHECK_THROWS_AS(validate_config(bad), ShapeMismatch);
}

TEST_CASE("mode names parse back") {
    for (const IeMode m : {IeMode::NoIE, IeMode::PlainIE, IeMode::AdaIE}) {
        auto parsed = parse_ie_mode(ie_mode_name(m));
        REQUIRE(parsed.has_value());
        CHECK(*parsed == m);
    }
    CHECK_FALSE(parse_ie_mode("Bogus").has_value());
}

TEST_CASE("encoder builds the five-level pyramid") {
    const NetConfig cfg = tiny_config();
    ParamRegistry reg(1, Dtype::F64);
    DecoderNet net(reg, cfg);
    Rng rng(2);
    Graph g;
    FeaturePyramid pyr = net.encode(g.constant(rng.uniform_tensor({2, 3, 32, 32}, 0, 1, Dtype::F64)));
    REQUIRE(pyr.levels.size() == 5);
    for (int s = 0; s < 5; ++s) {
        const auto& level = pyr.levels[static_cast<std::size_t>(s)];
        CHECK(level.stage == s);
        CHECK(level.stride == (1 << (s + 1)));
        CHECK(level.channels == cfg.enc_channels[static_cast<std::size_t>(s)]);
        CHECK(level.feature.shape() ==
              Shape{2, cfg.enc_channels[static_cast<std::size_t>(s)], 32 >> (s + 1), 32 >> (s + 1)});
    }
}

TEST_CASE("skip refinement lands on the target stage geometry") {
    const NetConfig cfg = tiny_config();
    ParamRegistry reg(3, Dtype::F64);
    DecoderNet net(reg, cfg);
    Rng rng(4);
    Graph g;
    FeaturePyramid pyr = net.encode(g.constant(rng.uniform_tensor({1, 3, 32, 32}, 0, 1, Dtype::F64)));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; i + j < 4; ++j) {
            Var s = net.refine_skip(pyr, i, j);
            const int k = i + j;
            CHECK(s.shape() == Shape{1, cfg.dec_channels[static_cast<std::size_t>(k)],
                                     cfg.stage_h(k), cfg.stage_w(k)});
        }
}

TEST_CASE("decoder states walk back up the pyramid") {
    const NetConfig cfg = tiny_config();
    ParamRegistry reg(5, Dtype::F64);
    DecoderNet net(reg, cfg);
    Rng rng(6);
    Graph g;
    std::vector<Var> dec =
        net.decode(net.encode(g.constant(rng.uniform_tensor({2, 3, 32, 32}, 0, 1, Dtype::F64))));
    REQUIRE(dec.size() == 4);
    for (int idx = 0; idx < 4; ++idx) {
        const int k = 3 - idx;  // deepest first
        CHECK(dec[static_cast<std::size_t>(idx)].shape() ==
              Shape{2, cfg.dec_channels[static_cast<std::size_t>(k)], cfg.stage_h(k),
                    cfg.stage_w(k)});
    }
}

TEST_CASE("forward emits chains at strides 1, 2, 4") {
    const NetConfig cfg = tiny_config();
    ParamRegistry reg(7, Dtype::F64);
    DecoderNet net(reg, cfg);
    Rng rng(8);
    Graph g;
    Var image = g.constant(rng.uniform_tensor({2, 3, 32, 32}, 0, 1, Dtype::F64));
    std::vector<Var> chains = net.forward(image, 3);
    REQUIRE(chains.size() == 3);
    for (int k = 0; k < 3; ++k)
        CHECK(chains[static_cast<std::size_t>(k)].shape() ==
              Shape{2, cfg.dec_channels[static_cast<std::size_t>(k)], 32 >> k, 32 >> k});
    CHECK(net.forward(image, 1).size() == 1);
    CHECK_THROWS_AS(net.forward(image, 0), ShapeMismatch);
    CHECK_THROWS_AS(net.forward(image, 4), ShapeMismatch);
}

TEST_CASE("gate inventory follows the exchange topology") {
    ParamRegistry reg(9, Dtype::F64);
    DecoderNet net(reg, tiny_config());
    for (int k = 0; k < 4; ++k)
        for (int i = 0; i < 3; ++i) {
            const bool expect = i < k;
            CHECK((net.ie_gate(k, i) != nullptr) == expect);
            if (expect)
                CHECK(net.ie_gate(k, i)->value.shape() ==
                      Shape{tiny_config().dec_channels[static_cast<std::size_t>(k)],
                            tiny_config().stage_h(k), tiny_config().stage_w(k)});
        }
}

TEST_CASE("exchange modes agree under fresh or unit gates") {
    Rng rng(10);
    const Tensor image = rng.uniform_tensor({1, 3, 32, 32}, 0, 1, Dtype::F64);
    NetConfig ada = tiny_config();
    NetConfig noie = tiny_config();
    noie.ie = IeMode::NoIE;
    NetConfig plain = tiny_config();
    plain.ie = IeMode::PlainIE;

    ParamRegistry ra(11, Dtype::F64), rn(11, Dtype::F64), rp(11, Dtype::F64);
    DecoderNet na(ra, ada), nn_(rn, noie), np(rp, plain);

    Graph ga, gn, gp;
    std::vector<Var> da = na.decode(na.encode(ga.constant(image)));
    std::vector<Var> dn = nn_.decode(nn_.encode(gn.constant(image)));
    for (std::size_t i = 0; i < 4; ++i) CHECK(bit_equal(da[i].val(), dn[i].val()));

    for (int k = 0; k < 4; ++k)
        for (int i = 0; i < k; ++i) {
            Tensor& v = na.ie_gate(k, i)->value;
            for (std::int64_t e = 0; e < v.numel(); ++e) v.set(e, 1.0);
        }
    Graph ga2;
    std::vector<Var> da2 = na.decode(na.encode(ga2.constant(image)));
    std::vector<Var> dp = np.decode(np.encode(gp.constant(image)));
    for (std::size_t i = 0; i < 4; ++i) CHECK(bit_equal(da2[i].val(), dp[i].val()));
}

TEST_CASE("finite differences certify the decoder stitching") {
    NetConfig cfg = tiny_config();
    ParamRegistry reg(12, Dtype::F64);
    DecoderNet net(reg, cfg);
    Rng rng(13);
    gradcheck::randomize_params(reg, rng, -0.3, 0.3);
    ParamPtr px = reg.create("image", {1, 3, 32, 32}, Init::uniform_fan(3));
    Rng pick(14);
    gradcheck::FdOptions opt;
    opt.budget = 150;
    auto build = [&](Graph& g) {
        std::vector<Var> dec = net.decode(net.encode(g.param(px)));
        Var acc;
        for (std::size_t i = 0; i < dec.size(); ++i) {
            Var r = g.constant(Rng(20 + i).uniform_tensor(dec[i].shape(), -1, 1, Dtype::F64));
            Var term = reduce_sum_all(mul(dec[i], r));
            acc = i == 0 ? term : add(acc, term);
        }
        return acc;
    };
    CHECK(gradcheck::check(reg, build, opt, pick).max_rel_err < 1e-4);
}
