#include "depthkit/adarm.hpp"

namespace depthkit {

AdaRm::AdaRm(ParamRegistry& reg, const std::string& scope, const AdaRmConfig& cfg) : cfg_(cfg) {
    if (cfg.channels % cfg.n_sq != 0)
        throw ShapeMismatch("channels divisible by n_sq=" + std::to_string(cfg.n_sq),
                            std::to_string(cfg.channels));
    if (cfg.height % cfg.h_sub != 0 || cfg.width % cfg.w_sub != 0)
        throw ShapeMismatch("extents divisible by (" + std::to_string(cfg.h_sub) + ", " +
                                std::to_string(cfg.w_sub) + ")",
                            std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
    const std::int64_t c_sq = cfg.channels / cfg.n_sq;
    squeeze_ = nn::Conv2d(reg, scoped(scope, "squeeze"), cfg.channels, c_sq, 1);
    local_ = nn::Conv2d(reg, scoped(scope, "local"), c_sq, c_sq, 3, 1, 1);
    unsqueeze_ = nn::Conv2d(reg, scoped(scope, "unsqueeze"), c_sq, cfg.channels, 1);
    embed_ = nn::TokenEmbed(reg, scoped(scope, "tok"), c_sq, cfg.c_embed, cfg.h_sub, cfg.w_sub);
    mha_ = nn::MhaBlock(reg, scoped(scope, "mha"), cfg.c_embed, cfg.heads);
    to_map_ = nn::TokenToMap(reg, scoped(scope, "map"), cfg.c_embed, c_sq, cfg.h_sub, cfg.w_sub);
    expand_ = nn::Conv2d(reg, scoped(scope, "expand"), c_sq, cfg.channels, 1);
    if (cfg.adaptive) {
        p1_ = reg.create(scoped(scope, "p1"), {cfg.height, cfg.width}, Init::zero());
        p2_ = reg.create(scoped(scope, "p2"), {cfg.height, cfg.width}, Init::zero());
    }
}

Var AdaRm::squeezed(Var x) const { return elu(squeeze_(x)); }

Var AdaRm::local_branch(Var x1) const { return unsqueeze_(elu(local_(x1))); }

Var AdaRm::global_branch(Var x1) const {
    const Shape& s = x1.shape();
    Var tokens = mha_(embed_(x1));
    Var map = to_map_(tokens, s[2] / cfg_.h_sub, s[3] / cfg_.w_sub);
    return expand_(map);
}

Var AdaRm::operator()(Var x) const {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != cfg_.channels || s[2] != cfg_.height || s[3] != cfg_.width)
        throw ShapeMismatch("(n, " + std::to_string(cfg_.channels) + ", " +
                                std::to_string(cfg_.height) + ", " + std::to_string(cfg_.width) + ")",
                            shape_str(s));
    Var x1 = squeezed(x);
    Var x3 = local_branch(x1);
    Var x5 = global_branch(x1);
    if (!cfg_.adaptive) return add(add(x, x3), x5);
    // (height, width) gates broadcast across batch and channels.
    Var g1 = x.g->param(p1_);
    Var g2 = x.g->param(p2_);
    return add(add(x, mul(g1, x3)), mul(g2, x5));
}

}  // namespace depthkit
