#include "depthkit/disparity.hpp"

namespace depthkit {

DispHead::DispHead(ParamRegistry& reg, const std::string& scope, const DispConfig& cfg) : cfg_(cfg) {
    local_ = nn::Conv2d(reg, scoped(scope, "local"), cfg.c_in, 1, 3, 1, 1);
    if (!cfg.attention) return;
    if (cfg.height % cfg.h_sub != 0 || cfg.width % cfg.w_sub != 0)
        throw ShapeMismatch("extents divisible by (" + std::to_string(cfg.h_sub) + ", " +
                                std::to_string(cfg.w_sub) + ")",
                            std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
    embed_ = nn::TokenEmbed(reg, scoped(scope, "tok"), cfg.c_in, cfg.c_embed, cfg.h_sub, cfg.w_sub);
    mha_ = nn::MhaBlock(reg, scoped(scope, "mha"), cfg.c_embed, cfg.heads);
    gc_ = nn::Conv2d(reg, scoped(scope, "gc"), cfg.c_embed, cfg.c_embed, 1);
    att_up_ = nn::ConvTranspose2d(reg, scoped(scope, "att"), cfg.c_embed, 1, cfg.h_sub, cfg.w_sub,
                                  cfg.h_sub, cfg.w_sub);
}

Var DispHead::operator()(Var x) const {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != cfg_.c_in || s[2] != cfg_.height || s[3] != cfg_.width)
        throw ShapeMismatch("(n, " + std::to_string(cfg_.c_in) + ", " + std::to_string(cfg_.height) +
                                ", " + std::to_string(cfg_.width) + ")",
                            shape_str(s));
    Var d_local = sigmoid(local_(x));
    if (!cfg_.attention) return d_local;
    const std::int64_t gh = cfg_.height / cfg_.h_sub, gw = cfg_.width / cfg_.w_sub;
    Var tokens = mha_(embed_(x));                 // (n, T, c_embed)
    Var maps = transpose(tokens, {0, 2, 1});      // (n, c_embed, T)
    maps = reshape(maps, {s[0], cfg_.c_embed, gh, gw});
    Var gc = gc_(maps);
    Var att = att_up_(gc);                        // (n, 1, H, W)
    return mul(d_local, sigmoid(att));
}

Var disp_to_depth(Var disp) {
    const Tensor& v = disp.val();
    for (std::int64_t i = 0; i < v.numel(); ++i) {
        const double d = v.get(i);
        if (!(d >= 0.0 && d <= 1.0))
            throw DomainError("disparity value " + std::to_string(d) + " outside [0, 1]");
    }
    Var denom = add_scalar(scale(disp, 10.0), 0.01);
    Var one = disp.g->constant(Tensor::scalar(1.0, disp.dtype()));
    return div(one, denom);
}

Tensor disp_to_depth(const Tensor& disp) {
    Tensor out = Tensor::empty(disp.shape(), disp.dtype());
    for (std::int64_t i = 0; i < disp.numel(); ++i) {
        const double d = disp.get(i);
        if (!(d >= 0.0 && d <= 1.0))
            throw DomainError("disparity value " + std::to_string(d) + " outside [0, 1]");
        out.set(i, 1.0 / (10.0 * d + 0.01));
    }
    return out;
}

}  // namespace depthkit
