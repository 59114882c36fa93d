#include "depthkit/decoder_net.hpp"

namespace depthkit {

const char* ie_mode_name(IeMode m) {
    switch (m) {
        case IeMode::NoIE: return "NoIE";
        case IeMode::PlainIE: return "PlainIE";
        case IeMode::AdaIE: return "AdaIE";
    }
    return "?";
}

std::optional<IeMode> parse_ie_mode(const std::string& name) {
    for (IeMode m : {IeMode::NoIE, IeMode::PlainIE, IeMode::AdaIE})
        if (name == ie_mode_name(m)) return m;
    return std::nullopt;
}

NetConfig desk_config() { return NetConfig{}; }

NetConfig tiny_config() {
    NetConfig cfg;
    cfg.h_in = 32;
    cfg.w_in = 32;
    cfg.enc_channels = {8, 12, 16, 24, 32};
    cfg.dec_channels = {8, 12, 16, 24};
    return cfg;
}

NetConfig paper_config() {
    NetConfig cfg;
    cfg.h_in = 384;
    cfg.w_in = 1280;
    cfg.enc_channels = {24, 48, 64, 160, 256};
    cfg.dec_channels = {24, 48, 64, 160};
    cfg.stage_attn = {{{2, 24, 2}, {4, 48, 4}, {4, 64, 4}, {8, 160, 8}, {8, 256, 8}}};
    cfg.disp_attn = {{{1, 12, 2}, {1, 24, 4}, {1, 32, 4}}};
    return cfg;
}

namespace {

AdaRmConfig stage_adarm_cfg(const NetConfig& cfg, int stage, std::int64_t channels, std::int64_t h,
                            std::int64_t w, bool adaptive = true) {
    AdaRmConfig rc;
    rc.channels = channels;
    rc.height = h;
    rc.width = w;
    rc.n_sq = cfg.stage_attn[static_cast<std::size_t>(stage)].n_sq;
    rc.c_embed = cfg.stage_attn[static_cast<std::size_t>(stage)].c_embed;
    rc.heads = cfg.stage_attn[static_cast<std::size_t>(stage)].heads;
    rc.h_sub = cfg.h_sub(stage);
    rc.w_sub = cfg.w_sub(stage);
    rc.adaptive = adaptive;
    return rc;
}

void require(bool ok, const std::string& expected, const std::string& got) {
    if (!ok) throw ShapeMismatch(expected, got);
}

}  // namespace

void validate_config(const NetConfig& cfg) {
    require(cfg.h_in % 32 == 0 && cfg.w_in % 32 == 0, "input extents divisible by 32",
            std::to_string(cfg.h_in) + "x" + std::to_string(cfg.w_in));
    for (int s = 0; s < 5; ++s) {
        const auto& a = cfg.stage_attn[static_cast<std::size_t>(s)];
        require(a.c_embed % a.heads == 0, "stage c_embed divisible by heads",
                "stage " + std::to_string(s));
        require(cfg.stage_h(s) % cfg.h_sub(s) == 0 && cfg.stage_w(s) % cfg.w_sub(s) == 0,
                "stage extents divisible by token patch", "stage " + std::to_string(s));
        const std::int64_t c = s == 4 ? cfg.enc_channels[4]
                                      : cfg.dec_channels[static_cast<std::size_t>(s)];
        require(c % a.n_sq == 0, "stage channels divisible by n_sq", "stage " + std::to_string(s));
    }
    // Refinement inside the upsampling transitions runs on 4x the target
    // decoder width with the source stage's squeeze ratio.
    for (int k = 0; k < 4; ++k)
        require((4 * cfg.dec_channels[static_cast<std::size_t>(k)]) %
                        cfg.stage_attn[static_cast<std::size_t>(k + 1)].n_sq ==
                    0,
                "4*D_k divisible by stage k+1 n_sq", "k=" + std::to_string(k));
    for (int k = 0; k < 3; ++k) {
        require((4 * cfg.dec_channels[static_cast<std::size_t>(k)]) %
                        cfg.stage_attn[static_cast<std::size_t>(k)].n_sq ==
                    0,
                "4*D_k divisible by stage k n_sq", "k=" + std::to_string(k));
        const auto& da = cfg.disp_attn[static_cast<std::size_t>(k)];
        require(da.c_embed % da.heads == 0, "disp c_embed divisible by heads",
                "scale " + std::to_string(k));
        require((cfg.h_in >> k) % cfg.h_sub(0) == 0 && (cfg.w_in >> k) % cfg.w_sub(0) == 0,
                "chain extents divisible by token patch", "scale " + std::to_string(k));
    }
}

DecoderNet::DecoderNet(ParamRegistry& reg, const NetConfig& cfg) : cfg_(cfg) {
    validate_config(cfg);
    for (int i = 0; i < 5; ++i) {
        const std::int64_t c_in = i == 0 ? 3 : cfg.enc_channels[static_cast<std::size_t>(i - 1)];
        const std::int64_t c_out = cfg.enc_channels[static_cast<std::size_t>(i)];
        const std::string scope = "enc." + std::to_string(i);
        enc_a_[static_cast<std::size_t>(i)] = nn::Conv2d(reg, scoped(scope, "a"), c_in, c_out, 3, 2, 1);
        enc_b_[static_cast<std::size_t>(i)] = nn::Conv2d(reg, scoped(scope, "b"), c_out, c_out, 3, 1, 1);
    }

    for (int i = 0; i <= 3; ++i)
        for (int j = 0; j <= 3 - i; ++j) {
            const int s = i + j;
            const std::int64_t d = cfg.dec_channels[static_cast<std::size_t>(s)];
            const std::string scope = "skip." + std::to_string(i) + "." + std::to_string(j);
            Skip sk;
            sk.down = DownStack(reg, scoped(scope, "down"), cfg.down,
                                cfg.enc_channels[static_cast<std::size_t>(i)], cfg.stage_h(i),
                                cfg.stage_w(i), j);
            sk.ct = nn::Conv2d(reg, scoped(scope, "ct"),
                               cfg.enc_channels[static_cast<std::size_t>(i)], d, 3, 1, 1);
            sk.refine = AdaRm(reg, scoped(scope, "refine"),
                              stage_adarm_cfg(cfg, s, d, cfg.stage_h(s), cfg.stage_w(s)));
            skips_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::move(sk);
        }

    top_refine_ = AdaRm(reg, "dec.top.refine",
                        stage_adarm_cfg(cfg, 4, cfg.enc_channels[4], cfg.stage_h(4), cfg.stage_w(4)));
    for (int k = 0; k < 4; ++k) {
        const std::int64_t d_src = k == 3 ? cfg.enc_channels[4]
                                          : cfg.dec_channels[static_cast<std::size_t>(k + 1)];
        const std::int64_t d_dst = cfg.dec_channels[static_cast<std::size_t>(k)];
        const std::string scope = "dec." + std::to_string(k);
        if (k < 3)
            dec_refine_[static_cast<std::size_t>(k)] =
                AdaRm(reg, scoped(scope, "refine"),
                      stage_adarm_cfg(cfg, k + 1, d_src, cfg.stage_h(k + 1), cfg.stage_w(k + 1)));
        up_ct_[static_cast<std::size_t>(k)] = nn::Conv2d(reg, scoped(scope, "ct"), d_src, d_dst, 3, 1, 1);
        up_[static_cast<std::size_t>(k)] =
            Upsampler(reg, scoped(scope, "up"), cfg.up, d_dst,
                      stage_adarm_cfg(cfg, k + 1, 4 * d_dst, cfg.stage_h(k + 1), cfg.stage_w(k + 1)));
        if (cfg.ie == IeMode::AdaIE)
            for (int i = 0; i < k; ++i)
                ie_gates_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
                    reg.create("dec.ie." + std::to_string(k) + "." + std::to_string(i),
                               {d_dst, cfg.stage_h(k), cfg.stage_w(k)}, Init::zero());
    }

    for (int k = 0; k < 3; ++k) {
        const std::int64_t d = cfg.dec_channels[static_cast<std::size_t>(k)];
        const std::string scope = "chain." + std::to_string(k);
        chain_ct_[static_cast<std::size_t>(k)] = nn::Conv2d(reg, scoped(scope, "ct"), d, d, 3, 1, 1);
        chain_refine_[static_cast<std::size_t>(k)] =
            AdaRm(reg, scoped(scope, "refine"),
                  stage_adarm_cfg(cfg, k, d, cfg.stage_h(k), cfg.stage_w(k)));
        chain_up_[static_cast<std::size_t>(k)] =
            Upsampler(reg, scoped(scope, "up"), cfg.up, d,
                      stage_adarm_cfg(cfg, k, 4 * d, cfg.stage_h(k), cfg.stage_w(k)));
    }
}

Var DecoderNet::apply_block(int i, Var x) const {
    Var y = elu(enc_a_[static_cast<std::size_t>(i)](x));
    return elu(enc_b_[static_cast<std::size_t>(i)](y));
}

FeaturePyramid DecoderNet::encode(Var image) const {
    const Shape& s = image.shape();
    if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.h_in || s[3] != cfg_.w_in)
        throw ShapeMismatch("(n, 3, " + std::to_string(cfg_.h_in) + ", " +
                                std::to_string(cfg_.w_in) + ") image",
                            shape_str(s));
    FeaturePyramid pyr;
    Var x = image;
    for (int i = 0; i < 5; ++i) {
        x = apply_block(i, x);
        pyr.levels.push_back({i, x, 1 << (i + 1), cfg_.enc_channels[static_cast<std::size_t>(i)]});
    }
    return pyr;
}

Var DecoderNet::refine_skip(const FeaturePyramid& pyr, int i, int j) const {
    if (i < 0 || i > 3 || j < 0 || j > 3 - i)
        throw ShapeMismatch("skip indices i in 0..3, j in 0..3-i",
                            "(" + std::to_string(i) + ", " + std::to_string(j) + ")");
    const Skip& sk = *skips_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    Var x = pyr.levels.at(static_cast<std::size_t>(i)).feature;
    return sk.refine(elu(sk.ct(sk.down(x))));
}

std::vector<Var> DecoderNet::decode(const FeaturePyramid& pyr) const {
    if (pyr.levels.size() != 5) throw ShapeMismatch("five pyramid levels", std::to_string(pyr.levels.size()));
    std::vector<Var> out;
    Var carry;  // X_dec^{k+1} while producing stage k
    for (int k = 3; k >= 0; --k) {
        Var refined = k == 3 ? top_refine_(pyr.levels[4].feature)
                             : dec_refine_[static_cast<std::size_t>(k)](carry);
        Var lifted = up_[static_cast<std::size_t>(k)](elu(up_ct_[static_cast<std::size_t>(k)](refined)));
        Var acc = add(lifted, refine_skip(pyr, k, 0));
        if (cfg_.ie != IeMode::NoIE)
            for (int i = 0; i < k; ++i) {
                Var skip = refine_skip(pyr, i, k - i);
                if (cfg_.ie == IeMode::AdaIE) {
                    Var gate = acc.g->param(
                        ie_gates_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]);
                    acc = add(acc, mul(gate, skip));
                } else {
                    acc = add(acc, skip);
                }
            }
        out.push_back(acc);
        carry = acc;
    }
    return out;  // [X_dec3, X_dec2, X_dec1, X_dec0]
}

std::vector<Var> DecoderNet::forward(Var image, int n_chains) const {
    if (n_chains < 1 || n_chains > 3)
        throw ShapeMismatch("1..3 chains", std::to_string(n_chains));
    FeaturePyramid pyr = encode(image);
    std::vector<Var> dec = decode(pyr);
    std::vector<Var> chains;
    for (int k = 0; k < n_chains; ++k) {
        Var x = dec.at(static_cast<std::size_t>(3 - k));  // X_dec^k
        Var y = chain_refine_[static_cast<std::size_t>(k)](
            elu(chain_ct_[static_cast<std::size_t>(k)](x)));
        chains.push_back(chain_up_[static_cast<std::size_t>(k)](y));
    }
    return chains;  // strides 1, 2, 4
}

}  // namespace depthkit
