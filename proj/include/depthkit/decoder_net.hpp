#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "depthkit/resample.hpp"

namespace depthkit {

enum class IeMode { NoIE, PlainIE, AdaIE };

const char* ie_mode_name(IeMode m);
std::optional<IeMode> parse_ie_mode(const std::string& name);

/// Static assembly settings: encoder/decoder widths, per-stage attention
/// geometry, and the variant selections under ablation.
struct NetConfig {
    std::int64_t h_in = 64, w_in = 96;
    std::array<std::int64_t, 5> enc_channels{16, 24, 32, 48, 64};
    std::array<std::int64_t, 4> dec_channels{16, 24, 32, 48};

    struct Attn {
        std::int64_t n_sq = 1;
        std::int64_t c_embed = 8;
        int heads = 2;
    };
    std::array<Attn, 5> stage_attn{{{2, 8, 2}, {4, 12, 2}, {4, 16, 4}, {8, 24, 4}, {8, 32, 4}}};
    std::array<Attn, 3> disp_attn{{{1, 12, 2}, {1, 24, 4}, {1, 32, 4}}};  // n_sq unused

    DownKind down = DownKind::AdaAxialNPCAS;
    UpKind up = UpKind::DAdaNRSU;
    IeMode ie = IeMode::AdaIE;
    bool att_disp = true;

    // Stage s feature geometry (stride 2^{s+1}).
    std::int64_t stage_h(int s) const { return h_in >> (s + 1); }
    std::int64_t stage_w(int s) const { return w_in >> (s + 1); }
    // Token patch extents: input/16, except input/32 at the deepest stage.
    int h_sub(int s) const { return static_cast<int>(h_in / (s == 4 ? 32 : 16)); }
    int w_sub(int s) const { return static_cast<int>(w_in / (s == 4 ? 32 : 16)); }
};

/// Desk-scale 64x96 preset (the default-constructed config).
NetConfig desk_config();
/// Narrow 32x32 preset for gradient certification and smoke checks.
NetConfig tiny_config();
/// Full-size attention settings preset at 384x1280 for shape-contract checks.
NetConfig paper_config();
/// Throws ShapeMismatch if any divisibility or ordering invariant fails.
void validate_config(const NetConfig& cfg);

struct FeaturePyramid {
    struct Level {
        int stage = 0;
        Var feature;
        int stride = 1;
        std::int64_t channels = 0;
    };
    std::vector<Level> levels;  // five, strides 2..32
};

/// Toy five-block encoder, per-(i,j) skip refinement, decoder recursion with
/// gated multilevel exchange, and the three upsampled disparity-feature
/// chains.
class DecoderNet {
public:
    DecoderNet(ParamRegistry& reg, const NetConfig& cfg);

    FeaturePyramid encode(Var image) const;

    /// X_enc^(i,j): stage-i feature downsampled j times, channel-transformed
    /// to stage (i+j)'s decoder width, then refined. i in 0..3, j in 0..3-i.
    Var refine_skip(const FeaturePyramid& pyr, int i, int j) const;

    /// Decoder states, deepest first: [X_dec3, X_dec2, X_dec1, X_dec0].
    std::vector<Var> decode(const FeaturePyramid& pyr) const;

    /// Disparity-feature chains for scales k = 0..n_chains-1 at strides 1, 2, 4.
    std::vector<Var> forward(Var image, int n_chains = 3) const;

    const NetConfig& config() const { return cfg_; }
    const ParamPtr& ie_gate(int k, int i) const { return ie_gates_.at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(i)); }

private:
    Var apply_block(int i, Var x) const;

    NetConfig cfg_;
    std::array<nn::Conv2d, 5> enc_a_, enc_b_;

    struct Skip {
        DownStack down;
        nn::Conv2d ct;
        AdaRm refine;
    };
    std::array<std::array<std::optional<Skip>, 4>, 4> skips_;  // [i][j], j <= 3-i

    AdaRm top_refine_;                    // stage-4 refinement of X_enc4
    std::array<AdaRm, 3> dec_refine_;     // refinement of X_dec^{k+1}, k = 0..2
    std::array<nn::Conv2d, 4> up_ct_;     // width alignment before upsampling, k = 0..3
    std::array<Upsampler, 4> up_;         // transition producing stage-k output
    std::array<std::array<ParamPtr, 3>, 4> ie_gates_;  // [k][i], AdaIE only

    std::array<nn::Conv2d, 3> chain_ct_;
    std::array<AdaRm, 3> chain_refine_;
    std::array<Upsampler, 3> chain_up_;
};

}  // namespace depthkit
