#pragma once

#include <optional>
#include <string>

#include "depthkit/ops.hpp"
#include "depthkit/param.hpp"

namespace depthkit::nn {

/// Layer objects own their Params (created through a ParamRegistry at
/// construction) and record ops onto whichever graph the input lives on.
/// Weights are UniformFan-init, biases Zero-init.

struct Conv2d {
    Conv2d() = default;
    Conv2d(ParamRegistry& reg, const std::string& scope, std::int64_t c_in, std::int64_t c_out,
           int k, int stride = 1, int pad = 0, int groups = 1, bool bias = true);
    /// Rectangular kernel / anisotropic stride form.
    static Conv2d rect(ParamRegistry& reg, const std::string& scope, std::int64_t c_in,
                       std::int64_t c_out, int kh, int kw, int stride_h, int stride_w, int pad_h,
                       int pad_w, int groups = 1, bool bias = true);

    Var operator()(Var x) const;

    ParamPtr w, b;
    Conv2dAttrs attrs;
};

struct Conv1d {
    Conv1d() = default;
    Conv1d(ParamRegistry& reg, const std::string& scope, std::int64_t c_in, std::int64_t c_out,
           int k, int stride = 1, int pad = 0, bool bias = true);

    Var operator()(Var x) const;  // x: (n, c, l)

    ParamPtr w, b;
    int stride = 1, pad = 0;
};

struct ConvTranspose2d {
    ConvTranspose2d() = default;
    ConvTranspose2d(ParamRegistry& reg, const std::string& scope, std::int64_t c_in,
                    std::int64_t c_out, int kh, int kw, int stride_h, int stride_w,
                    bool bias = true);

    Var operator()(Var x) const;

    ParamPtr w, b;  // w: (c_in, c_out, kh, kw)
    int stride_h = 1, stride_w = 1;
};

struct Linear {
    Linear() = default;
    Linear(ParamRegistry& reg, const std::string& scope, std::int64_t in, std::int64_t out,
           bool bias = true);

    Var operator()(Var x) const;  // x: (..., in) -> (..., out), rank 2 or 3

    ParamPtr w, b;  // w: (in, out)
};

/// Y = (X - E(X)) / (sigma(X) + eps). Statistics are taken per batch sample
/// over every remaining axis; population sigma.
Var standardize(Var x, double eps = 1e-5);

/// Non-overlapping patch convolution (kernel = stride = (h_sub, w_sub))
/// keeping c_in channels, then 1x1 conv + ELU to c_embed, flattened to a
/// token sequence: (n, c_in, H, W) -> (n, T, c_embed), T = (H/h_sub)(W/w_sub).
struct TokenEmbed {
    TokenEmbed() = default;
    TokenEmbed(ParamRegistry& reg, const std::string& scope, std::int64_t c_in,
               std::int64_t c_embed, int h_sub, int w_sub);

    Var operator()(Var x) const;

    Conv2d patch, embed;
    int h_sub = 1, w_sub = 1;
};

/// Optional probes into the attention block, for tests.
struct MhaTrace {
    Var attn;       // (n*heads, T, T) post-softmax weights
    Var head_out;   // (n, T, c_embed) concatenated head outputs, pre-projection
};

/// Pre-norm-free residual attention block:
///   qkv by one linear map split three ways; per head softmax(QK^T * s)V with
///   s = (c_embed/heads)^{-1/2}; heads concatenated, linearly projected to x1;
///   returns x2 = x + x1 + MLP(x + x1), MLP = linear(4x) -> GELU -> linear.
struct MhaBlock {
    MhaBlock() = default;
    MhaBlock(ParamRegistry& reg, const std::string& scope, std::int64_t c_embed, int heads);

    Var operator()(Var x) const { return forward(x, nullptr); }
    Var forward(Var x, MhaTrace* trace) const;  // x: (n, T, c_embed)

    Linear qkv, proj, mlp_fc1, mlp_fc2;
    std::int64_t c_embed = 0;
    int heads = 1;
    double attn_scale = 1.0;
};

/// Token sequence back to a map: transpose to (n, c_embed, gh, gw), then
/// transposed convolution with kernel = stride = (h_sub, w_sub) to c_out.
struct TokenToMap {
    TokenToMap() = default;
    TokenToMap(ParamRegistry& reg, const std::string& scope, std::int64_t c_embed,
               std::int64_t c_out, int h_sub, int w_sub);

    Var operator()(Var tokens, std::int64_t grid_h, std::int64_t grid_w) const;

    ConvTranspose2d up;
};

}  // namespace depthkit::nn
