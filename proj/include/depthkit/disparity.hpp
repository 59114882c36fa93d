#pragma once

#include <string>

#include "depthkit/nn.hpp"

namespace depthkit {

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// Geometry and capacity of one disparity head.
struct DispConfig {
    std::int64_t c_in = 0;               // chain feature channels
    std::int64_t height = 0, width = 0;  // chain resolution
    std::int64_t c_embed = 12;
    int heads = 2;
    int h_sub = 1, w_sub = 1;
    bool attention = true;  // true: attention-gated head; false: plain conv head
};

/// Disparity head.
///
/// Attention variant: tokens = mha(embed_tokens(X)); the token map is 1x1
/// convolved, expanded to full resolution by a kernel=stride transposed
/// convolution to one channel, and sigmoid-activated into global weights;
/// the local 3x3 disparity map (also sigmoid) is gated by them, so outputs
/// lie strictly inside (0,1). Plain variant: sigmoid(3x3 conv to 1 channel).
class DispHead {
public:
    DispHead() = default;
    DispHead(ParamRegistry& reg, const std::string& scope, const DispConfig& cfg);

    Var operator()(Var x) const;  // (n, c_in, H, W) -> (n, 1, H, W)

    const DispConfig& config() const { return cfg_; }

private:
    DispConfig cfg_;
    nn::TokenEmbed embed_;
    nn::MhaBlock mha_;
    nn::Conv2d gc_;
    nn::ConvTranspose2d att_up_;
    nn::Conv2d local_;
};

/// depth = 1 / (10 * disp + 0.01): maps disparity in [0,1] onto
/// [1/10.01, 100], strictly decreasing. Throws DomainError if any value
/// falls outside [0,1].
Var disp_to_depth(Var disp);
Tensor disp_to_depth(const Tensor& disp);

}  // namespace depthkit
