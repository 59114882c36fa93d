#pragma once

#include <string>

#include "depthkit/nn.hpp"

namespace depthkit {

/// Static geometry + capacity settings of one refinement module instance.
struct AdaRmConfig {
    std::int64_t channels = 0;          // C
    std::int64_t height = 0, width = 0;  // feature extents the module is built for
    std::int64_t n_sq = 1;              // squeeze ratio; C divisible by n_sq
    int h_sub = 1, w_sub = 1;           // token patch extents
    std::int64_t c_embed = 0;           // attention embed dim, divisible by heads
    int heads = 1;
    bool adaptive = true;               // true: AdaRM (zero-init gates); false: RM (direct sum)
};

/// Parallel local (squeeze -> 3x3 -> unsqueeze) and global (tokens -> MHA ->
/// map) refinements fused into the input. Adaptive variant gates each branch
/// with a zero-init H x W parameter, so a fresh module is an exact identity.
class AdaRm {
public:
    AdaRm() = default;
    AdaRm(ParamRegistry& reg, const std::string& scope, const AdaRmConfig& cfg);

    Var operator()(Var x) const;

    /// Branch probes for recomposition tests.
    Var squeezed(Var x) const;            // X1: 1x1 + ELU to C/n_sq
    Var local_branch(Var x1) const;       // X3: 3x3 + ELU then 1x1 linear, back to C
    Var global_branch(Var x1) const;      // X5: tokens -> MHA -> map -> 1x1, to C

    const AdaRmConfig& config() const { return cfg_; }
    const ParamPtr& gate_local() const { return p1_; }
    const ParamPtr& gate_global() const { return p2_; }

private:
    AdaRmConfig cfg_;
    nn::Conv2d squeeze_, local_, unsqueeze_, expand_;
    nn::TokenEmbed embed_;
    nn::MhaBlock mha_;
    nn::TokenToMap to_map_;
    ParamPtr p1_, p2_;  // zero-init gates, shape (height, width); null for RM
};

}  // namespace depthkit
