#pragma once

#include <optional>
#include <string>
#include <vector>

#include "depthkit/adarm.hpp"
#include "depthkit/nn.hpp"

namespace depthkit {

enum class DownKind { MaxPool, Stride, MaxPoolStride, CAS, NCAS, AdaNCAS, AdaNPCAS, AdaAxialNPCAS };
enum class UpKind { BIU, RCU, NRCU, AdaNRSU, DAdaNRSU };

const char* down_kind_name(DownKind k);
const char* up_kind_name(UpKind k);
std::optional<DownKind> parse_down_kind(const std::string& name);
std::optional<UpKind> parse_up_kind(const std::string& name);

/// One 2x spatial downsampling application, channels preserved.
///
/// Attention-path kinds move space into channels (axially or block-wise),
/// recombine by convolution, apply channel attention from a (optionally
/// weighted) pooled head, and squeeze back to C channels. Ada* kinds add a
/// zero-init-gated standardized max-pool branch, so a fresh Ada* module
/// equals its ungated core bit-exactly.
class Downsampler {
public:
    Downsampler() = default;
    Downsampler(ParamRegistry& reg, const std::string& scope, DownKind kind, std::int64_t channels,
                std::int64_t h, std::int64_t w);

    Var operator()(Var x) const;
    /// The ungated core (identical to operator() for non-Ada kinds).
    Var attention_path(Var x) const;

    DownKind kind() const { return kind_; }
    const ParamPtr& gate() const { return gate_; }

private:
    Var cas_core(Var x) const;    // non-axial space-to-depth path
    Var axial_pass(Var x, SpatialAxis axis, const nn::Conv2d& recomb, const ParamPtr& pos,
                   const ParamPtr& we, const nn::Conv1d& attn, const nn::Conv2d& squeeze) const;

    DownKind kind_ = DownKind::MaxPool;
    std::int64_t c_ = 0, h_ = 0, w_ = 0;
    nn::Conv2d stride_conv_;               // Stride / MaxPoolStride
    nn::Conv2d align_;                     // MaxPoolStride 1x1 on the pooled branch
    nn::Conv2d recomb_, squeeze_;          // CAS family first (or only) pass
    nn::Conv1d chan_attn_;
    nn::Conv2d recomb_w_, squeeze_w_;      // axial width pass
    nn::Conv1d chan_attn_w_;
    nn::Conv2d merge_;                     // NCAS 1x1 over the 2C concat
    ParamPtr pos_, pos_w_;                 // zero-init position embeddings
    ParamPtr we_, we_w_;                   // one-init pooling weights
    ParamPtr gate_;                        // zero-init max-pool fusion gate
};

/// `times` independent-parameter 2x downsamplings composed; times = 0 is the
/// identity.
class DownStack {
public:
    DownStack() = default;
    DownStack(ParamRegistry& reg, const std::string& scope, DownKind kind, std::int64_t channels,
              std::int64_t h, std::int64_t w, int times);

    Var operator()(Var x) const;
    std::size_t size() const { return steps_.size(); }
    const Downsampler& step(std::size_t i) const { return steps_.at(i); }

private:
    std::vector<Downsampler> steps_;
};

/// One 2x spatial upsampling application, channels preserved.
///
/// X_high1 = bilinear x2; X_low1 = 1x1 conv to 4C; X_low2 = refine(X_low1)
/// (adaptive refinement for DAdaNRSU, direct-sum refinement otherwise);
/// X_high2 = pixel_shuffle(X_low2). Fusion by kind: BIU keeps X_high1 alone;
/// RCU merges the raw concat by 1x1; NRCU merges the standardized concat;
/// AdaNRSU/DAdaNRSU return standardize(X_high1) + P (.) standardize(X_high2)
/// with P zero-init.
class Upsampler {
public:
    Upsampler() = default;
    /// refine_cfg describes the refinement module on the expanded 4C map at
    /// the input resolution; ignored for BIU.
    Upsampler(ParamRegistry& reg, const std::string& scope, UpKind kind, std::int64_t channels,
              const AdaRmConfig& refine_cfg);

    Var operator()(Var x) const;

    UpKind kind() const { return kind_; }
    const ParamPtr& gate() const { return gate_; }

private:
    UpKind kind_ = UpKind::BIU;
    std::int64_t c_ = 0;
    nn::Conv2d expand_;  // 1x1 C -> 4C
    AdaRm refine_;
    nn::Conv2d merge_;   // RCU / NRCU 1x1 over the 2C concat
    ParamPtr gate_;
};

}  // namespace depthkit
