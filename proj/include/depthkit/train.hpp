#pragma once

#include <array>
#include <string>
#include <vector>

#include "depthkit/decoder_net.hpp"
#include "depthkit/depth_eval.hpp"
#include "depthkit/disparity.hpp"
#include "depthkit/graph.hpp"
#include "depthkit/scene.hpp"

namespace depthkit {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Full model: decoder network plus one disparity head per scale chain.
class DepthModel {
public:
    DepthModel(ParamRegistry& reg, const NetConfig& cfg);

    /// Disparity maps (n, 1, H>>k, W>>k) for scales k = 0..n_chains-1.
    std::vector<Var> disparities(Var image, int n_chains = 3) const;

    const DecoderNet& net() const { return net_; }
    const DispHead& head(int k) const { return heads_.at(static_cast<std::size_t>(k)); }

private:
    DecoderNet net_;
    std::array<DispHead, 3> heads_;
};

/// Decoupled-weight-decay Adam. Moment state is kept in f64 regardless of the
/// param dtype; updates are elementwise and deterministic.
class AdamW {
public:
    explicit AdamW(std::vector<ParamPtr> params, double lr, double weight_decay = 1e-2,
                   double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(const Gradients& grads);

private:
    std::vector<ParamPtr> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, wd_, b1_, b2_, eps_;
    std::int64_t t_ = 0;
};

struct OverfitConfig {
    NetConfig net;
    std::uint64_t seed = 7;
    int steps = 1200;
    double lr = 1.5e-3;
    double weight_decay = 1e-2;
    int frames = 8;
    int objects = 6;
    double near = 1.0, far = 80.0;
    int log_every = 50;
};

/// Parses the flat JSON config (training knobs, geometry, variant names).
/// Unknown keys and out-of-domain values raise ConfigError naming the field.
OverfitConfig load_overfit_config(const std::string& path);

inline constexpr std::array<const char*, 4> kAlignStrategies{"median", "mean", "fuse", "ada"};

/// Per-frame alignment then metric averaging over frames, one entry per
/// kAlignStrategies element.
std::array<DepthMetrics, 4> eval_all_strategies(const Tensor& pred, const Tensor& gt, double cap);

/// One alignment strategy by name ("median" zeta=1, "mean" zeta=0,
/// "fuse" zeta=0.5, "ada" = grid search); pred/gt are (n, 1, H, W) batches.
DepthMetrics eval_strategy(const Tensor& pred, const Tensor& gt, double cap,
                           const std::string& strategy);

struct OverfitRow {
    int step = 0;
    double loss = 0;
    std::array<DepthMetrics, 4> metrics;  // indexed like kAlignStrategies
};

struct OverfitReport {
    std::vector<OverfitRow> rows;
    std::string csv_path, checkpoint_path;
};

/// Renders `frames` scenes derived from the seed into one batch pair:
/// images (n, 3, H, W) and depths (n, 1, H, W), generated in parallel.
std::pair<Tensor, Tensor> render_frames(const OverfitConfig& cfg, std::uint64_t salt = 0);

/// Trains the configured model on the rendered frames with AdamW on
/// loss = mean |ln pred_depth - ln gt_depth| over the full-resolution scale,
/// logging every cfg.log_every steps plus a final row. Writes training.csv
/// and model.ckpt into out_dir ("" disables both files).
OverfitReport overfit_run(const OverfitConfig& cfg, const std::string& out_dir);

}  // namespace depthkit
