#include "depthkit/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "depthkit/io.hpp"
#include "depthkit/ops.hpp"

namespace depthkit {
namespace {

void parallel_frames(int n, const std::function<void(int)>& fn) {
    const unsigned hw = std::thread::hardware_concurrency();
    const int workers = std::min(n, hw == 0 ? 1 : static_cast<int>(hw));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

Tensor frame_slice(const Tensor& batch, std::int64_t n) {
    const Shape& s = batch.shape();
    const std::int64_t per = batch.numel() / s[0];
    Tensor out = Tensor::zeros(Shape(s.begin() + 1, s.end()), batch.dtype());
    for (std::int64_t i = 0; i < per; ++i) out.set(i, batch.get(n * per + i));
    return out;
}

Tensor ones_like(const Tensor& t) {
    Tensor out = Tensor::zeros(t.shape(), t.dtype());
    for (std::int64_t i = 0; i < t.numel(); ++i) out.set(i, 1.0);
    return out;
}

Tensor scaled_by(const Tensor& t, double s) {
    Tensor out = Tensor::zeros(t.shape(), t.dtype());
    for (std::int64_t i = 0; i < t.numel(); ++i) out.set(i, s * t.get(i));
    return out;
}

DepthMetrics strategy_metrics_one_frame(const Tensor& pred, const Tensor& gt, double cap,
                                        const std::string& strategy) {
    const Tensor mask = ones_like(gt);
    double s = 0;
    if (strategy == "median")
        s = scale_factor(pred, gt, mask, 1.0);
    else if (strategy == "mean")
        s = scale_factor(pred, gt, mask, 0.0);
    else if (strategy == "fuse")
        s = scale_factor(pred, gt, mask, 0.5);
    else if (strategy == "ada")
        s = ada_search_scale(pred, gt, mask, cap).scale;
    else
        throw ConfigError("align: unknown strategy \"" + strategy + "\"");
    return compute_metrics(scaled_by(pred, s), gt, mask, cap);
}

DepthMetrics average(const std::vector<DepthMetrics>& ms) {
    DepthMetrics acc;
    for (const DepthMetrics& m : ms) {
        acc.abs_rel += m.abs_rel;
        acc.sq_rel += m.sq_rel;
        acc.rmse += m.rmse;
        acc.rmse_log += m.rmse_log;
        acc.delta1 += m.delta1;
        acc.delta2 += m.delta2;
        acc.delta3 += m.delta3;
    }
    const double n = static_cast<double>(ms.size());
    acc.abs_rel /= n;
    acc.sq_rel /= n;
    acc.rmse /= n;
    acc.rmse_log /= n;
    acc.delta1 /= n;
    acc.delta2 /= n;
    acc.delta3 /= n;
    return acc;
}

}  // namespace

DepthModel::DepthModel(ParamRegistry& reg, const NetConfig& cfg) : net_(reg, cfg) {
    for (int k = 0; k < 3; ++k) {
        DispConfig dc;
        dc.c_in = cfg.dec_channels[static_cast<std::size_t>(k)];
        dc.height = cfg.h_in >> k;
        dc.width = cfg.w_in >> k;
        dc.c_embed = cfg.disp_attn[static_cast<std::size_t>(k)].c_embed;
        dc.heads = cfg.disp_attn[static_cast<std::size_t>(k)].heads;
        dc.h_sub = cfg.h_sub(0);
        dc.w_sub = cfg.w_sub(0);
        dc.attention = cfg.att_disp;
        heads_[static_cast<std::size_t>(k)] = DispHead(reg, "disp." + std::to_string(k), dc);
    }
}

std::vector<Var> DepthModel::disparities(Var image, int n_chains) const {
    std::vector<Var> chains = net_.forward(image, n_chains);
    std::vector<Var> out;
    out.reserve(chains.size());
    for (std::size_t k = 0; k < chains.size(); ++k) out.push_back(heads_[k](chains[k]));
    return out;
}

AdamW::AdamW(std::vector<ParamPtr> params, double lr, double weight_decay, double beta1,
             double beta2, double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(static_cast<std::size_t>(params_[i]->value.numel()), 0.0);
        v_[i].assign(static_cast<std::size_t>(params_[i]->value.numel()), 0.0);
    }
}

void AdamW::step(const Gradients& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Param& p = *params_[i];
        if (!p.trainable) continue;
        const Tensor& g = grads.of(p.name);
        const std::int64_t n = p.value.numel();
        for (std::int64_t e = 0; e < n; ++e) {
            const double ge = g.get(e);
            double& m = m_[i][static_cast<std::size_t>(e)];
            double& v = v_[i][static_cast<std::size_t>(e)];
            m = b1_ * m + (1.0 - b1_) * ge;
            v = b2_ * v + (1.0 - b2_) * ge * ge;
            const double theta = p.value.get(e);
            const double update = (m / bc1) / (std::sqrt(v / bc2) + eps_) + wd_ * theta;
            p.value.set(e, theta - lr_ * update);
        }
    }
}

OverfitConfig load_overfit_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root: expected a JSON object");

    static const std::vector<std::string> known{"seed",   "steps",   "lr",    "weight_decay",
                                               "frames", "objects", "near",  "far",
                                               "log_every", "height", "width", "down",
                                               "up",     "ie",      "disp"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown field \"" + key + "\"");
    }

    OverfitConfig cfg;
    auto get_int = [&](const char* key, std::int64_t lo, std::int64_t hi, std::int64_t fallback) {
        if (!j.contains(key)) return fallback;
        if (!j[key].is_number_integer())
            throw ConfigError(std::string(key) + ": expected an integer");
        const std::int64_t v = j[key].get<std::int64_t>();
        if (v < lo || v > hi)
            throw ConfigError(std::string(key) + ": " + std::to_string(v) + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return v;
    };
    auto get_double = [&](const char* key, double lo, double fallback) {
        if (!j.contains(key)) return fallback;
        if (!j[key].is_number()) throw ConfigError(std::string(key) + ": expected a number");
        const double v = j[key].get<double>();
        if (!(v > lo))
            throw ConfigError(std::string(key) + ": must exceed " + std::to_string(lo));
        return v;
    };
    auto get_string = [&](const char* key, const std::string& fallback) {
        if (!j.contains(key)) return fallback;
        if (!j[key].is_string()) throw ConfigError(std::string(key) + ": expected a string");
        return j[key].get<std::string>();
    };

    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer() ||
            (!j["seed"].is_number_unsigned() && j["seed"].get<std::int64_t>() < 0))
            throw ConfigError("seed: expected a non-negative integer");
        cfg.seed = j["seed"].get<std::uint64_t>();
    }
    cfg.steps = static_cast<int>(get_int("steps", 0, 1000000, cfg.steps));
    cfg.frames = static_cast<int>(get_int("frames", 1, 4096, cfg.frames));
    cfg.objects = static_cast<int>(get_int("objects", 0, 1024, cfg.objects));
    cfg.log_every = static_cast<int>(get_int("log_every", 1, 1000000, cfg.log_every));
    cfg.lr = get_double("lr", 0.0, cfg.lr);
    if (j.contains("weight_decay")) {
        if (!j["weight_decay"].is_number())
            throw ConfigError("weight_decay: expected a number");
        cfg.weight_decay = j["weight_decay"].get<double>();
        if (cfg.weight_decay < 0) throw ConfigError("weight_decay: must be non-negative");
    }
    cfg.near = get_double("near", 0.0, cfg.near);
    cfg.far = get_double("far", 0.0, cfg.far);
    if (!(cfg.near < cfg.far)) throw ConfigError("near/far: require near < far");
    cfg.net.h_in = get_int("height", 32, 4096, cfg.net.h_in);
    cfg.net.w_in = get_int("width", 32, 4096, cfg.net.w_in);

    const std::string down = get_string("down", down_kind_name(cfg.net.down));
    if (auto k = parse_down_kind(down))
        cfg.net.down = *k;
    else
        throw ConfigError("down: unknown variant \"" + down + "\"");
    const std::string up = get_string("up", up_kind_name(cfg.net.up));
    if (auto k = parse_up_kind(up))
        cfg.net.up = *k;
    else
        throw ConfigError("up: unknown variant \"" + up + "\"");
    const std::string ie = get_string("ie", ie_mode_name(cfg.net.ie));
    if (auto m = parse_ie_mode(ie))
        cfg.net.ie = *m;
    else
        throw ConfigError("ie: unknown mode \"" + ie + "\"");
    const std::string disp = get_string("disp", cfg.net.att_disp ? "AttDisp" : "Conv2dDisp");
    if (disp == "AttDisp")
        cfg.net.att_disp = true;
    else if (disp == "Conv2dDisp")
        cfg.net.att_disp = false;
    else
        throw ConfigError("disp: unknown head \"" + disp + "\"");

    try {
        validate_config(cfg.net);
    } catch (const ShapeMismatch& e) {
        throw ConfigError(std::string("height/width: ") + e.what());
    }
    return cfg;
}

DepthMetrics eval_strategy(const Tensor& pred, const Tensor& gt, double cap,
                           const std::string& strategy) {
    if (pred.shape() != gt.shape() || pred.shape().size() != 4)
        throw ShapeMismatch(shape_str(gt.shape()), shape_str(pred.shape()));
    const int n = static_cast<int>(pred.shape()[0]);
    std::vector<DepthMetrics> per_frame(static_cast<std::size_t>(n));
    parallel_frames(n, [&](int f) {
        per_frame[static_cast<std::size_t>(f)] =
            strategy_metrics_one_frame(frame_slice(pred, f), frame_slice(gt, f), cap, strategy);
    });
    return average(per_frame);
}

std::array<DepthMetrics, 4> eval_all_strategies(const Tensor& pred, const Tensor& gt, double cap) {
    std::array<DepthMetrics, 4> out;
    for (std::size_t s = 0; s < kAlignStrategies.size(); ++s)
        out[s] = eval_strategy(pred, gt, cap, kAlignStrategies[s]);
    return out;
}

std::pair<Tensor, Tensor> render_frames(const OverfitConfig& cfg, std::uint64_t salt) {
    const std::int64_t n = cfg.frames, h = cfg.net.h_in, w = cfg.net.w_in;
    Tensor images = Tensor::zeros({n, 3, h, w}, Dtype::F32);
    Tensor depths = Tensor::zeros({n, 1, h, w}, Dtype::F32);
    auto img = images.data<float>();
    auto dep = depths.data<float>();
    parallel_frames(static_cast<int>(n), [&](int f) {
        SceneSpec spec;
        spec.seed = cfg.seed * 1000003u + salt * 1000u + static_cast<std::uint64_t>(f);
        spec.height = h;
        spec.width = w;
        spec.objects = cfg.objects;
        spec.near = cfg.near;
        spec.far = cfg.far;
        const Scene scene = synth_scene(spec);
        auto si = scene.image.data<float>();
        auto sd = scene.depth.data<float>();
        std::copy(si.begin(), si.end(), img.begin() + static_cast<std::ptrdiff_t>(f * 3 * h * w));
        std::copy(sd.begin(), sd.end(), dep.begin() + static_cast<std::ptrdiff_t>(f * h * w));
    });
    return {std::move(images), std::move(depths)};
}

OverfitReport overfit_run(const OverfitConfig& cfg, const std::string& out_dir) {
    if (cfg.steps < 0) throw ConfigError("steps: must be non-negative");
    if (cfg.log_every < 1) throw ConfigError("log_every: must be positive");
    try {
        validate_config(cfg.net);
    } catch (const ShapeMismatch& e) {
        throw ConfigError(std::string("height/width: ") + e.what());
    }

    ParamRegistry reg(cfg.seed, Dtype::F32);
    DepthModel model(reg, cfg.net);
    auto [images, depths] = render_frames(cfg);
    AdamW opt(reg.params(), cfg.lr, cfg.weight_decay);

    OverfitReport report;
    auto forward = [&](Graph& g, Var& loss_out) {
        Var x = g.constant(images);
        Var gt = g.constant(depths);
        Var disp = model.disparities(x, 1)[0];
        Var depth = disp_to_depth(disp);
        loss_out = reduce_mean_all(abs(sub(log(depth), log(gt))));
        return depth;
    };

    for (int step = 0; step < cfg.steps; ++step) {
        Graph g;
        Var loss;
        Var depth = forward(g, loss);
        if (step % cfg.log_every == 0)
            report.rows.push_back(
                {step, loss.val().get(0), eval_all_strategies(depth.val(), depths, cfg.far)});
        Gradients grads = g.backward(loss, reg.params());
        opt.step(grads);
    }
    {
        Graph g;
        Var loss;
        Var depth = forward(g, loss);
        report.rows.push_back(
            {cfg.steps, loss.val().get(0), eval_all_strategies(depth.val(), depths, cfg.far)});
    }

    if (!out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        const fs::path csv = fs::path(out_dir) / "training.csv";
        std::ofstream out(csv);
        if (!out) throw std::runtime_error("cannot open " + csv.string() + " for writing");
        out << "step,loss";
        for (const char* s : kAlignStrategies)
            out << "," << s << "_abs_rel," << s << "_sq_rel," << s << "_rmse," << s << "_rmse_log,"
                << s << "_delta1," << s << "_delta2," << s << "_delta3";
        out << "\n" << std::setprecision(17);
        for (const OverfitRow& r : report.rows) {
            out << r.step << "," << r.loss;
            for (const DepthMetrics& m : r.metrics)
                out << "," << m.abs_rel << "," << m.sq_rel << "," << m.rmse << "," << m.rmse_log
                    << "," << m.delta1 << "," << m.delta2 << "," << m.delta3;
            out << "\n";
        }
        report.csv_path = csv.string();
        const fs::path ckpt = fs::path(out_dir) / "model.ckpt";
        save_checkpoint(ckpt.string(), reg);
        report.checkpoint_path = ckpt.string();
    }
    return report;
}

}  // namespace depthkit
