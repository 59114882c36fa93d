#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "depthkit/gradcheck.hpp"
#include "depthkit/invariants.hpp"
#include "depthkit/io.hpp"
#include "depthkit/train.hpp"

namespace {

using namespace depthkit;

constexpr double kGradTol = 1e-4;
constexpr double kInjectOffset = 1e-2;

struct Options {
    std::uint64_t seed = 7;
    std::string config, out, variant, inject, pred, gt;
    std::string align = "median";
    double cap = kDefaultCap;
    bool seed_given = false;
};

bool selected(const std::string& variant, const std::string& name, const std::string& module) {
    return variant.empty() || module == variant || name.rfind(variant, 0) == 0;
}

std::ofstream open_csv(const std::string& out_dir, const char* file) {
    std::filesystem::create_directories(out_dir);
    const auto path = std::filesystem::path(out_dir) / file;
    std::ofstream csv(path);
    if (!csv) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return csv;
}

int run_gradcheck(const Options& opt) {
    struct Row {
        std::string name, module;
        double err = 0;
    };
    std::vector<Row> rows;
    bool injected = false;
    for (const auto& unit : gradcheck::check_units()) {
        if (!selected(opt.variant, unit.name, unit.module)) continue;
        double fault = 0;
        if (!opt.inject.empty() && unit.name == opt.inject) {
            fault = kInjectOffset;
            injected = true;
        }
        double worst = 0;
        try {
            for (std::uint64_t k = 0; k < 3; ++k)
                worst = std::max(worst, unit.run(opt.seed + k, fault));
        } catch (const std::exception& e) {
            std::cout << "ERROR " << unit.name << ": " << e.what() << "\n";
            worst = std::numeric_limits<double>::infinity();
        }
        rows.push_back({unit.name, unit.module, worst});
    }
    if (rows.empty()) {
        std::cerr << "error: no gradient units match --variant " << opt.variant << "\n";
        return 2;
    }
    if (!opt.inject.empty() && !injected) {
        std::cerr << "error: no gradient unit named " << opt.inject << "\n";
        return 2;
    }

    std::cout << "gradient certification: " << rows.size() << " units, 3 seeds from " << opt.seed
              << ", tolerance " << kGradTol << "\n";
    std::cout << "module      worst_rel_err\n";
    for (const std::string& module : gradcheck::report_modules()) {
        double worst = -1;
        for (const Row& r : rows)
            if (r.module == module) worst = std::max(worst, r.err);
        std::cout << std::left << std::setw(12) << module;
        if (worst < 0)
            std::cout << "n/a (no differentiable units)\n";
        else
            std::cout << std::scientific << std::setprecision(3) << worst << "\n";
    }
    int failures = 0;
    for (const Row& r : rows)
        if (!(r.err <= kGradTol)) {
            ++failures;
            std::cout << "FAIL " << r.name << " (module " << r.module << "): rel err "
                      << std::scientific << std::setprecision(3) << r.err << "\n";
        }
    std::cout << (failures == 0 ? "all gradients certified\n"
                                : std::to_string(failures) + " unit(s) failed\n");

    if (!opt.out.empty()) {
        std::ofstream csv = open_csv(opt.out, "gradcheck.csv");
        csv << "unit,module,max_rel_err,pass\n" << std::setprecision(17);
        for (const Row& r : rows)
            csv << r.name << ',' << r.module << ',' << r.err << ','
                << (r.err <= kGradTol ? 1 : 0) << '\n';
    }
    return failures == 0 ? 0 : 1;
}

int run_invariants(const Options& opt) {
    struct Row {
        std::string name, module, detail;
        bool ok = false;
    };
    std::vector<Row> rows;
    bool injected = false;
    for (const auto& unit : invariants::invariant_units()) {
        if (!selected(opt.variant, unit.name, unit.module)) continue;
        const bool inject = !opt.inject.empty() && unit.name == opt.inject;
        injected = injected || inject;
        std::string detail;
        bool ok = false;
        try {
            ok = unit.run(opt.seed, inject, &detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        rows.push_back({unit.name, unit.module, std::move(detail), ok});
    }
    if (rows.empty()) {
        std::cerr << "error: no invariant units match --variant " << opt.variant << "\n";
        return 2;
    }
    if (!opt.inject.empty() && !injected) {
        std::cerr << "error: no invariant unit named " << opt.inject << "\n";
        return 2;
    }

    int failures = 0;
    for (const Row& r : rows) {
        if (r.ok) {
            std::cout << "PASS " << r.name << "\n";
        } else {
            ++failures;
            std::cout << "FAIL " << r.name << (r.detail.empty() ? "" : ": " + r.detail) << "\n";
        }
    }
    std::cout << rows.size() - failures << "/" << rows.size() << " invariants hold (seed "
              << opt.seed << ")\n";

    if (!opt.out.empty()) {
        std::ofstream csv = open_csv(opt.out, "invariants.csv");
        csv << "unit,module,pass,detail\n";
        for (const Row& r : rows) {
            std::string quoted = r.detail;
            std::replace(quoted.begin(), quoted.end(), ',', ';');
            csv << r.name << ',' << r.module << ',' << (r.ok ? 1 : 0) << ',' << quoted << '\n';
        }
    }
    return failures == 0 ? 0 : 1;
}

void apply_variant(OverfitConfig& cfg, const std::string& spec) {
    std::size_t start = 0;
    while (start < spec.size()) {
        std::size_t end = spec.find(',', start);
        if (end == std::string::npos) end = spec.size();
        const std::string item = spec.substr(start, end - start);
        start = end + 1;
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("variant item \"" + item + "\": expected axis=value");
        const std::string axis = item.substr(0, eq), value = item.substr(eq + 1);
        if (axis == "down") {
            if (auto k = parse_down_kind(value))
                cfg.net.down = *k;
            else
                throw ConfigError("variant down: unknown \"" + value + "\"");
        } else if (axis == "up") {
            if (auto k = parse_up_kind(value))
                cfg.net.up = *k;
            else
                throw ConfigError("variant up: unknown \"" + value + "\"");
        } else if (axis == "ie") {
            if (auto m = parse_ie_mode(value))
                cfg.net.ie = *m;
            else
                throw ConfigError("variant ie: unknown \"" + value + "\"");
        } else if (axis == "disp") {
            if (value == "AttDisp")
                cfg.net.att_disp = true;
            else if (value == "Conv2dDisp")
                cfg.net.att_disp = false;
            else
                throw ConfigError("variant disp: unknown \"" + value + "\"");
        } else {
            throw ConfigError("variant axis \"" + axis + "\": expected down, up, ie, or disp");
        }
    }
}

int run_overfit(const Options& opt) {
    OverfitConfig cfg = opt.config.empty() ? OverfitConfig{} : load_overfit_config(opt.config);
    if (opt.seed_given) cfg.seed = opt.seed;
    if (!opt.variant.empty()) apply_variant(cfg, opt.variant);

    std::cout << "overfit: " << cfg.frames << " frames at " << cfg.net.h_in << "x" << cfg.net.w_in
              << ", " << cfg.steps << " steps, seed " << cfg.seed << ", variant "
              << down_kind_name(cfg.net.down) << "+" << up_kind_name(cfg.net.up) << "+"
              << ie_mode_name(cfg.net.ie) << "+" << (cfg.net.att_disp ? "AttDisp" : "Conv2dDisp")
              << "\n";
    const OverfitReport report = overfit_run(cfg, opt.out);

    std::cout << "step    loss        abs_rel(median)  abs_rel(ada)\n" << std::fixed;
    for (const OverfitRow& row : report.rows)
        std::cout << std::left << std::setw(8) << row.step << std::setprecision(6) << std::setw(12)
                  << row.loss << std::setw(17) << row.metrics[0].abs_rel << row.metrics[3].abs_rel
                  << "\n";
    const OverfitRow& last = report.rows.back();
    for (std::size_t s = 0; s < kAlignStrategies.size(); ++s) {
        const DepthMetrics& m = last.metrics[s];
        std::cout << "final " << std::left << std::setw(7) << kAlignStrategies[s]
                  << std::setprecision(6) << " abs_rel " << m.abs_rel << "  rmse " << m.rmse
                  << "  delta1 " << m.delta1 << "\n";
    }
    if (!report.csv_path.empty())
        std::cout << "wrote " << report.csv_path << " and " << report.checkpoint_path << "\n";
    return 0;
}

Tensor as_frames(Tensor t) {
    Shape s = t.shape();
    if (s.size() == 2) return t.reshaped({1, 1, s[0], s[1]});
    if (s.size() == 3) return t.reshaped({s[0], 1, s[1], s[2]});
    return t;
}

int run_eval(const Options& opt) {
    const Tensor pred = as_frames(read_tensor(opt.pred));
    const Tensor gt = as_frames(read_tensor(opt.gt));
    const DepthMetrics m = eval_strategy(pred, gt, opt.cap, opt.align);

    std::cout << std::fixed << std::setprecision(6) << "align " << opt.align << ", cap " << opt.cap
              << " over " << pred.shape()[0] << " frame(s)\n"
              << "abs_rel " << m.abs_rel << "  sq_rel " << m.sq_rel << "  rmse " << m.rmse
              << "  rmse_log " << m.rmse_log << "\n"
              << "delta1 " << m.delta1 << "  delta2 " << m.delta2 << "  delta3 " << m.delta3
              << "\n";

    const std::string header = "align,cap,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3";
    auto write_row = [&](std::ostream& os) {
        os << std::defaultfloat << std::setprecision(17) << opt.align << ',' << opt.cap << ','
           << m.abs_rel << ',' << m.sq_rel << ',' << m.rmse << ',' << m.rmse_log << ','
           << m.delta1 << ',' << m.delta2 << ',' << m.delta3 << '\n';
    };
    if (opt.out.empty()) {
        std::cout << header << "\n";
        write_row(std::cout);
    } else {
        std::ofstream csv = open_csv(opt.out, "eval.csv");
        csv << header << '\n';
        write_row(csv);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"depth network property harness"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", opt.seed, "base RNG seed");
        sub->add_option("--out", opt.out, "output directory for CSV reports");
    };
    auto add_suite = [&](CLI::App* sub) {
        add_common(sub);
        sub->add_option("--variant", opt.variant, "restrict to one module or unit-name prefix");
        sub->add_option("--inject-fault", opt.inject, "corrupt the named unit (negative control)")
            ->group("");
    };

    CLI::App* grad = app.add_subcommand("gradcheck", "certify analytic gradients against finite differences");
    add_suite(grad);
    CLI::App* inv = app.add_subcommand("invariants", "run the structural property suites");
    add_suite(inv);
    CLI::App* fit = app.add_subcommand("overfit", "train on synthetic frames and report metrics");
    add_common(fit);
    fit->add_option("--config", opt.config, "JSON training config")->check(CLI::ExistingFile);
    fit->add_option("--variant", opt.variant,
                    "override variant axes, e.g. down=MaxPool,up=BIU,ie=NoIE,disp=Conv2dDisp");
    CLI::App* ev = app.add_subcommand("eval", "score a prediction tensor against ground truth");
    ev->add_option("--pred", opt.pred, "predicted depth tensor file")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--gt", opt.gt, "ground-truth depth tensor file")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--cap", opt.cap, "depth cap in meters");
    ev->add_option("--align", opt.align, "scale alignment strategy")
        ->check(CLI::IsMember(std::vector<std::string>(kAlignStrategies.begin(),
                                                       kAlignStrategies.end())));
    ev->add_option("--out", opt.out, "output directory for eval.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        (void)app.exit(e);
        return 2;
    }
    opt.seed_given = grad->count("--seed") + inv->count("--seed") + fit->count("--seed") > 0;

    try {
        if (app.got_subcommand(grad)) return run_gradcheck(opt);
        if (app.got_subcommand(inv)) return run_invariants(opt);
        if (app.got_subcommand(fit)) return run_overfit(opt);
        return run_eval(opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
