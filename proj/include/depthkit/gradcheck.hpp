#pragma once

#include <functional>
#include <string>
#include <vector>

#include "depthkit/graph.hpp"
#include "depthkit/ops.hpp"

namespace depthkit::gradcheck {

struct FdOptions {
    double step = 1e-5;
    std::int64_t budget = 0;  // max sampled (param, element) pairs; 0 = exhaustive
    double fault = 0;         // offset added to every analytic gradient (negative controls)
};

struct FdReport {
    double max_rel_err = 0;
    std::string worst;  // "param[elem]" attaining the max
};

/// Central-difference certification of d(build)/d(param) for every param in
/// the registry: rel = |analytic - fd| / max(|fd|, 1). `build` must record a
/// scalar loss from the registry's current values; it is re-evaluated twice
/// per probed element.
FdReport check(ParamRegistry& reg, const std::function<Var(Graph&)>& build, const FdOptions& opt,
               Rng& pick);

/// Redraws every param uniformly from [lo, hi] so zero-init gates open and
/// every branch carries gradient.
void randomize_params(ParamRegistry& reg, Rng& rng, double lo = -0.5, double hi = 0.5);

/// One named certification subject. `run` returns the worst relative error
/// across the subject's params for the given seed; `fault` perturbs the
/// analytic side and must drive the error above any honest threshold.
struct CheckUnit {
    std::string name;    // "<module>.<subject>"
    std::string module;
    std::function<double(std::uint64_t seed, double fault)> run;
};

/// Every primitive op and every differentiable module, each exactly once.
const std::vector<CheckUnit>& check_units();

/// Modules a report must enumerate: those with check units plus the
/// gradient-free ones (listed with no units).
const std::vector<std::string>& report_modules();

}  // namespace depthkit::gradcheck
