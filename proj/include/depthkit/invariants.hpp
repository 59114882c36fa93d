#pragma once

#include <functional>
#include <string>
#include <vector>

namespace depthkit::invariants {

/// One named property suite. `run` returns true when the property holds for
/// the seed; with `inject_fault` the unit corrupts its own subject first, so
/// a healthy checker must return false (negative control).
struct InvariantUnit {
    std::string name;    // "<module>.<property>"
    std::string module;
    std::function<bool(std::uint64_t seed, bool inject_fault, std::string* detail)> run;
};

const std::vector<InvariantUnit>& invariant_units();

}  // namespace depthkit::invariants
