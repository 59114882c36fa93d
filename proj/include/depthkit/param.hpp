#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "depthkit/tensor.hpp"

namespace depthkit {

/// Initialization policy for a learnable tensor.
struct Init {
    enum class Kind { Zero, One, Gaussian, UniformFan } kind = Kind::Zero;
    double sigma = 0.02;        // Gaussian
    std::int64_t fan_in = 1;    // UniformFan: U(-b, b), b = sqrt(1 / fan_in)

    static Init zero() { return {Kind::Zero, 0.0, 1}; }
    static Init one() { return {Kind::One, 0.0, 1}; }
    static Init gaussian(double sigma) { return {Kind::Gaussian, sigma, 1}; }
    static Init uniform_fan(std::int64_t fan_in) { return {Kind::UniformFan, 0.0, fan_in}; }
};

struct Param {
    std::string name;
    Tensor value;
    Init init;
    bool trainable = true;
};

using ParamPtr = std::shared_ptr<Param>;

/// Owns every Param of a model. Names are unique; creation order plus the
/// seed fully determines all initial values.
class ParamRegistry {
public:
    explicit ParamRegistry(std::uint64_t seed, Dtype dtype)
        : rng_(seed), dtype_(dtype) {}

    ParamPtr create(const std::string& name, Shape shape, Init init, bool trainable = true);

    const std::vector<ParamPtr>& params() const { return params_; }
    ParamPtr find(const std::string& name) const;
    Dtype dtype() const { return dtype_; }
    Rng& rng() { return rng_; }

    std::int64_t total_elements() const;

private:
    Rng rng_;
    Dtype dtype_;
    std::vector<ParamPtr> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline std::string scoped(const std::string& scope, const std::string& leaf) {
    return scope.empty() ? leaf : scope + "." + leaf;
}

}  // namespace depthkit
