#include "depthkit/param.hpp"

#include <cmath>
#include <stdexcept>

namespace depthkit {

ParamPtr ParamRegistry::create(const std::string& name, Shape shape, Init init, bool trainable) {
    if (index_.count(name)) throw std::invalid_argument("duplicate param name: " + name);
    Tensor value;
    switch (init.kind) {
        case Init::Kind::Zero:
            value = Tensor::zeros(shape, dtype_);
            break;
        case Init::Kind::One:
            value = Tensor::ones(shape, dtype_);
            break;
        case Init::Kind::Gaussian:
            value = rng_.normal_tensor(shape, 0.0, init.sigma, dtype_);
            break;
        case Init::Kind::UniformFan: {
            const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(1, init.fan_in)));
            value = rng_.uniform_tensor(shape, -bound, bound, dtype_);
            break;
        }
    }
    auto p = std::make_shared<Param>(Param{name, std::move(value), init, trainable});
    index_[name] = params_.size();
    params_.push_back(p);
    return p;
}

ParamPtr ParamRegistry::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return nullptr;
    return params_[it->second];
}

std::int64_t ParamRegistry::total_elements() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
}

}  // namespace depthkit
