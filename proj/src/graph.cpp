#include "depthkit/graph.hpp"

#include <stdexcept>

namespace depthkit {

namespace {

template <typename T>
void add_into(Tensor& acc, const Tensor& delta) {
    auto a = acc.data<T>();
    auto d = delta.data<T>();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += d[i];
}

}  // namespace

const Tensor& Var::val() const {
    if (!valid()) throw std::logic_error("use of an invalid Var");
    return g->value(*this);
}

const Tensor& Gradients::of(const std::string& param_name) const {
    auto it = by_name_.find(param_name);
    if (it == by_name_.end()) throw std::out_of_range("no gradient recorded for param: " + param_name);
    return it->second;
}

Tensor Gradients::of(Var v) const {
    const auto idx = static_cast<std::size_t>(v.id);
    if (idx >= node_grads_.size()) throw std::out_of_range("node id outside of backward range");
    if (node_grads_[idx].has_value()) return *node_grads_[idx];
    return Tensor::zeros(node_shapes_[idx], node_dtypes_[idx]);
}

Var Graph::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Graph::param(const ParamPtr& p) {
    auto it = param_nodes_.find(p.get());
    if (it != param_nodes_.end()) return Var{this, it->second};
    Var v = leaf(p->value, p->trainable);
    nodes_[static_cast<std::size_t>(v.id)].source_param = p.get();
    param_nodes_[p.get()] = v.id;
    return v;
}

Var Graph::emit(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.inputs.reserve(inputs.size());
    bool needs = false;
    for (const Var& in : inputs) {
        if (in.g != this) throw std::logic_error("emit input belongs to a different graph");
        n.inputs.push_back(in.id);
        needs = needs || nodes_[static_cast<std::size_t>(in.id)].requires_grad;
    }
    n.requires_grad = needs;
    n.backward = needs ? std::move(backward) : nullptr;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Tensor& Graph::value(Var v) const {
    if (v.g != this) throw std::logic_error("Var belongs to a different graph");
    return nodes_.at(static_cast<std::size_t>(v.id)).value;
}

Gradients Graph::backward(Var loss, std::span<const ParamPtr> params) {
    const Tensor& lv = value(loss);
    if (lv.numel() != 1) throw NonScalarLoss(shape_str(lv.shape()));

    Gradients out;
    out.node_grads_.resize(nodes_.size());
    out.node_shapes_.reserve(nodes_.size());
    out.node_dtypes_.reserve(nodes_.size());
    for (const Node& n : nodes_) {
        out.node_shapes_.push_back(n.value.shape());
        out.node_dtypes_.push_back(n.value.dtype());
    }

    out.node_grads_[static_cast<std::size_t>(loss.id)] = Tensor::ones(lv.shape(), lv.dtype());

    for (std::int32_t id = loss.id; id >= 0; --id) {
        const auto idx = static_cast<std::size_t>(id);
        Node& n = nodes_[idx];
        if (!n.requires_grad || !out.node_grads_[idx].has_value() || !n.backward) continue;
        BackwardCtx ctx(*this, id, *out.node_grads_[idx], out.node_grads_);
        n.backward(ctx);
    }

    for (const ParamPtr& p : params) {
        if (!p->trainable) continue;
        auto it = param_nodes_.find(p.get());
        if (it != param_nodes_.end() &&
            out.node_grads_[static_cast<std::size_t>(it->second)].has_value()) {
            out.by_name_[p->name] = *out.node_grads_[static_cast<std::size_t>(it->second)];
        } else {
            out.by_name_[p->name] = Tensor::zeros(p->value.shape(), p->value.dtype());
        }
    }
    return out;
}

const Tensor& BackwardCtx::input(std::size_t i) const {
    const auto& node = g_.nodes_[static_cast<std::size_t>(node_)];
    return g_.nodes_[static_cast<std::size_t>(node.inputs.at(i))].value;
}

bool BackwardCtx::input_needs_grad(std::size_t i) const {
    const auto& node = g_.nodes_[static_cast<std::size_t>(node_)];
    return g_.nodes_[static_cast<std::size_t>(node.inputs.at(i))].requires_grad;
}

void BackwardCtx::add_input_grad(std::size_t i, Tensor delta) {
    const auto& node = g_.nodes_[static_cast<std::size_t>(node_)];
    const auto target = static_cast<std::size_t>(node.inputs.at(i));
    const Tensor& tv = g_.nodes_[target].value;
    if (delta.shape() != tv.shape())
        throw ShapeMismatch(shape_str(tv.shape()), shape_str(delta.shape()));
    auto& slot = grads_[target];
    if (!slot.has_value()) {
        slot = std::move(delta);
        return;
    }
    if (tv.dtype() == Dtype::F32)
        add_into<float>(*slot, delta);
    else
        add_into<double>(*slot, delta);
}

}  // namespace depthkit
