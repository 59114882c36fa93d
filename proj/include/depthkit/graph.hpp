#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "depthkit/param.hpp"
#include "depthkit/tensor.hpp"

namespace depthkit {

struct NonScalarLoss : std::runtime_error {
    explicit NonScalarLoss(const std::string& got)
        : std::runtime_error("backward requires a scalar loss, got shape " + got) {}
};

class Graph;

/// Handle to one recorded node. Cheap to copy; valid for the lifetime of
/// the graph that produced it.
struct Var {
    Graph* g = nullptr;
    std::int32_t id = -1;

    bool valid() const { return g != nullptr && id >= 0; }
    const Tensor& val() const;
    const Shape& shape() const { return val().shape(); }
    Dtype dtype() const { return val().dtype(); }
};

class BackwardCtx;
using BackwardFn = std::function<void(BackwardCtx&)>;

/// Reverse-mode gradients of one backward() call.
class Gradients {
public:
    /// Gradient of a named trainable param (zeros if unreachable from the loss).
    const Tensor& of(const std::string& param_name) const;
    bool has(const std::string& param_name) const { return by_name_.count(param_name) > 0; }
    /// Gradient of an arbitrary node (zeros_like if none was accumulated).
    Tensor of(Var v) const;

private:
    friend class Graph;
    std::unordered_map<std::string, Tensor> by_name_;
    std::vector<std::optional<Tensor>> node_grads_;
    std::vector<Shape> node_shapes_;
    std::vector<Dtype> node_dtypes_;
};

/// Recorded computation tape. Nodes are appended in execution order, so the
/// record order is already a topological order; backward walks it in reverse.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    /// Injects a param as a leaf; repeated calls with the same param reuse one node.
    Var param(const ParamPtr& p);

    Var emit(Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    /// dLoss/dParam for every param in `params`; unreachable trainable params
    /// get zero gradients. Input leaves created with requires_grad also receive
    /// gradients, retrievable through Gradients::of(Var).
    Gradients backward(Var loss, std::span<const ParamPtr> params);

private:
    friend class BackwardCtx;
    struct Node {
        Tensor value;
        std::vector<std::int32_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        const Param* source_param = nullptr;
    };
    // Deque so references handed out by value()/val() survive later emits.
    std::deque<Node> nodes_;
    std::unordered_map<const Param*, std::int32_t> param_nodes_;
};

/// Passed to each node's backward function.
class BackwardCtx {
public:
    const Tensor& grad_out() const { return grad_out_; }
    const Tensor& output() const { return g_.nodes_[static_cast<std::size_t>(node_)].value; }
    const Tensor& input(std::size_t i) const;
    std::size_t input_count() const { return g_.nodes_[static_cast<std::size_t>(node_)].inputs.size(); }
    bool input_needs_grad(std::size_t i) const;
    void add_input_grad(std::size_t i, Tensor delta);

private:
    friend class Graph;
    BackwardCtx(Graph& g, std::int32_t node, const Tensor& grad_out,
                std::vector<std::optional<Tensor>>& grads)
        : g_(g), node_(node), grad_out_(grad_out), grads_(grads) {}

    Graph& g_;
    std::int32_t node_;
    const Tensor& grad_out_;
    std::vector<std::optional<Tensor>>& grads_;
};

}  // namespace depthkit
