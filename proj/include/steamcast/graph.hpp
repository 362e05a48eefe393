#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "steamcast/tensor.hpp"
#include "steamcast/tensor_ops.hpp"

namespace steamcast {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Recorded-graph reverse-mode differentiation. Ops append nodes in execution
// order, so reverse id order is a reverse topological order and the backward
// pass visits each node exactly once. All kernels use fixed reduction orders;
// a tape replay is bit-identical.
class Tape {
public:
    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Leaf backed by an external parameter tensor; memoized per pointer so
    // gradients can be looked up by parameter after backward().
    Var param(Tensor* p);

    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // a x b^T
    Var add(Var a, Var b);
    // x: [b,d] plus a row vector (numel d) broadcast over rows
    Var add_row(Var x, Var row);
    Var mul(Var a, Var b);
    Var mul_const(Var x, Tensor factor);
    Var scale(Var x, real c);
    Var gelu(Var x);
    Var layer_norm(Var x, Var gain, Var bias);
    Var softmax_rows(Var x);
    // x: [B,c_in,H,W], w: [c_out,c_in,k,k], bias: [c_out] (optional)
    Var conv2d(Var x, Var w, Var bias, int stride);
    Var slice_cols(Var x, int c0, int c1);
    Var concat_cols(const std::vector<Var>& xs);
    Var concat_rows(const std::vector<Var>& xs);
    // Bijective gather: out.data[i] = x.data[map[i]].
    Var reindex(Var x, std::vector<int> map, std::vector<int> out_shape);
    Var sum(Var x);
    Var mean(Var x);
    // mean((x - target)^2) against a constant target
    Var mse_against(Var x, Tensor target);

    void backward(Var loss);

    const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    // Zero tensor if the node never received a gradient.
    Tensor grad(Var v) const;
    const Tensor* grad_of(const Tensor* p) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::function<void(Tape&)> backprop;
    };

    Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop);
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
    bool needs(Var v) const { return node(v).requires_grad; }
    // Accumulate into v's gradient buffer, allocating on first touch.
    Tensor& grad_buf(Var v);
    void accum(Var v, const Tensor& g);

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, int> param_vars_;
    bool backward_done_ = false;
};

// Finite-difference verification of the backward pass.
struct GradCheckOptions {
    real rel_tol = 1e-3;
    int coords_per_param = 32;
    real fd_step = 1e-4;
    std::uint64_t seed = 0;
};

struct GradCheckEntry {
    std::string param;
    long coord = -1;
    real analytic = 0.0;
    real fd = 0.0;
    real rel_err = 0.0;
};

struct GradCheckReport {
    bool pass = true;
    GradCheckEntry worst;
    long coords_checked = 0;
    // Throws GradCheckError naming the worst parameter when the check failed.
    void require() const;
};

using LossBuilder = std::function<Var(Tape&)>;
using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// Rebuilds the loss via `build` (which must read parameters through
// Tape::param) and compares analytic gradients against central differences
// at >= coords_per_param sampled coordinates per parameter.
GradCheckReport grad_check(const LossBuilder& build, const NamedParams& params,
                           const GradCheckOptions& opt = {});

}  // namespace steamcast
