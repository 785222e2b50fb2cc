#pragma once

// Small dynamic tape over DenseMatrix values. Every op records a reverse
// (vector-Jacobian) rule and a forward (Jacobian-vector) rule, so one graph
// serves input/parameter gradients as well as matrix-free Jv and Jᵀv products.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vcl/linalg.hpp"

namespace vcl::ad {

struct Var {
    std::uint32_t id = UINT32_MAX;
    bool valid() const noexcept { return id != UINT32_MAX; }
};

class Tape {
public:
    /// Leaf whose gradient is accumulated by backward().
    Var variable(DenseMatrix value);
    /// Leaf treated as a fixed input; it has no gradient and no tangent.
    Var constant(DenseMatrix value);

    const DenseMatrix& value(Var v) const { return nodes_[v.id].value; }
    /// Gradient after backward(); a zero matrix of the right shape if untouched.
    DenseMatrix grad(Var v) const;
    /// Tangent after propagate_tangents(); zero matrix if none reached the node.
    DenseMatrix tangent(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    Var add(Var a, Var b);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    /// x (R×C) plus a 1×C row broadcast over all rows.
    Var add_row(Var x, Var bias);
    Var scale(Var x, double s);
    Var layer_norm_rows(Var x, Var gamma, Var beta, double eps);
    Var softmax_rows(Var x);
    Var gelu(Var x);
    /// out.data[i] = x.data[index[i]]; out has shape rows×cols.
    Var gather(Var x, std::vector<std::uint32_t> index, std::size_t rows, std::size_t cols);
    Var slice_rows(Var x, std::size_t first, std::size_t count);
    Var slice_cols(Var x, std::size_t first, std::size_t count);
    Var concat_rows(std::span<const Var> parts);
    Var concat_cols(std::span<const Var> parts);
    Var mean_rows(Var x);
    /// Token-axis patch matrix for a 1-D "same" convolution of odd width k:
    /// row n holds x[n-k/2 .. n+k/2] (zero padded), tap-major then channel.
    Var im2col_tokens(Var x, std::size_t k);
    /// Cross-entropy of a 1×C logit row against label; returns 1×1.
    Var cross_entropy(Var logits, std::size_t label);

    /// Reverse sweep from `out` seeded with `seed` (same shape as out).
    /// Clears all gradients first.
    void backward(Var out, const DenseMatrix& seed);
    void backward(Var out);

    /// Forward-mode sweep. Tangents of variable leaves are taken from `seed`
    /// (missing entries mean zero); every other leaf has zero tangent.
    void set_tangent(Var leaf, DenseMatrix t);
    void clear_tangents();
    void propagate_tangents();

private:
    struct Node {
        DenseMatrix value;
        DenseMatrix grad;
        DenseMatrix tangent;
        bool has_grad = false;
        bool has_tangent = false;
        bool active = false;  // depends on some variable leaf
        std::vector<std::uint32_t> inputs;
        std::function<void(Tape&, const Node&)> vjp;
        std::function<DenseMatrix(const Tape&, const Node&)> jvp;
    };

    Var push(DenseMatrix value, std::vector<std::uint32_t> inputs,
             std::function<void(Tape&, const Node&)> vjp,
             std::function<DenseMatrix(const Tape&, const Node&)> jvp);
    void accumulate(std::uint32_t id, const DenseMatrix& g);
    const DenseMatrix* tan(std::uint32_t id) const;

    std::vector<Node> nodes_;
};

}  // namespace vcl::ad
