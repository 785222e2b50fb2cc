#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "vcl/linalg.hpp"
#include "vcl/net.hpp"

namespace vcl::jacobian {

/// Largest flattened token state assembled densely.
inline constexpr std::size_t kDenseLimit = 512;

/// f(z) = softmax(a·z·zᵀ)·z for a token column z.
std::vector<double> attention_map_1d(std::span<const double> z, double a);

/// Jacobian of attention_map_1d:
///   J_ij = a·[z_i·p_j(u_i)·(z_j − μ_i) + δ_ij·σ_i²] + P_ij
/// with P = softmax_rows(a·zzᵀ), μ = P·z and σ_i² the row-i variance of z under P.
/// In matrix form a·{diag(z)·P·diag(z) − diag(z)·diag(μ)·P + diag(σ²)} + P.
DenseMatrix attn_jacobian_1d(std::span<const double> z, double a);

/// f(X) = softmax(X·Aᵀ·Xᵀ)·X, i.e. row i attends with logits u_i = X·A·x_i.
/// For a model head with query/key maps Wq, Wk and temperature τ this is
/// A = τ·Wk·Wqᵀ.
DenseMatrix attention_map_general(const DenseMatrix& x, const DenseMatrix& a);

/// (N·D)×(N·D) Jacobian of attention_map_general, token-major flattening.
/// Block (i, j) = Xᵀ·(diag(p_i) − p_i·p_iᵀ)·[X·A·δ_ij + E_ji·X·Aᵀ] + P_ij·I_D.
DenseMatrix attn_jacobian_general(const DenseMatrix& x, const DenseMatrix& a);

using VectorMap = std::function<std::vector<double>(std::span<const double>)>;

/// Central differences: column j = (fn(x + h·e_j) − fn(x − h·e_j)) / 2h.
DenseMatrix fd_jacobian(const VectorMap& fn, std::span<const double> x, double h);

struct BlockJacobian {
    std::size_t step_index = 0;
    net::SublayerKind kind = net::SublayerKind::attn;
    DenseMatrix j;      ///< (S·D)×(S·D) Jacobian of the residual branch only
    DenseMatrix point;  ///< token state the Jacobian was evaluated at
};

/// Dense Jacobian of the residual branch F at the trace's recorded input,
/// assembled column by column from forward-mode products.
/// Throws std::invalid_argument for embed/head or out-of-range steps and
/// ResourceLimitError when S·D exceeds kDenseLimit.
BlockJacobian block_jacobian(const net::ModelParams& params, const net::ForwardTrace& trace, std::size_t step);

/// Matrix-free Jacobian of any step (embed, residual branch or head) at
/// `input`: forward-mode for J·v, reverse-mode for Jᵀ·v.
LinearOperator step_operator(const net::ModelParams& params, std::size_t step, const DenseMatrix& input);

/// Dense Jacobian of any step assembled from step_operator columns.
DenseMatrix step_jacobian(const net::ModelParams& params, std::size_t step, const DenseMatrix& input);

/// The step as a plain vector map on the flattened input (for difference oracles).
VectorMap step_function(const net::ModelParams& params, std::size_t step, const DenseMatrix& input_shape);

}  // namespace vcl::jacobian
