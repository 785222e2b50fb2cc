#include "vcl/jacobian.hpp"

#include <memory>
#include <sstream>
#include <stdexcept>

#include "vcl/errors.hpp"

namespace vcl::jacobian {

std::vector<double> attention_map_1d(std::span<const double> z, double a) {
    const std::size_t n = z.size();
    DenseMatrix logits(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) logits(i, j) = a * z[i] * z[j];
    return matvec(softmax_rows(logits), z);
}

DenseMatrix attn_jacobian_1d(std::span<const double> z, double a) {
    const std::size_t n = z.size();
    if (n == 0) throw std::invalid_argument("attn_jacobian_1d: empty token vector");
    DenseMatrix logits(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) logits(i, j) = a * z[i] * z[j];
    const DenseMatrix p = softmax_rows(logits);
    const std::vector<double> mu = matvec(p, z);
    DenseMatrix jac(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double second = 0.0;
        for (std::size_t k = 0; k < n; ++k) second += p(i, k) * z[k] * z[k];
        const double variance = second - mu[i] * mu[i];
        for (std::size_t j = 0; j < n; ++j) {
            double v = a * z[i] * p(i, j) * (z[j] - mu[i]) + p(i, j);
            if (i == j) v += a * variance;
            jac(i, j) = v;
        }
    }
    return jac;
}

namespace {

void check_general(const DenseMatrix& x, const DenseMatrix& a) {
    if (x.empty()) throw std::invalid_argument("attention: empty token matrix");
    if (a.rows() != x.cols() || a.cols() != x.cols())
        throw std::invalid_argument("attention: bilinear form must be D×D for N×D tokens");
}

// Row i holds u_iᵀ = (X·A·x_i)ᵀ, so scores(i, k) = x_kᵀ·A·x_i.
DenseMatrix scores(const DenseMatrix& x, const DenseMatrix& a) { return matmul_nt(matmul_nt(x, a), x); }

}  // namespace

DenseMatrix attention_map_general(const DenseMatrix& x, const DenseMatrix& a) {
    check_general(x, a);
    return matmul(softmax_rows(scores(x, a)), x);
}

DenseMatrix attn_jacobian_general(const DenseMatrix& x, const DenseMatrix& a) {
    check_general(x, a);
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    const DenseMatrix p = softmax_rows(scores(x, a));
    const DenseMatrix xa = matmul(x, a);       // rows x_kᵀ·A
    const DenseMatrix xat = matmul_nt(x, a);   // rows x_kᵀ·Aᵀ
    DenseMatrix jac(n * d, n * d);
    for (std::size_t i = 0; i < n; ++i) {
        // S_i = diag(p_i) − p_i·p_iᵀ, then L_i = Xᵀ·S_i (D×N).
        DenseMatrix left(d, n);
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t m = 0; m < n; ++m) {
                const double s = (k == m ? p(i, k) : 0.0) - p(i, k) * p(i, m);
                if (s == 0.0) continue;
                for (std::size_t r = 0; r < d; ++r) left(r, m) += x(k, r) * s;
            }
        }
        const DenseMatrix left_xa = matmul(left, xa);  // Xᵀ·S_i·X·A
        for (std::size_t j = 0; j < n; ++j) {
            // Xᵀ·S_i·E_ji·X·Aᵀ = (column j of L_i) ⊗ (row i of X·Aᵀ)
            for (std::size_t r = 0; r < d; ++r) {
                for (std::size_t c = 0; c < d; ++c) {
                    double v = left(r, j) * xat(i, c);
                    if (i == j) v += left_xa(r, c);
                    if (r == c) v += p(i, j);
                    jac(i * d + r, j * d + c) = v;
                }
            }
        }
    }
    return jac;
}

DenseMatrix fd_jacobian(const VectorMap& fn, std::span<const double> x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("fd_jacobian: step must be positive");
    std::vector<double> probe(x.begin(), x.end());
    std::vector<std::vector<double>> cols;
    cols.reserve(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        probe[j] = x[j] + h;
        const auto plus = fn(probe);
        probe[j] = x[j] - h;
        const auto minus = fn(probe);
        probe[j] = x[j];
        std::vector<double> col(plus.size());
        for (std::size_t i = 0; i < col.size(); ++i) col[i] = (plus[i] - minus[i]) / (2.0 * h);
        cols.push_back(std::move(col));
    }
    const std::size_t rows = cols.empty() ? 0 : cols[0].size();
    DenseMatrix jac(rows, x.size());
    for (std::size_t j = 0; j < cols.size(); ++j)
        for (std::size_t i = 0; i < rows; ++i) jac(i, j) = cols[j][i];
    return jac;
}

LinearOperator step_operator(const net::ModelParams& params, std::size_t step, const DenseMatrix& input) {
    auto graph = std::make_shared<net::StepGraph>(net::step_graph(params, step, input));
    const DenseMatrix& out = graph->tape.value(graph->output);
    LinearOperator op;
    op.in_dim = input.size();
    op.out_dim = out.size();
    const std::size_t in_rows = input.rows();
    const std::size_t in_cols = input.cols();
    const std::size_t out_rows = out.rows();
    const std::size_t out_cols = out.cols();
    op.forward = [graph, in_rows, in_cols](std::span<const double> v) {
        graph->tape.clear_tangents();
        graph->tape.set_tangent(graph->input, DenseMatrix(in_rows, in_cols, std::vector<double>(v.begin(), v.end())));
        graph->tape.propagate_tangents();
        return graph->tape.tangent(graph->output).values();
    };
    op.adjoint = [graph, out_rows, out_cols](std::span<const double> y) {
        graph->tape.backward(graph->output, DenseMatrix(out_rows, out_cols, std::vector<double>(y.begin(), y.end())));
        return graph->tape.grad(graph->input).values();
    };
    return op;
}

DenseMatrix step_jacobian(const net::ModelParams& params, std::size_t step, const DenseMatrix& input) {
    const LinearOperator op = step_operator(params, step, input);
    DenseMatrix jac(op.out_dim, op.in_dim);
    std::vector<double> e(op.in_dim, 0.0);
    for (std::size_t c = 0; c < op.in_dim; ++c) {
        e[c] = 1.0;
        const auto col = op.forward(e);
        e[c] = 0.0;
        for (std::size_t r = 0; r < op.out_dim; ++r) jac(r, c) = col[r];
    }
    return jac;
}

BlockJacobian block_jacobian(const net::ModelParams& params, const net::ForwardTrace& trace, std::size_t step) {
    const auto& c = params.config;
    if (step >= trace.steps.size() || step >= net::step_count(c))
        throw std::invalid_argument("block_jacobian: step index out of range");
    if (!net::is_residual_step(c, step))
        throw std::invalid_argument("block_jacobian: embed and head steps are not residual branches");
    const auto& st = trace.steps[step];
    if (st.input.size() > kDenseLimit) {
        std::ostringstream m;
        m << "block_jacobian: flattened state of " << st.input.size() << " exceeds dense limit " << kDenseLimit;
        throw ResourceLimitError(m.str());
    }
    BlockJacobian bj;
    bj.step_index = step;
    bj.kind = st.kind;
    bj.point = st.input;
    bj.j = step_jacobian(params, step, st.input);
    return bj;
}

VectorMap step_function(const net::ModelParams& params, std::size_t step, const DenseMatrix& input_shape) {
    const std::size_t rows = input_shape.rows();
    const std::size_t cols = input_shape.cols();
    return [&params, step, rows, cols](std::span<const double> x) {
        const DenseMatrix in(rows, cols, std::vector<double>(x.begin(), x.end()));
        net::StepGraph g = net::step_graph(params, step, in);
        return g.tape.value(g.output).values();
    };
}

}  // namespace vcl::jacobian
