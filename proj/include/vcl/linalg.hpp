#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace vcl {

/// Row-major dense real matrix. Used for token states, weights and Jacobians.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static DenseMatrix identity(std::size_t n);
    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static DenseMatrix row_vector(std::span<const double> v);
    static DenseMatrix column_vector(std::span<const double> v);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool same_shape(const DenseMatrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const noexcept;

    DenseMatrix transpose() const;
    void fill(double v);

    DenseMatrix& operator+=(const DenseMatrix& o);
    DenseMatrix& operator-=(const DenseMatrix& o);
    DenseMatrix& operator*=(double s);

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator*(DenseMatrix a, double s);
DenseMatrix operator*(double s, DenseMatrix a);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// aᵀ·b without forming the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
/// a·bᵀ without forming the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x);
std::vector<double> matvec_t(const DenseMatrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double norm_inf(std::span<const double> v);
double frobenius(const DenseMatrix& m);

/// Row-wise softmax with max subtraction. Throws std::invalid_argument on empty input.
DenseMatrix softmax_rows(const DenseMatrix& m);

/// gamma * (v - mean) / sqrt(var + eps) + beta with population variance.
std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gamma,
                               std::span<const double> beta, double eps);

struct InducedNorms {
    double norm1 = 0.0;     ///< max column absolute sum
    double norm_inf = 0.0;  ///< max row absolute sum
    /// sqrt(norm1 * norm_inf), an upper bound on the spectral norm.
    double spectral_bound() const;
};

InducedNorms induced_norms(const DenseMatrix& j);

/// Linear operator given only by its products: forward maps R^in -> R^out,
/// adjoint maps R^out -> R^in.
struct LinearOperator {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::function<std::vector<double>(std::span<const double>)> forward;
    std::function<std::vector<double>(std::span<const double>)> adjoint;
};

struct PowerIterationOptions {
    double tol = 1e-12;
    std::size_t max_iter = 20000;
    std::uint64_t seed = 0x5eed5eedULL;
};

/// Largest singular value by power iteration on JᵀJ from a seeded start vector.
/// Converged when successive estimates differ by less than tol.
/// Throws ConvergenceError (carrying the best estimate) after max_iter.
double sigma_max(const LinearOperator& op, const PowerIterationOptions& opts = {});
double sigma_max(const DenseMatrix& j, double tol = 1e-12, std::size_t max_iter = 20000);

/// Deterministic unit start vector for power iteration.
std::vector<double> seeded_unit_vector(std::size_t n, std::uint64_t seed);

}  // namespace vcl
