#include "vcl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "vcl/errors.hpp"

namespace vcl {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("DenseMatrix: data length does not match rows*cols");
    }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw std::invalid_argument("DenseMatrix::from_rows: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return DenseMatrix(r, c, std::move(data));
}

DenseMatrix DenseMatrix::row_vector(std::span<const double> v) {
    return DenseMatrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

DenseMatrix DenseMatrix::column_vector(std::span<const double> v) {
    return DenseMatrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

bool DenseMatrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

DenseMatrix DenseMatrix::transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

void DenseMatrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& o) {
    if (!same_shape(o)) throw std::invalid_argument("DenseMatrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& o) {
    if (!same_shape(o)) throw std::invalid_argument("DenseMatrix -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

DenseMatrix& DenseMatrix::operator*=(double s) {
    for (auto& x : data_) x *= s;
    return *this;
}

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
DenseMatrix operator*(DenseMatrix a, double s) { return a *= s; }
DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    DenseMatrix out(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* o = out.data().data() + i * n;
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* bk = b.data().data() + k * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += aik * bk[j];
        }
    }
    return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: row count mismatch");
    DenseMatrix out(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* bk = b.data().data() + k * n;
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            double* o = out.data().data() + i * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += aki * bk[j];
        }
    }
    return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: column count mismatch");
    DenseMatrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
    return out;
}

std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
    std::vector<double> y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
    return y;
}

std::vector<double> matvec_t(const DenseMatrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) throw std::invalid_argument("matvec_t: dimension mismatch");
    std::vector<double> y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * x[i];
    }
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double norm_inf(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double frobenius(const DenseMatrix& m) { return norm2(m.data()); }

DenseMatrix softmax_rows(const DenseMatrix& m) {
    if (m.empty()) throw std::invalid_argument("softmax_rows: empty matrix");
    DenseMatrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto in = m.row(r);
        auto o = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double s = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp(in[c] - mx);
            s += o[c];
        }
        for (auto& x : o) x /= s;
    }
    return out;
}

std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gamma,
                               std::span<const double> beta, double eps) {
    if (v.size() != gamma.size() || v.size() != beta.size()) {
        throw std::invalid_argument("layer_norm: length mismatch between v, gamma and beta");
    }
    if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
    if (v.empty()) return {};
    const double n = static_cast<double>(v.size());
    // Shifted by v[0] so a constant vector gives an exactly zero numerator.
    double shift = 0.0;
    for (double x : v) shift += x - v[0];
    const double mean = v[0] + shift / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = gamma[i] * (v[i] - mean) * inv + beta[i];
    return out;
}

double InducedNorms::spectral_bound() const { return std::sqrt(norm1 * norm_inf); }

InducedNorms induced_norms(const DenseMatrix& j) {
    if (j.empty()) throw std::invalid_argument("induced_norms: empty matrix");
    InducedNorms n;
    std::vector<double> col(j.cols(), 0.0);
    for (std::size_t r = 0; r < j.rows(); ++r) {
        double row_sum = 0.0;
        const auto row = j.row(r);
        for (std::size_t c = 0; c < j.cols(); ++c) {
            row_sum += std::abs(row[c]);
            col[c] += std::abs(row[c]);
        }
        n.norm_inf = std::max(n.norm_inf, row_sum);
    }
    n.norm1 = *std::max_element(col.begin(), col.end());
    return n;
}

std::vector<double> seeded_unit_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    const double nv = norm2(v);
    for (auto& x : v) x /= nv;
    return v;
}

double sigma_max(const LinearOperator& op, const PowerIterationOptions& opts) {
    if (op.in_dim == 0 || op.out_dim == 0) throw std::invalid_argument("sigma_max: empty operator");
    if (!(opts.tol > 0.0)) throw std::invalid_argument("sigma_max: tol must be positive");
    std::vector<double> v = seeded_unit_vector(op.in_dim, opts.seed);
    double prev = -1.0;
    double est = 0.0;
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
        const std::vector<double> w = op.forward(v);
        est = norm2(w);
        if (it > 0 && std::abs(est - prev) < opts.tol) return est;
        prev = est;
        std::vector<double> u = op.adjoint(w);
        const double nu = norm2(u);
        if (nu == 0.0) return est;
        for (std::size_t i = 0; i < u.size(); ++i) v[i] = u[i] / nu;
    }
    std::ostringstream msg;
    msg << "sigma_max: power iteration did not converge in " << opts.max_iter
        << " iterations (best estimate " << est << ")";
    throw ConvergenceError(msg.str(), est);
}

double sigma_max(const DenseMatrix& j, double tol, std::size_t max_iter) {
    if (j.empty()) throw std::invalid_argument("sigma_max: empty matrix");
    LinearOperator op;
    op.in_dim = j.cols();
    op.out_dim = j.rows();
    op.forward = [&j](std::span<const double> x) { return matvec(j, x); };
    op.adjoint = [&j](std::span<const double> y) { return matvec_t(j, y); };
    PowerIterationOptions opts;
    opts.tol = tol;
    opts.max_iter = max_iter;
    return sigma_max(op, opts);
}

}  // namespace vcl
