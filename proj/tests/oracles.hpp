#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "vcl/linalg.hpp"
#include "vcl/net.hpp"

namespace oracle {

using vcl::DenseMatrix;

inline DenseMatrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                                 double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    DenseMatrix m(r, c);
    for (auto& v : m.data()) v = u(rng);
    return m;
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
    return ev;
}

/// Largest singular value from the eigenvalues of JᵀJ.
inline double sigma_max_jacobi(const DenseMatrix& j) {
    const std::size_t n = j.cols();
    std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t r = 0; r < j.rows(); ++r) g[a][b] += j(r, a) * j(r, b);
    const auto ev = jacobi_eigenvalues(std::move(g));
    return std::sqrt(std::max(0.0, *std::max_element(ev.begin(), ev.end())));
}

inline double max_abs_col_sum(const DenseMatrix& j) {
    double best = 0.0;
    for (std::size_t c = 0; c < j.cols(); ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < j.rows(); ++r) s += std::abs(j(r, c));
        best = std::max(best, s);
    }
    return best;
}

inline double max_abs_row_sum(const DenseMatrix& j) { return max_abs_col_sum(j.transpose()); }

/// ‖a − b‖₂ / ‖b‖₂ (absolute when b vanishes).
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline double rel_frobenius(const DenseMatrix& a, const DenseMatrix& b) { return rel_error(a.values(), b.values()); }

/// Softmax f(z) = softmax(a·z·zᵀ)·z written out directly.
inline std::vector<double> attention_1d(const std::vector<double>& z, double a) {
    const std::size_t n = z.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> u(n);
        double m = -1e300;
        for (std::size_t j = 0; j < n; ++j) m = std::max(m, u[j] = a * z[i] * z[j]);
        double s = 0.0;
        for (auto& v : u) s += v = std::exp(v - m);
        for (std::size_t j = 0; j < n; ++j) out[i] += u[j] / s * z[j];
    }
    return out;
}

/// softmax(X·Aᵀ·Xᵀ)·X, token-major flattened, written out directly.
inline std::vector<double> attention_general(const std::vector<double>& x, std::size_t n, std::size_t d,
                                             const DenseMatrix& a) {
    std::vector<double> out(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> u(n, 0.0);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < d; ++p)
                for (std::size_t q = 0; q < d; ++q) u[j] += x[j * d + p] * a(p, q) * x[i * d + q];
        const double m = *std::max_element(u.begin(), u.end());
        double s = 0.0;
        for (auto& v : u) s += v = std::exp(v - m);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < d; ++p) out[i * d + p] += u[j] / s * x[j * d + p];
    }
    return out;
}

/// Central-difference Jacobian, independent of the library helper.
template <class F>
DenseMatrix central_jacobian(F&& f, std::vector<double> x, double h) {
    const auto f0 = f(x);
    DenseMatrix j(f0.size(), x.size());
    for (std::size_t c = 0; c < x.size(); ++c) {
        const double keep = x[c];
        x[c] = keep + h;
        const auto fp = f(x);
        x[c] = keep - h;
        const auto fm = f(x);
        x[c] = keep;
        for (std::size_t r = 0; r < f0.size(); ++r) j(r, c) = (fp[r] - fm[r]) / (2.0 * h);
    }
    return j;
}

/// Scales the std-0.02 initialization up so gradients are far from the
/// linear regime and every block contributes.
inline void roughen(vcl::net::ModelParams& p, std::uint64_t seed, double amplitude = 0.3) {
    auto flat = vcl::net::flatten(p);
    std::mt19937_64 rng(seed ^ 0xabcdefULL);
    std::normal_distribution<double> n(0.0, amplitude);
    for (auto& v : flat) v += n(rng);
    vcl::net::unflatten(p, flat);
}

struct FdResult {
    double input_rel = 0.0;
    double param_rel = 0.0;
};

/// Relative errors of grad_input (all pixels) and grad_params (`probes`
/// random scalars) against central differences of the mean loss.
inline FdResult fd_gradient_check(const vcl::net::ModelParams& params, const vcl::net::Image& image, std::size_t label,
                                  std::size_t probes, std::uint64_t seed, double h = 1e-5) {
    using namespace vcl::net;
    FdResult r;
    auto loss_at = [&](const ModelParams& p, const Image& x) {
        const std::vector<Sample> s{{&x, label}};
        return mean_loss(p, s);
    };

    const auto gi = grad_input(params, image, label);
    std::vector<double> fd_in(image.size());
    Image x = image;
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double keep = x.pixels[i];
        x.pixels[i] = keep + h;
        const double lp = loss_at(params, x);
        x.pixels[i] = keep - h;
        const double lm = loss_at(params, x);
        x.pixels[i] = keep;
        fd_in[i] = (lp - lm) / (2.0 * h);
    }
    r.input_rel = rel_error(gi.pixels, fd_in);

    const std::vector<Sample> batch{{&image, label}};
    const auto gp = flatten(grad_params(params, batch));
    auto flat = flatten(params);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, flat.size() - 1);
    std::vector<double> ana, num;
    ModelParams q = params;
    for (std::size_t k = 0; k < probes; ++k) {
        const std::size_t i = pick(rng);
        const double keep = flat[i];
        flat[i] = keep + h;
        unflatten(q, flat);
        const double lp = loss_at(q, image);
        flat[i] = keep - h;
        unflatten(q, flat);
        const double lm = loss_at(q, image);
        flat[i] = keep;
        ana.push_back(gp[i]);
        num.push_back((lp - lm) / (2.0 * h));
    }
    r.param_rel = rel_error(ana, num);
    return r;
}

/// Small random model used by gradient checks: alternates ViT and CoViT.
inline vcl::net::ModelConfig fd_config(std::uint64_t seed) {
    vcl::net::ModelConfig c;
    c.kind = seed % 2 == 0 ? vcl::net::ModelKind::vit : vcl::net::ModelKind::covit;
    c.image_side = 12;
    c.channels = 2;
    c.patch_size = 4;
    c.embed_dim = 8;
    c.depth = 2;
    c.heads = 2;
    c.kernel_sizes = {3, 5};
    c.num_classes = 3;
    return c;
}

inline vcl::net::Image random_image(std::size_t channels, std::size_t side, std::mt19937_64& rng) {
    vcl::net::Image img(channels, side);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : img.pixels) v = u(rng);
    return img;
}

}  // namespace oracle
