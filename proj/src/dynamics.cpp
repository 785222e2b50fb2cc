#include "vcl/dynamics.hpp"

#include <cmath>
#include <stdexcept>

#include "vcl/errors.hpp"

namespace vcl::dynamics {

std::string_view to_string(Method m) { return m == Method::euler ? "euler" : "rk4"; }

namespace {

void axpy(State& y, double a, const State& x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

State shifted(std::span<const double> x, double a, const State& k) {
    State out(x.begin(), x.end());
    axpy(out, a, k);
    return out;
}

}  // namespace

IntegrationResult integrate(const VectorField& field, std::span<const double> x0, double t0, double T,
                            std::size_t steps, Method method) {
    if (steps == 0) throw std::invalid_argument("integrate: steps must be at least 1");
    if (!(T > t0)) throw std::invalid_argument("integrate: T must exceed t0");
    IntegrationResult r;
    r.method = method;
    r.h = (T - t0) / static_cast<double>(steps);
    const double h = r.h;
    r.trajectory.reserve(steps + 1);
    r.trajectory.emplace_back(x0.begin(), x0.end());
    for (std::size_t k = 0; k < steps; ++k) {
        const State& x = r.trajectory.back();
        const double t = t0 + static_cast<double>(k) * h;
        State next = x;
        if (method == Method::euler) {
            axpy(next, h, field(x, t));
        } else {
            const State k1 = field(x, t);
            const State k2 = field(shifted(x, h / 2, k1), t + h / 2);
            const State k3 = field(shifted(x, h / 2, k2), t + h / 2);
            const State k4 = field(shifted(x, h, k3), t + h);
            for (std::size_t i = 0; i < next.size(); ++i)
                next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for (double v : next)
            if (!std::isfinite(v)) throw NumericError("integrate: non-finite state at step " + std::to_string(k + 1), k + 1);
        r.trajectory.push_back(std::move(next));
    }
    return r;
}

double euler_error_bound(double delta, double K, double span) {
    if (!(K > 0.0)) throw std::invalid_argument("euler_error_bound: Lipschitz constant K must be positive");
    if (delta < 0.0 || span < 0.0) throw std::invalid_argument("euler_error_bound: delta and span must be non-negative");
    return delta / K * std::expm1(K * span);
}

double euler_defect(const VectorField& field, const std::function<State(double)>& exact, double t0, double T,
                    std::size_t steps) {
    if (steps == 0 || !(T > t0)) throw std::invalid_argument("euler_defect: invalid grid");
    const double h = (T - t0) / static_cast<double>(steps);
    double worst = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = t0 + static_cast<double>(k) * h;
        const State a = exact(t);
        const State b = exact(t + h);
        const State f = field(a, t);
        double ss = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = (b[i] - a[i]) / h - f[i];
            ss += d * d;
        }
        worst = std::max(worst, std::sqrt(ss));
    }
    return worst;
}

GrowthBound growth_bound(double epsilon, double sigma_integral, double M, double span) {
    if (epsilon < 0.0) throw std::invalid_argument("growth_bound: epsilon must be non-negative");
    GrowthBound g;
    g.epsilon = epsilon;
    g.sigma_integral = sigma_integral;
    g.second_order_margin = M;
    g.span = span;
    g.value = epsilon * std::exp(sigma_integral + span * M * epsilon);
    return g;
}

GrowthBound growth_bound(double epsilon, const spectral::SpectraReport& spectra, double M, std::optional<double> span) {
    const double s = span ? *span : static_cast<double>(spectra.trajectory().size());
    return growth_bound(epsilon, spectra.integral, M, s);
}

PerturbationPath propagate_encoder(const net::ModelParams& params, const DenseMatrix& z0, const DenseMatrix& dz0) {
    const auto& c = params.config;
    if (!z0.same_shape(dz0)) throw std::invalid_argument("propagate_encoder: perturbation shape mismatch");
    PerturbationPath p;
    DenseMatrix a = z0;
    DenseMatrix b = z0 + dz0;
    p.embed_distortion = frobenius(b - a);
    for (std::size_t s = 1; s + 1 < net::step_count(c); ++s) {
        net::StepGraph ga = net::step_graph(params, s, a);
        net::StepGraph gb = net::step_graph(params, s, b);
        a += ga.tape.value(ga.output);
        b += gb.tape.value(gb.output);
        p.step_distortion.push_back(frobenius(b - a));
    }
    p.final_distortion = p.step_distortion.empty() ? p.embed_distortion : p.step_distortion.back();
    return p;
}

PerturbationPath propagate_perturbation(const net::ModelParams& params, const net::Image& image,
                                        const net::Image& delta) {
    if (delta.size() != image.size()) throw std::invalid_argument("propagate_perturbation: delta shape mismatch");
    net::Image moved = image;
    for (std::size_t i = 0; i < moved.size(); ++i) moved.pixels[i] += delta.pixels[i];
    const auto clean = net::forward_trace(params, image);
    const auto pert = net::forward_trace(params, moved);
    PerturbationPath p;
    p.embed_distortion = frobenius(pert.steps[0].output - clean.steps[0].output);
    for (std::size_t s = 1; s + 1 < clean.steps.size(); ++s)
        p.step_distortion.push_back(frobenius(pert.steps[s].output - clean.steps[s].output));
    p.final_distortion = p.step_distortion.empty() ? p.embed_distortion : p.step_distortion.back();
    return p;
}

}  // namespace vcl::dynamics
