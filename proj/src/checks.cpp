#include "vcl/checks.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "vcl/dynamics.hpp"
#include "vcl/parallel.hpp"
#include "vcl/spectral.hpp"

namespace vcl::checks {

std::vector<EulerCase> euler_bound_suite() {
    std::vector<EulerCase> out;
    for (double lambda : {-2.0, -1.0, 0.5, 1.0, 2.0})
        for (std::size_t steps : {4u, 16u, 64u}) {
            const dynamics::VectorField f = [lambda](std::span<const double> x, double) {
                return dynamics::State{lambda * x[0]};
            };
            const auto exact = [lambda](double t) { return dynamics::State{std::exp(lambda * t)}; };
            const double x0[] = {1.0};
            const auto run = dynamics::integrate(f, x0, 0.0, 1.0, steps, dynamics::Method::euler);
            EulerCase c;
            c.lambda = lambda;
            c.steps = steps;
            c.defect = dynamics::euler_defect(f, exact, 0.0, 1.0, steps);
            const double K = std::abs(lambda);
            c.bound = dynamics::euler_error_bound(c.defect, K, 1.0);
            for (std::size_t k = 0; k <= steps; ++k) {
                const double t = static_cast<double>(k) * run.h;
                const double err = std::abs(run.trajectory[k][0] - exact(t)[0]);
                c.max_error = std::max(c.max_error, err);
                if (err > dynamics::euler_error_bound(c.defect, K, t)) ++c.violations;
            }
            out.push_back(c);
        }
    return out;
}

std::vector<GrowthCase> growth_bound_suite(const net::ModelParams& params, std::span<const net::Image> images,
                                           std::size_t trials, double max_epsilon, double margin, std::uint64_t seed) {
    if (images.empty()) throw std::invalid_argument("growth_bound_suite: no images");
    std::vector<double> integral(images.size());
    std::vector<DenseMatrix> z0(images.size());
    parallel_for(images.size(), [&](std::size_t i) {
        const auto sp = spectral::layer_spectra(params, images[i], spectral::Mode::exact, i);
        double sum = 0.0;
        for (const auto& s : sp.steps)
            if (net::is_residual_step(params.config, s.step_index)) sum += s.value();
        integral[i] = sum;
        z0[i] = net::embed(params, images[i]);
    });
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.1, 1.0);
    std::vector<GrowthCase> cases(trials);
    std::vector<DenseMatrix> deltas(trials);
    for (std::size_t t = 0; t < trials; ++t) {
        cases[t].image = t % images.size();
        cases[t].epsilon = max_epsilon * scale(rng);
        DenseMatrix d(z0[cases[t].image].rows(), z0[cases[t].image].cols());
        for (double& v : d.data()) v = gauss(rng);
        d *= cases[t].epsilon / frobenius(d);
        deltas[t] = std::move(d);
    }
    parallel_for(trials, [&](std::size_t t) {
        auto& c = cases[t];
        const auto path = dynamics::propagate_encoder(params, z0[c.image], deltas[t]);
        c.sigma_integral = integral[c.image];
        c.distortion = path.final_distortion;
        c.bound = dynamics::growth_bound(path.embed_distortion, c.sigma_integral, 0.0, 0.0).value * (1.0 + margin);
        c.violated = c.distortion > c.bound;
    });
    return cases;
}

}  // namespace vcl::checks
