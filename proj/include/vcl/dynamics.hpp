#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "vcl/net.hpp"
#include "vcl/spectral.hpp"

namespace vcl::dynamics {

using State = std::vector<double>;
using VectorField = std::function<State(std::span<const double> x, double t)>;

enum class Method { euler, rk4 };
std::string_view to_string(Method m);

struct IntegrationResult {
    Method method = Method::euler;
    double h = 0.0;
    std::vector<State> trajectory;  ///< steps + 1 states, x0 first
    const State& final_state() const { return trajectory.back(); }
};

/// Fixed-step integration of dx/dt = F(x, t) on [t0, T] with h = (T − t0)/steps.
/// Throws std::invalid_argument for steps == 0 or T <= t0, NumericError (with
/// the failing step) when a state turns non-finite.
IntegrationResult integrate(const VectorField& field, std::span<const double> x0, double t0, double T,
                            std::size_t steps, Method method);

/// Forward Euler global error bound (δ/K)·(e^{K·span} − 1) for a field with
/// Lipschitz constant K and per-step defect δ.
double euler_error_bound(double delta, double K, double span);

/// Largest per-unit-time defect of the Euler scheme along an exact solution:
/// max_k ‖(x(t_{k+1}) − x(t_k))/h − F(x(t_k), t_k)‖₂.
double euler_defect(const VectorField& field, const std::function<State(double)>& exact, double t0, double T,
                    std::size_t steps);

struct GrowthBound {
    double epsilon = 0.0;
    double sigma_integral = 0.0;
    double second_order_margin = 0.0;  ///< M
    double span = 0.0;
    double value = 0.0;  ///< ε·exp(sigma_integral + span·M·ε)
};

GrowthBound growth_bound(double epsilon, double sigma_integral, double M, double span);
/// Uses the report's residual-step σ sum with Δt = 1; span defaults to the
/// number of residual steps.
GrowthBound growth_bound(double epsilon, const spectral::SpectraReport& spectra, double M,
                         std::optional<double> span = std::nullopt);

struct PerturbationPath {
    double embed_distortion = 0.0;       ///< ‖Δz₀‖₂ at the encoder input
    std::vector<double> step_distortion;  ///< ‖Δz_l‖₂ after each residual step
    double final_distortion = 0.0;        ///< ‖Δx(T)‖₂ at the last encoder state
};

/// Runs clean and perturbed traces and records the token-state distortion.
PerturbationPath propagate_perturbation(const net::ModelParams& params, const net::Image& image,
                                        const net::Image& delta);

/// Same, starting from an embedding-space perturbation of z₀.
PerturbationPath propagate_encoder(const net::ModelParams& params, const DenseMatrix& z0, const DenseMatrix& dz0);

/// Robustness radius estimate for one image: an attack-found upper bound on ρ
/// and the final representation distortion of that adversarial example (ρ*).
struct RhoEstimate {
    std::size_t image_id = 0;
    bool found = false;            ///< false when no success at the upper bracket
    double epsilon_min = 0.0;      ///< smallest successful radius found
    double output_distortion = 0.0;
};

}  // namespace vcl::dynamics
