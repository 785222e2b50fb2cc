#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vcl/net.hpp"

namespace vcl::checks {

/// One forward-Euler run on dx/dt = λx, x(0) = 1 over [0, 1].
struct EulerCase {
    double lambda = 0.0;
    std::size_t steps = 0;
    double defect = 0.0;     ///< max per-unit-time defect along the exact solution
    double max_error = 0.0;  ///< max over grid points of |x_k − x(t_k)|
    double bound = 0.0;      ///< (δ/K)(e^{K·T} − 1) at T = 1
    std::size_t violations = 0;  ///< grid points whose error exceeds the bound at t_k
};

/// λ ∈ {−2, −1, 0.5, 1, 2} × steps ∈ {4, 16, 64}.
std::vector<EulerCase> euler_bound_suite();

struct GrowthCase {
    std::size_t image = 0;
    double epsilon = 0.0;
    double sigma_integral = 0.0;
    double distortion = 0.0;
    double bound = 0.0;  ///< ε·exp(Σσ)·(1 + margin)
    bool violated = false;
};

/// Random embedding-space perturbations of norm ε ≤ max_epsilon pushed
/// through the encoder, compared with the first-order growth bound computed
/// from exact per-step σ at each image's clean trajectory.
std::vector<GrowthCase> growth_bound_suite(const net::ModelParams& params, std::span<const net::Image> images,
                                           std::size_t trials, double max_epsilon, double margin, std::uint64_t seed);

}  // namespace vcl::checks
