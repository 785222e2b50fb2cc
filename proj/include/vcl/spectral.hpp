#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vcl/net.hpp"

namespace vcl::spectral {

enum class Mode { exact, bound, both };
std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

struct StepSigma {
    std::size_t step_index = 0;
    net::SublayerKind kind = net::SublayerKind::attn;
    std::optional<double> sigma_exact;
    std::optional<double> sigma_bound;
    Mode method = Mode::exact;

    /// Exact value when present, otherwise the bound.
    double value() const { return sigma_exact ? *sigma_exact : *sigma_bound; }
};

struct LayerSpectra {
    std::size_t image_id = 0;
    std::vector<StepSigma> steps;
};

struct StepSummary {
    std::size_t step_index = 0;
    net::SublayerKind kind = net::SublayerKind::attn;
    Mode method = Mode::exact;
    double mean = 0.0;
    double std = 0.0;  ///< sample standard deviation, 0 when count == 1
    std::size_t count = 0;
};

struct SpectraReport {
    std::string model_id;
    std::vector<StepSummary> steps;  ///< every analyzed step, embed and head included
    std::size_t image_count = 0;
    bool single_image = false;       ///< std values are 0 by convention
    double integral = 0.0;           ///< Σ over residual steps of the per-step mean (Δt = 1)
    double pooled_mean = 0.0;        ///< over residual steps and images
    double pooled_std = 0.0;
    /// mean(σ_first, σ_last) / mean(σ_middle) over residual steps; absent when
    /// there are no middle steps.
    std::optional<double> edge_to_middle_ratio;
    Mode method = Mode::exact;

    /// Per-step means of the residual steps in depth order.
    std::vector<double> trajectory() const;
};

struct SpectraOptions {
    double tol = 1e-11;
    std::size_t max_iter = 100000;
};

/// σ of every step (embed, residual branches, head) at the trace of `image`.
/// Exact mode uses matrix-free power iteration; bound mode streams the
/// Jacobian column by column and returns sqrt(‖J‖₁‖J‖∞).
/// Throws ResourceLimitError in exact/both mode when seq_len·D > 512.
LayerSpectra layer_spectra(const net::ModelParams& params, const net::Image& image, Mode mode,
                           std::size_t image_id = 0, const SpectraOptions& opts = {});

/// Spectra for many images, computed on the worker pool, ordered by image id.
std::vector<LayerSpectra> dataset_spectra(const net::ModelParams& params, std::span<const net::Image> images,
                                          Mode mode, const SpectraOptions& opts = {});

SpectraReport aggregate_spectra(std::span<const LayerSpectra> spectra, const std::string& model_id = "");

/// σ of each transformer block taken as a single residual map
/// z ↦ z + F_attn(z) + F_mlp(z + F_attn(z)), exact power iteration.
std::vector<double> block_sigmas(const net::ModelParams& params, const net::Image& image,
                                 const SpectraOptions& opts = {});

enum class Ordering { a_more_robust, b_more_robust, incomparable };
std::string_view to_string(Ordering o);

struct Comparison {
    Ordering ordering = Ordering::incomparable;
    bool equal = false;
    std::vector<double> grid;  ///< normalized depth points used for the check
};

/// Pointwise dominance of σ trajectories on the union of both normalized
/// depth grids (linear interpolation). Throws on empty input.
Comparison compare_models(std::span<const double> a, std::span<const double> b);

/// Linear interpolation of a trajectory sampled at k/(n-1) onto t ∈ [0, 1].
double interpolate(std::span<const double> traj, double t);

}  // namespace vcl::spectral
