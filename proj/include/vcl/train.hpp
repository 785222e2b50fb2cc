#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vcl/dataset.hpp"
#include "vcl/net.hpp"

namespace vcl::train {

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    double max_lr = 0.1;
    double sam_rho = 0.05;
    double momentum = 0.9;
    double warmup_fraction = 0.3;
    double initial_div = 25.0;
    double final_div = 1e4;
    bool hflip = true;
    std::size_t crop_pad = 4;  ///< 0 disables random crops
    /// Interleave the shuffled per-class index lists so every batch holds the
    /// classes in near-equal proportion.
    bool balanced_batches = false;
    /// Stop once clean train accuracy reaches this value (disabled if unset).
    std::optional<double> stop_at_train_acc;

    void validate() const;
};

std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(std::string_view text);

/// Linear warm-up from max_lr/initial_div to max_lr, then cosine decay to
/// max_lr/final_div. The peak sits at round(warmup_fraction·total).
double one_cycle_lr(std::size_t step, std::size_t total_steps, const TrainConfig& config);

/// Gradient oracle on a flat parameter vector.
using GradFn = std::function<std::vector<double>(std::span<const double>)>;

struct SamResult {
    bool fallback = false;  ///< gradient norm was zero, plain SGD step taken
    double grad_norm = 0.0;
};

/// One SAM step on w in place. buffer holds the momentum state (same length as
/// w). rho = 0 skips the ascent and is exactly momentum SGD.
SamResult sam_update(std::vector<double>& w, std::vector<double>& buffer, const GradFn& grad, double lr, double rho,
                     double momentum);

class SamOptimizer {
public:
    SamOptimizer(double rho, double momentum);
    /// Updates params in place from the batch; returns the mean loss at the
    /// original parameters.
    double step(net::ModelParams& params, std::span<const net::Sample> batch, double lr);
    std::size_t fallback_steps() const noexcept { return fallbacks_; }

private:
    double rho_;
    double momentum_;
    std::vector<double> buffer_;
    std::size_t fallbacks_ = 0;
};

/// Functional form: a fresh optimizer (zero momentum buffer) applied once.
net::ModelParams sam_step(const net::ModelParams& params, std::span<const net::Sample> batch, double lr, double rho,
                          double momentum = 0.0);

net::Image hflip(const net::Image& image);
/// Zero-pads by pad on every side and crops a side×side window at (oy, ox).
net::Image pad_crop(const net::Image& image, std::size_t pad, std::size_t oy, std::size_t ox);
/// Seeded flip (p = 0.5) and random crop after padding.
net::Image augment(const net::Image& image, std::uint64_t seed, bool flip = true, std::size_t pad = 4);

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> test_acc;
    double lr_end = 0.0;
};

struct TrainResult {
    net::ModelParams params;
    std::vector<EpochMetrics> history;
    std::size_t steps = 0;
    std::size_t sam_fallbacks = 0;
};

double accuracy(const net::ModelParams& params, const data::Dataset& data);

/// Sample order for one epoch: a seeded shuffle, optionally class-interleaved.
std::vector<std::size_t> epoch_order(const data::Dataset& data, bool balanced, std::mt19937_64& rng);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains from build_model(config, seed). Throws NumericError naming the epoch
/// and step if the loss turns non-finite.
TrainResult train_loop(const net::ModelConfig& config, const TrainConfig& tc, const data::Dataset& train_set,
                       std::uint64_t seed, const data::Dataset* test_set = nullptr,
                       const EpochCallback& on_epoch = {});

}  // namespace vcl::train
