#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vcl/autodiff.hpp"
#include "vcl/linalg.hpp"

namespace vcl::net {

enum class ModelKind { vit, covit };

std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);

/// Channel-major (C, H, W) image with pixels in [0, 1].
struct Image {
    std::size_t channels = 0;
    std::size_t side = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t c, std::size_t s, double fill = 0.0) : channels(c), side(s), pixels(c * s * s, fill) {}

    double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * side + y) * side + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * side + y) * side + x]; }
    std::size_t size() const noexcept { return pixels.size(); }
    friend bool operator==(const Image&, const Image&) = default;
};

struct ModelConfig {
    ModelKind kind = ModelKind::vit;
    std::size_t image_side = 32;
    std::size_t channels = 3;
    std::size_t patch_size = 8;
    std::size_t embed_dim = 16;
    std::size_t depth = 2;
    std::size_t heads = 2;                    // ViT only
    std::vector<std::size_t> kernel_sizes{3};  // CoViT only, one odd width per group
    std::size_t num_classes = 2;
    std::size_t mlp_ratio = 4;
    double ln_eps = 1e-6;

    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;

    std::size_t grid() const { return image_side / patch_size; }
    std::size_t num_patches() const { return grid() * grid(); }
    /// Token count seen by the encoder: patches plus class token for ViT.
    std::size_t seq_len() const { return num_patches() + (kind == ModelKind::vit ? 1 : 0); }
    std::size_t patch_dim() const { return patch_size * patch_size * channels; }
    std::size_t groups() const { return kind == ModelKind::vit ? heads : kernel_sizes.size(); }
    std::size_t head_dim() const { return embed_dim / groups(); }
    std::size_t hidden_dim() const { return mlp_ratio * embed_dim; }
    std::size_t pixel_count() const { return channels * image_side * image_side; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string config_to_json(const ModelConfig& c);
ModelConfig config_from_json(std::string_view text);

/// Per-block weights. ViT blocks fill the q/k/v lists (one D×(D/H) matrix per
/// head); CoViT blocks fill the conv lists (one (k·D/G)×(D/G) kernel and a
/// 1×(D/G) bias per group).
template <class T>
struct BlockWeights {
    T ln1_gamma, ln1_beta;
    std::vector<T> wq, wk, wv;
    std::vector<T> conv_kernel, conv_bias;
    T wo, bo;
    T ln2_gamma, ln2_beta;
    T fc1_w, fc1_b, fc2_w, fc2_b;
};

template <class T>
struct Weights {
    T patch_w, patch_b;
    T pos;
    std::optional<T> cls;
    std::vector<BlockWeights<T>> blocks;
    T lnf_gamma, lnf_beta;
    T head_w, head_b;
};

/// Visits every tensor of a weight set in the fixed enumeration order used by
/// checkpoints, optimizers and gradient containers.
template <class W, class F>
void for_each_tensor(W& w, F&& f) {
    f(w.patch_w);
    f(w.patch_b);
    f(w.pos);
    if (w.cls) f(*w.cls);
    for (auto& b : w.blocks) {
        f(b.ln1_gamma);
        f(b.ln1_beta);
        for (auto& m : b.wq) f(m);
        for (auto& m : b.wk) f(m);
        for (auto& m : b.wv) f(m);
        for (std::size_t g = 0; g < b.conv_kernel.size(); ++g) {
            f(b.conv_kernel[g]);
            f(b.conv_bias[g]);
        }
        f(b.wo);
        f(b.bo);
        f(b.ln2_gamma);
        f(b.ln2_beta);
        f(b.fc1_w);
        f(b.fc1_b);
        f(b.fc2_w);
        f(b.fc2_b);
    }
    f(w.lnf_gamma);
    f(w.lnf_beta);
    f(w.head_w);
    f(w.head_b);
}

struct ModelParams {
    ModelConfig config;
    Weights<DenseMatrix> w;

    std::vector<DenseMatrix*> tensors();
    std::vector<const DenseMatrix*> tensors() const;
    std::size_t parameter_count() const;
    /// Same structure, every entry zero.
    ModelParams zeros_like() const;
    friend bool operator==(const ModelParams& a, const ModelParams& b);
};

/// Trainable parameter count of one grouped token convolution projection.
std::size_t conv_projection_param_count(std::size_t embed_dim, const std::vector<std::size_t>& kernel_sizes);

ModelParams build_model(const ModelConfig& config, std::uint64_t seed);

enum class SublayerKind { embed, attn, conv, mlp, head };
std::string_view to_string(SublayerKind k);
SublayerKind sublayer_kind_from_string(std::string_view s);

/// Step layout: 0 = embed, 1..2L = residual steps (attention/conv then MLP per
/// block), 2L+1 = head.
std::size_t step_count(const ModelConfig& c);
SublayerKind step_kind(const ModelConfig& c, std::size_t step);
bool is_residual_step(const ModelConfig& c, std::size_t step);

struct TraceStep {
    std::size_t index = 0;
    SublayerKind kind = SublayerKind::embed;
    DenseMatrix input;   ///< image as 1×pixels for embed, tokens otherwise
    DenseMatrix branch;  ///< F(input) for residual steps; empty for embed/head
    DenseMatrix output;  ///< input + branch for residual steps
};

struct ForwardTrace {
    std::vector<TraceStep> steps;
    DenseMatrix logits;  ///< 1×num_classes

    /// Encoder state after the last residual step.
    const DenseMatrix& final_state() const { return steps[steps.size() - 2].output; }
};

ForwardTrace forward_trace(const ModelParams& params, const Image& image);
DenseMatrix logits(const ModelParams& params, const Image& image);
/// Argmax with ties toward the lowest index.
std::size_t argmax(std::span<const double> logits);
std::size_t predict(const ModelParams& params, const Image& image);

/// Cross-entropy gradient with respect to the pixels.
Image grad_input(const ModelParams& params, const Image& image, std::size_t label);
/// Gradient of <seed, logits> with respect to the pixels.
Image grad_input_logits(const ModelParams& params, const Image& image, std::span<const double> seed);

struct Sample {
    const Image* image;
    std::size_t label;
};

/// Mean cross-entropy gradient over the batch, congruent to params. Loss is
/// written to *mean_loss when non-null.
ModelParams grad_params(const ModelParams& params, std::span<const Sample> batch, double* mean_loss = nullptr);
double mean_loss(const ModelParams& params, std::span<const Sample> batch);

/// A single step of the network as a differentiable map on a tape: `input` is
/// the variable leaf, `output` the step result (F(z) for residual steps).
struct StepGraph {
    ad::Tape tape;
    ad::Var input;
    ad::Var output;
};

/// Builds the graph of step `step` evaluated at `input` (1×pixels for embed,
/// token matrix otherwise). Parameters enter as constants.
StepGraph step_graph(const ModelParams& params, std::size_t step, const DenseMatrix& input);

/// Runs the encoder (residual steps only) from the embedding output z0.
DenseMatrix run_encoder(const ModelParams& params, const DenseMatrix& z0);
DenseMatrix embed(const ModelParams& params, const Image& image);

DenseMatrix image_row(const Image& image);

/// All parameters concatenated in for_each_tensor order.
std::vector<double> flatten(const ModelParams& params);
/// Inverse of flatten; throws std::invalid_argument on a length mismatch.
void unflatten(ModelParams& params, std::span<const double> flat);

}  // namespace vcl::net
