#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vcl/dynamics.hpp"
#include "vcl/net.hpp"

namespace vcl::attack {

using net::Image;

/// What an attack needs from a model: logits, pullbacks of logit seeds to the
/// input, and the final representation used for ρ* bookkeeping.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::size_t num_classes() const = 0;
    virtual std::vector<double> logits(const Image& x) const = 0;
    /// ∂⟨seed, logits(x)⟩/∂x.
    virtual Image logit_vjp(const Image& x, std::span<const double> seed) const = 0;
    /// ∂CE(logits(x), label)/∂x.
    virtual Image loss_grad(const Image& x, std::size_t label) const;
    /// Final internal state compared between clean and adversarial inputs.
    virtual DenseMatrix representation(const Image& x) const = 0;

    std::size_t predict(const Image& x) const;
};

class ModelClassifier final : public Classifier {
public:
    explicit ModelClassifier(const net::ModelParams& params) : params_(params) {}
    std::size_t num_classes() const override { return params_.config.num_classes; }
    std::vector<double> logits(const Image& x) const override;
    Image logit_vjp(const Image& x, std::span<const double> seed) const override;
    Image loss_grad(const Image& x, std::size_t label) const override;
    DenseMatrix representation(const Image& x) const override;

private:
    const net::ModelParams& params_;
};

/// logits = W·pixels + b. The representation is the pixel vector itself.
class LinearClassifier final : public Classifier {
public:
    LinearClassifier(DenseMatrix weights, std::vector<double> bias);
    std::size_t num_classes() const override { return weights_.rows(); }
    std::vector<double> logits(const Image& x) const override;
    Image logit_vjp(const Image& x, std::span<const double> seed) const override;
    DenseMatrix representation(const Image& x) const override;

private:
    DenseMatrix weights_;
    std::vector<double> bias_;
};

enum class Kind { fgsm, pgd, cw };
enum class Norm { linf, l2 };
std::string_view to_string(Kind k);
std::string_view to_string(Norm n);
Kind kind_from_string(std::string_view s);
Norm norm_from_string(std::string_view s);

struct CwParams {
    double c = 1.0;
    double kappa = 0.0;
    double lr = 0.01;
    double success_threshold = 260.0;  ///< L₂ radius, pixels in [0, 1]
};

struct AttackConfig {
    Kind kind = Kind::pgd;
    Norm norm = Norm::linf;
    double epsilon = 2.0 / 255.0;
    double alpha = 2.0 / 255.0;
    std::size_t iters = 7;
    CwParams cw;

    void validate() const;
};

/// CW success threshold (260 at 224×224×3) rescaled by sqrt(pixel-count ratio).
double scaled_cw_threshold(std::size_t pixel_count, double reference = 260.0);

struct AttackOutcome {
    Image adversarial;
    double l2 = 0.0;
    double linf = 0.0;
    bool success = false;  ///< prediction differs from label (and within the CW threshold)
    std::vector<double> final_logits;
    std::size_t skipped_steps = 0;  ///< L₂ steps skipped on zero gradient
};

AttackOutcome fgsm(const Classifier& model, const Image& x, std::size_t label, double epsilon);
AttackOutcome pgd(const Classifier& model, const Image& x, std::size_t label, const AttackConfig& config);
AttackOutcome cw_l2(const Classifier& model, const Image& x, std::size_t label, const AttackConfig& config);
AttackOutcome run_attack(const Classifier& model, const Image& x, std::size_t label, const AttackConfig& config);

/// Untargeted CW margin max(Z_y − max_{i≠y} Z_i, −κ): positive while the true
/// class still wins, clipped at −κ once it has lost by κ.
double cw_margin(std::span<const double> logits, std::size_t label, double kappa);

/// L₂ projection onto the ε-ball: δ·min(1, ε/‖δ‖₂).
void project_l2(std::span<double> delta, double epsilon);

struct LabeledImage {
    const Image* image;
    std::size_t label;
};

/// Fraction of samples classified correctly after the attack; samples that are
/// misclassified cleanly count as non-robust.
double robust_accuracy(const Classifier& model, std::span<const LabeledImage> data, const AttackConfig& config);
double clean_accuracy(const Classifier& model, std::span<const LabeledImage> data);

/// Bisection on ε ∈ [lo, hi] with a fixed PGD-20 attack (α = 2.5·ε/20).
/// Returns the smallest successful ε visited (an upper bound on ρ) and the
/// representation distortion of that adversarial example.
dynamics::RhoEstimate min_perturbation(const Classifier& model, const Image& x, std::size_t label, double hi,
                                       std::size_t bisection_steps, Norm norm = Norm::linf, double lo = 0.0,
                                       std::size_t image_id = 0);

}  // namespace vcl::attack
