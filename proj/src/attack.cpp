#include "vcl/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vcl/parallel.hpp"

namespace vcl::attack {

std::size_t Classifier::predict(const Image& x) const { return net::argmax(logits(x)); }

Image Classifier::loss_grad(const Image& x, std::size_t label) const {
    std::vector<double> z = logits(x);
    if (label >= z.size()) throw std::invalid_argument("loss_grad: label out of range");
    const DenseMatrix p = softmax_rows(DenseMatrix::row_vector(z));
    std::vector<double> seed(p.data().begin(), p.data().end());
    seed[label] -= 1.0;
    return logit_vjp(x, seed);
}

std::vector<double> ModelClassifier::logits(const Image& x) const { return net::logits(params_, x).values(); }

Image ModelClassifier::logit_vjp(const Image& x, std::span<const double> seed) const {
    return net::grad_input_logits(params_, x, seed);
}

Image ModelClassifier::loss_grad(const Image& x, std::size_t label) const { return net::grad_input(params_, x, label); }

DenseMatrix ModelClassifier::representation(const Image& x) const {
    return net::forward_trace(params_, x).final_state();
}

LinearClassifier::LinearClassifier(DenseMatrix weights, std::vector<double> bias)
    : weights_(std::move(weights)), bias_(std::move(bias)) {
    if (bias_.size() != weights_.rows()) throw std::invalid_argument("LinearClassifier: bias length mismatch");
}

std::vector<double> LinearClassifier::logits(const Image& x) const {
    auto z = matvec(weights_, x.pixels);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += bias_[i];
    return z;
}

Image LinearClassifier::logit_vjp(const Image& x, std::span<const double> seed) const {
    Image g(x.channels, x.side);
    g.pixels = matvec_t(weights_, seed);
    return g;
}

DenseMatrix LinearClassifier::representation(const Image& x) const { return DenseMatrix::row_vector(x.pixels); }

std::string_view to_string(Kind k) {
    switch (k) {
        case Kind::fgsm: return "fgsm";
        case Kind::pgd: return "pgd";
        case Kind::cw: return "cw";
    }
    return "?";
}

std::string_view to_string(Norm n) { return n == Norm::linf ? "linf" : "l2"; }

Kind kind_from_string(std::string_view s) {
    if (s == "fgsm") return Kind::fgsm;
    if (s == "pgd") return Kind::pgd;
    if (s == "cw") return Kind::cw;
    throw std::invalid_argument("unknown attack kind '" + std::string(s) + "'");
}

Norm norm_from_string(std::string_view s) {
    if (s == "linf") return Norm::linf;
    if (s == "l2") return Norm::l2;
    throw std::invalid_argument("unknown norm '" + std::string(s) + "'");
}

void AttackConfig::validate() const {
    if (epsilon < 0.0) throw std::invalid_argument("attack config: epsilon must be non-negative");
    if (iters < 1) throw std::invalid_argument("attack config: iters must be at least 1");
    if (kind != Kind::fgsm && !(alpha > 0.0) && kind != Kind::cw)
        throw std::invalid_argument("attack config: alpha must be positive for iterative attacks");
    if (kind == Kind::cw && !(cw.lr > 0.0)) throw std::invalid_argument("attack config: cw lr must be positive");
}

double scaled_cw_threshold(std::size_t pixel_count, double reference) {
    constexpr double reference_pixels = 224.0 * 224.0 * 3.0;
    return reference * std::sqrt(static_cast<double>(pixel_count) / reference_pixels);
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void finish(const Classifier& model, const Image& x, std::size_t label, AttackOutcome& out) {
    double ss = 0.0;
    double mx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = out.adversarial.pixels[i] - x.pixels[i];
        ss += d * d;
        mx = std::max(mx, std::abs(d));
    }
    out.l2 = std::sqrt(ss);
    out.linf = mx;
    out.final_logits = model.logits(out.adversarial);
    out.success = net::argmax(out.final_logits) != label;
}

}  // namespace

void project_l2(std::span<double> delta, double epsilon) {
    const double n = norm2(delta);
    if (n > epsilon && n > 0.0) {
        const double s = epsilon / n;
        for (auto& d : delta) d *= s;
    }
}

AttackOutcome fgsm(const Classifier& model, const Image& x, std::size_t label, double epsilon) {
    if (epsilon < 0.0) throw std::invalid_argument("fgsm: epsilon must be non-negative");
    const Image g = model.loss_grad(x, label);
    AttackOutcome out;
    out.adversarial = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double delta = epsilon * sign(g.pixels[i]);
        out.adversarial.pixels[i] = std::clamp(x.pixels[i] + delta, 0.0, 1.0);
    }
    finish(model, x, label, out);
    return out;
}

AttackOutcome pgd(const Classifier& model, const Image& x, std::size_t label, const AttackConfig& config) {
    config.validate();
    const double eps = config.epsilon;
    AttackOutcome out;
    out.adversarial = x;
    std::vector<double> delta(x.size(), 0.0);
    for (std::size_t it = 0; it < config.iters; ++it) {
        const Image g = model.loss_grad(out.adversarial, label);
        if (config.norm == Norm::linf) {
            for (std::size_t i = 0; i < delta.size(); ++i)
                delta[i] = std::clamp(delta[i] + config.alpha * sign(g.pixels[i]), -eps, eps);
        } else {
            const double gn = norm2(g.pixels);
            if (gn == 0.0) {
                ++out.skipped_steps;
                continue;
            }
            for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += config.alpha * g.pixels[i] / gn;
            project_l2(delta, eps);
        }
        for (std::size_t i = 0; i < delta.size(); ++i) {
            out.adversarial.pixels[i] = std::clamp(x.pixels[i] + delta[i], 0.0, 1.0);
            delta[i] = out.adversarial.pixels[i] - x.pixels[i];
        }
    }
    finish(model, x, label, out);
    return out;
}

double cw_margin(std::span<const double> z, std::size_t label, double kappa) {
    if (label >= z.size() || z.size() < 2) throw std::invalid_argument("cw_margin: label out of range");
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < z.size(); ++i)
        if (i != label) other = std::max(other, z[i]);
    return std::max(z[label] - other, -kappa);
}

AttackOutcome cw_l2(const Classifier& model, const Image& x, std::size_t label, const AttackConfig& config) {
    config.validate();
    const auto& cw = config.cw;
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double adam_eps = 1e-8;
    const std::size_t n = x.size();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = std::atanh(2.0 * std::clamp(x.pixels[i], 1e-6, 1.0 - 1e-6) - 1.0);
    std::vector<double> m(n, 0.0);
    std::vector<double> v(n, 0.0);

    Image current = x;
    auto decode = [&] {
        for (std::size_t i = 0; i < n; ++i) current.pixels[i] = (std::tanh(w[i]) + 1.0) / 2.0;
    };
    std::optional<Image> best;
    double best_l2 = std::numeric_limits<double>::infinity();
    auto consider = [&](const std::vector<double>& z) {
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) ss += (current.pixels[i] - x.pixels[i]) * (current.pixels[i] - x.pixels[i]);
        const double l2 = std::sqrt(ss);
        if (net::argmax(z) != label && l2 <= cw.success_threshold && l2 < best_l2) {
            best_l2 = l2;
            best = current;
        }
    };

    decode();
    for (std::size_t it = 0; it < config.iters; ++it) {
        const std::vector<double> z = model.logits(current);
        consider(z);
        // d/dx of ‖x − x0‖² + c·margin
        std::vector<double> gx(n);
        for (std::size_t i = 0; i < n; ++i) gx[i] = 2.0 * (current.pixels[i] - x.pixels[i]);
        std::size_t runner_up = label == 0 ? 1 : 0;
        for (std::size_t i = 0; i < z.size(); ++i)
            if (i != label && z[i] > z[runner_up]) runner_up = i;
        if (z[label] - z[runner_up] > -cw.kappa) {
            std::vector<double> seed(z.size(), 0.0);
            seed[label] = cw.c;
            seed[runner_up] = -cw.c;
            const Image gm = model.logit_vjp(current, seed);
            for (std::size_t i = 0; i < n; ++i) gx[i] += gm.pixels[i];
        }
        const double t = static_cast<double>(it + 1);
        const double c1 = 1.0 - std::pow(beta1, t);
        const double c2 = 1.0 - std::pow(beta2, t);
        for (std::size_t i = 0; i < n; ++i) {
            const double th = std::tanh(w[i]);
            const double gw = gx[i] * 0.5 * (1.0 - th * th);
            m[i] = beta1 * m[i] + (1.0 - beta1) * gw;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gw * gw;
            w[i] -= cw.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + adam_eps);
        }
        decode();
    }
    consider(model.logits(current));

    AttackOutcome out;
    out.adversarial = best ? *best : current;
    finish(model, x, label, out);
    out.success = best.has_value();
    return out;
}

AttackOutcome run_attack(const Classifier& model, const Image& x, std::size_t label, const AttackConfig& config) {
    switch (config.kind) {
        case Kind::fgsm: return fgsm(model, x, label, config.epsilon);
        case Kind::pgd: return pgd(model, x, label, config);
        case Kind::cw: return cw_l2(model, x, label, config);
    }
    throw std::invalid_argument("run_attack: unknown kind");
}

double clean_accuracy(const Classifier& model, std::span<const LabeledImage> data) {
    if (data.empty()) throw std::invalid_argument("clean_accuracy: empty dataset");
    std::vector<int> ok(data.size());
    parallel_for(data.size(), [&](std::size_t i) { ok[i] = model.predict(*data[i].image) == data[i].label; });
    std::size_t n = 0;
    for (int v : ok) n += static_cast<std::size_t>(v);
    return static_cast<double>(n) / static_cast<double>(data.size());
}

double robust_accuracy(const Classifier& model, std::span<const LabeledImage> data, const AttackConfig& config) {
    if (data.empty()) throw std::invalid_argument("robust_accuracy: empty dataset");
    config.validate();
    std::vector<int> robust(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        const auto& s = data[i];
        if (model.predict(*s.image) != s.label) {
            robust[i] = 0;
            return;
        }
        robust[i] = !run_attack(model, *s.image, s.label, config).success;
    });
    std::size_t n = 0;
    for (int v : robust) n += static_cast<std::size_t>(v);
    return static_cast<double>(n) / static_cast<double>(data.size());
}

dynamics::RhoEstimate min_perturbation(const Classifier& model, const Image& x, std::size_t label, double hi,
                                       std::size_t bisection_steps, Norm norm, double lo, std::size_t image_id) {
    if (!(hi > 0.0) || lo < 0.0 || lo >= hi) throw std::invalid_argument("min_perturbation: need 0 <= lo < hi");
    dynamics::RhoEstimate r;
    r.image_id = image_id;
    if (model.predict(x) != label) {
        r.found = true;
        r.epsilon_min = 0.0;
        r.output_distortion = 0.0;
        return r;
    }
    auto attempt = [&](double eps) {
        AttackConfig cfg;
        cfg.kind = Kind::pgd;
        cfg.norm = norm;
        cfg.epsilon = eps;
        cfg.iters = 20;
        cfg.alpha = 2.5 * eps / 20.0;
        return pgd(model, x, label, cfg);
    };
    AttackOutcome at_hi = attempt(hi);
    if (!at_hi.success) {
        r.found = false;
        r.epsilon_min = hi;
        return r;
    }
    AttackOutcome best = at_hi;
    for (std::size_t k = 0; k < bisection_steps; ++k) {
        const double mid = 0.5 * (lo + hi);
        AttackOutcome o = attempt(mid);
        if (o.success) {
            hi = mid;
            best = std::move(o);
        } else {
            lo = mid;
        }
    }
    r.found = true;
    r.epsilon_min = hi;
    r.output_distortion = frobenius(model.representation(best.adversarial) - model.representation(x));
    return r;
}

}  // namespace vcl::attack
