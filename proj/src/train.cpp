#include "vcl/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "vcl/errors.hpp"

namespace vcl::train {

void TrainConfig::validate() const {
    if (!(max_lr > 0.0)) throw std::invalid_argument("train config: max_lr must be positive");
    if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0))
        throw std::invalid_argument("train config: warmup fraction must lie in (0, 1)");
    if (!(initial_div > 0.0) || !(final_div > 0.0)) throw std::invalid_argument("train config: divisors must be positive");
    if (batch_size == 0) throw std::invalid_argument("train config: batch size must be positive");
    if (sam_rho < 0.0) throw std::invalid_argument("train config: sam_rho must be non-negative");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train config: momentum must lie in [0, 1)");
}

std::string train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["max_lr"] = c.max_lr;
    j["sam_rho"] = c.sam_rho;
    j["momentum"] = c.momentum;
    j["warmup_fraction"] = c.warmup_fraction;
    j["initial_div"] = c.initial_div;
    j["final_div"] = c.final_div;
    j["hflip"] = c.hflip;
    j["crop_pad"] = c.crop_pad;
    j["balanced_batches"] = c.balanced_batches;
    if (c.stop_at_train_acc) j["stop_at_train_acc"] = *c.stop_at_train_acc;
    return j.dump();
}

TrainConfig train_config_from_json(std::string_view text) {
    const auto j = nlohmann::json::parse(text);
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_lr = j.value("max_lr", c.max_lr);
    c.sam_rho = j.value("sam_rho", c.sam_rho);
    c.momentum = j.value("momentum", c.momentum);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.initial_div = j.value("initial_div", c.initial_div);
    c.final_div = j.value("final_div", c.final_div);
    c.hflip = j.value("hflip", c.hflip);
    c.crop_pad = j.value("crop_pad", c.crop_pad);
    c.balanced_batches = j.value("balanced_batches", c.balanced_batches);
    if (j.contains("stop_at_train_acc")) c.stop_at_train_acc = j["stop_at_train_acc"].get<double>();
    c.validate();
    return c;
}

double one_cycle_lr(std::size_t step, std::size_t total_steps, const TrainConfig& c) {
    if (step > total_steps) throw std::invalid_argument("one_cycle_lr: step exceeds total_steps");
    const double start = c.max_lr / c.initial_div;
    const double floor = c.max_lr / c.final_div;
    if (total_steps == 0) return start;
    const auto peak = static_cast<std::size_t>(std::llround(c.warmup_fraction * static_cast<double>(total_steps)));
    if (step == peak) return c.max_lr;
    if (step < peak) return start + (c.max_lr - start) * static_cast<double>(step) / static_cast<double>(peak);
    const double p = static_cast<double>(step - peak) / static_cast<double>(total_steps - peak);
    return floor + (c.max_lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

SamResult sam_update(std::vector<double>& w, std::vector<double>& buffer, const GradFn& grad, double lr, double rho,
                     double momentum) {
    if (rho < 0.0) throw std::invalid_argument("sam_update: rho must be non-negative");
    if (buffer.size() != w.size()) buffer.assign(w.size(), 0.0);
    SamResult r;
    std::vector<double> g = grad(w);
    double ss = 0.0;
    for (double v : g) ss += v * v;
    r.grad_norm = std::sqrt(ss);
    if (rho > 0.0 && r.grad_norm > 0.0) {
        std::vector<double> w_adv = w;
        const double s = rho / r.grad_norm;
        for (std::size_t i = 0; i < w.size(); ++i) w_adv[i] += s * g[i];
        g = grad(w_adv);
    } else if (rho > 0.0) {
        r.fallback = true;
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        buffer[i] = momentum * buffer[i] + g[i];
        w[i] -= lr * buffer[i];
    }
    return r;
}

SamOptimizer::SamOptimizer(double rho, double momentum) : rho_(rho), momentum_(momentum) {
    if (rho < 0.0) throw std::invalid_argument("SamOptimizer: rho must be non-negative");
}

double SamOptimizer::step(net::ModelParams& params, std::span<const net::Sample> batch, double lr) {
    net::ModelParams scratch = params;
    double loss = 0.0;
    bool first = true;
    const GradFn grad = [&](std::span<const double> flat) {
        net::unflatten(scratch, flat);
        double l = 0.0;
        auto g = net::grad_params(scratch, batch, &l);
        if (first) {
            loss = l;
            first = false;
        }
        return net::flatten(g);
    };
    std::vector<double> w = net::flatten(params);
    const auto r = sam_update(w, buffer_, grad, lr, rho_, momentum_);
    if (r.fallback) ++fallbacks_;
    net::unflatten(params, w);
    return loss;
}

net::ModelParams sam_step(const net::ModelParams& params, std::span<const net::Sample> batch, double lr, double rho,
                          double momentum) {
    net::ModelParams out = params;
    SamOptimizer opt(rho, momentum);
    opt.step(out, batch, lr);
    return out;
}

net::Image hflip(const net::Image& image) {
    net::Image out(image.channels, image.side);
    const std::size_t s = image.side;
    for (std::size_t c = 0; c < image.channels; ++c)
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) out.at(c, y, x) = image.at(c, y, s - 1 - x);
    return out;
}

net::Image pad_crop(const net::Image& image, std::size_t pad, std::size_t oy, std::size_t ox) {
    if (oy > 2 * pad || ox > 2 * pad) throw std::invalid_argument("pad_crop: offset outside the padded image");
    net::Image out(image.channels, image.side, 0.0);
    const auto s = static_cast<std::ptrdiff_t>(image.side);
    for (std::size_t c = 0; c < image.channels; ++c)
        for (std::ptrdiff_t y = 0; y < s; ++y)
            for (std::ptrdiff_t x = 0; x < s; ++x) {
                const std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(oy) - static_cast<std::ptrdiff_t>(pad);
                const std::ptrdiff_t sx = x + static_cast<std::ptrdiff_t>(ox) - static_cast<std::ptrdiff_t>(pad);
                if (sy >= 0 && sy < s && sx >= 0 && sx < s)
                    out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                        image.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
    return out;
}

net::Image augment(const net::Image& image, std::uint64_t seed, bool flip, std::size_t pad) {
    std::mt19937_64 rng(seed);
    const bool do_flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    std::uniform_int_distribution<std::size_t> off(0, 2 * pad);
    const std::size_t oy = off(rng);
    const std::size_t ox = off(rng);
    net::Image out = flip && do_flip ? hflip(image) : image;
    return pad > 0 ? pad_crop(out, pad, oy, ox) : out;
}

double accuracy(const net::ModelParams& params, const data::Dataset& d) {
    if (d.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < d.size(); ++i) hits += net::predict(params, d.images[i]) == d.labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(d.size());
}

std::vector<std::size_t> epoch_order(const data::Dataset& d, bool balanced, std::mt19937_64& rng) {
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    if (!balanced) return order;
    std::vector<std::vector<std::size_t>> by_class(d.num_classes);
    for (auto i : order) by_class[d.labels[i]].push_back(i);
    // Round-robin over classes, each class consumed at its own rate so that
    // unequal class sizes still spread evenly over the epoch.
    std::vector<std::size_t> out;
    out.reserve(order.size());
    std::vector<std::size_t> taken(by_class.size(), 0);
    while (out.size() < order.size()) {
        std::size_t best = by_class.size();
        double best_frac = 2.0;
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            if (taken[c] == by_class[c].size()) continue;
            const double frac = (static_cast<double>(taken[c]) + 0.5) / static_cast<double>(by_class[c].size());
            if (frac < best_frac) {
                best_frac = frac;
                best = c;
            }
        }
        out.push_back(by_class[best][taken[best]++]);
    }
    return out;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

TrainResult train_loop(const net::ModelConfig& config, const TrainConfig& tc, const data::Dataset& train_set,
                       std::uint64_t seed, const data::Dataset* test_set, const EpochCallback& on_epoch) {
    tc.validate();
    train_set.validate();
    if (train_set.empty()) throw std::invalid_argument("train_loop: dataset is empty");
    if (train_set.num_classes > config.num_classes)
        throw std::invalid_argument("train_loop: dataset has more classes than the model");

    TrainResult result{net::build_model(config, seed), {}, 0, 0};
    const std::size_t n = train_set.size();
    const std::size_t per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
    const std::size_t total = per_epoch * tc.epochs;
    SamOptimizer opt(tc.sam_rho, tc.momentum);
    std::mt19937_64 order_rng(mix(seed ^ 0x5a5a5a5aULL));

    std::vector<net::Image> batch_images;
    std::vector<net::Sample> batch;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto order = epoch_order(train_set, tc.balanced_batches, order_rng);
        double loss_sum = 0.0;
        double lr = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            const std::size_t lo = b * tc.batch_size;
            const std::size_t hi = std::min(n, lo + tc.batch_size);
            batch_images.clear();
            batch.clear();
            for (std::size_t k = lo; k < hi; ++k) {
                const std::size_t idx = order[k];
                const bool any_aug = tc.hflip || tc.crop_pad > 0;
                batch_images.push_back(any_aug ? augment(train_set.images[idx], mix(seed ^ mix(epoch * n + k)),
                                                         tc.hflip, tc.crop_pad)
                                               : train_set.images[idx]);
            }
            for (std::size_t k = lo; k < hi; ++k) batch.push_back({&batch_images[k - lo], train_set.labels[order[k]]});
            lr = one_cycle_lr(result.steps, total, tc);
            const double loss = opt.step(result.params, batch, lr);
            if (!std::isfinite(loss))
                throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                       ", step " + std::to_string(result.steps),
                                   result.steps);
            loss_sum += loss * static_cast<double>(hi - lo);
            ++result.steps;
        }
        EpochMetrics m;
        m.epoch = epoch + 1;
        m.train_loss = loss_sum / static_cast<double>(n);
        m.train_acc = accuracy(result.params, train_set);
        if (test_set && !test_set->empty()) m.test_acc = accuracy(result.params, *test_set);
        m.lr_end = lr;
        result.history.push_back(m);
        if (on_epoch) on_epoch(m);
        if (tc.stop_at_train_acc && m.train_acc >= *tc.stop_at_train_acc) break;
    }
    result.sam_fallbacks = opt.fallback_steps();
    return result;
}

}  // namespace vcl::train
