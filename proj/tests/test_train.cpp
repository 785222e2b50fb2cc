#include <doctest.h>

#include <bit>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vcl/errors.hpp"
#include "vcl/presets.hpp"
#include "vcl/train.hpp"

using namespace vcl;
using namespace vcl::train;

namespace {

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
    return true;
}

}  // namespace

TEST_CASE("one-cycle schedule examples") {
    const TrainConfig c;
    CHECK(one_cycle_lr(0, 1000, c) == doctest::Approx(0.004).epsilon(1e-14));
    CHECK(one_cycle_lr(300, 1000, c) == 0.1);
    CHECK(one_cycle_lr(1000, 1000, c) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK_THROWS_AS(one_cycle_lr(1001, 1000, c), std::invalid_argument);
}

TEST_CASE("one-cycle schedule peaks at max_lr and moves in small steps") {
    const TrainConfig c;
    for (std::size_t total : {7, 10, 33, 640}) {
        double peak = 0.0, jump = 0.0, prev = one_cycle_lr(0, total, c);
        for (std::size_t s = 0; s <= total; ++s) {
            const double v = one_cycle_lr(s, total, c);
            peak = std::max(peak, v);
            jump = std::max(jump, std::abs(v - prev));
            prev = v;
        }
        CAPTURE(total);
        CHECK(peak == c.max_lr);
        // ramp slope and cosine slope are both O(max_lr / steps)
        CHECK(jump <= 4.0 * c.max_lr / (0.3 * static_cast<double>(total)) + 1e-15);
    }
}

TEST_CASE("SAM on a scalar quadratic") {
    const GradFn grad = [](std::span<const double> w) { return std::vector<double>{2.0 * w[0]}; };
    std::vector<double> w{1.0}, buf;
    const auto r = sam_update(w, buf, grad, 0.1, 0.1, 0.0);
    CHECK(w[0] == doctest::Approx(0.78).epsilon(1e-14));
    CHECK(r.grad_norm == doctest::Approx(2.0));
    CHECK_FALSE(r.fallback);

    std::vector<double> tiny{1.0}, sgd{1.0}, b1, b2;
    sam_update(tiny, b1, grad, 0.1, 1e-8, 0.0);
    sam_update(sgd, b2, grad, 0.1, 0.0, 0.0);
    CHECK(std::abs(tiny[0] - sgd[0]) < 1e-6);
    CHECK(sgd[0] == doctest::Approx(0.8));

    std::vector<double> zero{0.0}, b3;
    const auto f = sam_update(zero, b3, grad, 0.1, 0.05, 0.9);
    CHECK(f.fallback);
    CHECK(zero[0] == 0.0);
}

TEST_CASE("SAM with rho = 0 is momentum SGD bit for bit") {
    const auto c = presets::model_preset("CoViT-toy");
    const auto d = data::synth_dataset(data::SynthKind::stripes, 6, 32, 3);
    const auto s = d.samples();
    auto p = net::build_model(c, 3);
    SamOptimizer opt(0.0, 0.9);

    auto w = net::flatten(p);
    std::vector<double> buf(w.size(), 0.0);
    net::ModelParams scratch = p;
    for (int step = 0; step < 3; ++step) {
        const double lr = 0.01 * (step + 1);
        opt.step(p, s, lr);
        net::unflatten(scratch, w);
        const auto g = net::flatten(net::grad_params(scratch, s));
        for (std::size_t i = 0; i < w.size(); ++i) {
            buf[i] = 0.9 * buf[i] + g[i];
            w[i] -= lr * buf[i];
        }
        REQUIRE(bit_equal(net::flatten(p), w));
    }
    CHECK(opt.fallback_steps() == 0);
}

TEST_CASE("sam_step ascends along the normalized gradient") {
    const auto c = presets::model_preset("ViT-toy");
    const auto d = data::synth_dataset(data::SynthKind::stripes, 4, 32, 4);
    const auto s = d.samples();
    const auto p = net::build_model(c, 4);
    const double rho = 0.05, lr = 0.1;
    const auto out = sam_step(p, s, lr, rho);

    const auto w = net::flatten(p);
    const auto g = net::flatten(net::grad_params(p, s));
    const double gn = norm2(g);
    auto adv = w;
    for (std::size_t i = 0; i < w.size(); ++i) adv[i] += rho * g[i] / gn;
    net::ModelParams q = p;
    net::unflatten(q, adv);
    const auto ga = net::flatten(net::grad_params(q, s));
    auto expect = w;
    for (std::size_t i = 0; i < w.size(); ++i) expect[i] -= lr * ga[i];
    CHECK(oracle::rel_error(net::flatten(out), expect) < 1e-14);
    CHECK(sam_step(p, s, lr, rho) == out);
}

TEST_CASE("augmentation") {
    std::mt19937_64 rng(2);
    const auto img = oracle::random_image(3, 8, rng);
    CHECK(hflip(hflip(img)) == img);
    CHECK(hflip(img).at(1, 2, 0) == img.at(1, 2, 7));
    CHECK(pad_crop(img, 4, 4, 4) == img);
    const auto shifted = pad_crop(img, 4, 0, 4);
    CHECK(shifted.at(0, 4, 3) == img.at(0, 0, 3));
    CHECK(shifted.at(0, 0, 3) == 0.0);
    CHECK_THROWS_AS(pad_crop(img, 4, 9, 0), std::invalid_argument);

    bool flipped = false, moved = false;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto a = augment(img, seed);
        CHECK(a == augment(img, seed));
        for (double v : a.pixels) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        flipped |= augment(img, seed, true, 0) == hflip(img);
        moved |= !(augment(img, seed, false, 4) == img);
    }
    CHECK(flipped);
    CHECK(moved);
    CHECK(augment(img, 7, false, 0) == img);
}

TEST_CASE("epoch order is a permutation; balanced order interleaves classes") {
    auto d = data::synth_dataset(data::SynthKind::stripes, 20, 8, 1);
    std::mt19937_64 rng(1);
    for (bool balanced : {false, true}) {
        auto o = epoch_order(d, balanced, rng);
        auto sorted = o;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
        if (balanced)
            for (std::size_t i = 0; i + 1 < o.size(); i += 2) CHECK(d.labels[o[i]] != d.labels[o[i + 1]]);
    }
}

TEST_CASE("train config JSON and validation") {
    TrainConfig c = presets::toy_train_config();
    c.stop_at_train_acc = 0.99;
    const auto back = train_config_from_json(train_config_to_json(c));
    CHECK(back.epochs == c.epochs);
    CHECK(back.max_lr == c.max_lr);
    CHECK(back.sam_rho == c.sam_rho);
    CHECK(back.hflip == c.hflip);
    CHECK(back.crop_pad == c.crop_pad);
    CHECK(back.stop_at_train_acc == c.stop_at_train_acc);
    CHECK(train_config_from_json("{}").max_lr == 0.1);

    TrainConfig bad;
    bad.max_lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = TrainConfig{};
    bad.warmup_fraction = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("train_loop contracts") {
    const auto c = presets::model_preset("ViT-toy");
    const auto d = data::synth_dataset(data::SynthKind::stripes, 8, 32, 2);
    TrainConfig tc = presets::toy_train_config();
    tc.epochs = 0;
    const auto none = train_loop(c, tc, d, 11);
    CHECK(none.params == net::build_model(c, 11));
    CHECK(none.history.empty());

    tc.epochs = 2;
    tc.batch_size = 4;
    tc.hflip = true;
    tc.crop_pad = 2;
    std::size_t calls = 0;
    const auto a = train_loop(c, tc, d, 11, &d, [&](const EpochMetrics&) { ++calls; });
    const auto b = train_loop(c, tc, d, 11, &d);
    CHECK(calls == 2);
    CHECK(a.steps == 4);
    CHECK(a.params == b.params);
    REQUIRE(a.history.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
        CHECK(std::bit_cast<std::uint64_t>(a.history[e].train_loss) ==
              std::bit_cast<std::uint64_t>(b.history[e].train_loss));
        CHECK(a.history[e].test_acc.has_value());
    }

    tc.max_lr = 1e30;
    tc.sam_rho = 0.0;
    CHECK_THROWS_WITH_AS(train_loop(c, tc, d, 11), doctest::Contains("epoch"), NumericError);
    CHECK_THROWS_AS(train_loop(c, presets::toy_train_config(), data::Dataset{}, 1), std::invalid_argument);
}

TEST_CASE("ten samples are memorized within 500 steps") {
    for (const char* name : {"ViT-toy", "CoViT-toy"}) {
        const auto d = data::synth_dataset(data::SynthKind::stripes, 10, 32, 5);
        const auto s = d.samples();
        auto p = net::build_model(presets::model_preset(name), 5);
        SamOptimizer opt(0.02, 0.9);
        double loss = 1.0;
        for (int k = 0; k < 500 && loss >= 1e-2; ++k) {
            opt.step(p, s, 0.01);
            loss = net::mean_loss(p, s);
        }
        CAPTURE(name);
        CHECK(loss < 1e-2);
    }
}
