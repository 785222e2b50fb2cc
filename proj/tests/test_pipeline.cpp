#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "oracles.hpp"
#include "vcl/checkpoint.hpp"
#include "vcl/dataset.hpp"
#include "vcl/errors.hpp"
#include "vcl/presets.hpp"
#include "vcl/report.hpp"

using namespace vcl;
namespace fs = std::filesystem;

namespace {

std::string cifar_record(std::uint8_t label, std::uint8_t fill) {
    std::string r(data::kCifarRecordBytes, static_cast<char>(fill));
    r[0] = static_cast<char>(label);
    return r;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("vcl_pipeline_" + name); }

// Mean of every 8×8 patch over all channels, plus a constant feature.
std::vector<double> patch_means(const net::Image& img) {
    const std::size_t p = 8, g = img.side / p;
    std::vector<double> f(g * g + 1, 0.0);
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < img.side; ++y)
            for (std::size_t x = 0; x < img.side; ++x) f[(y / p) * g + x / p] += img.at(c, y, x);
    for (std::size_t i = 0; i < g * g; ++i) f[i] /= static_cast<double>(p * p * img.channels);
    f.back() = 1.0;
    return f;
}

}  // namespace

TEST_CASE("cifar10 binary parsing") {
    std::string bytes = cifar_record(3, 255) + cifar_record(9, 0);
    std::size_t used = 0;
    const auto d = data::parse_cifar10(bytes, SIZE_MAX, &used);
    CHECK(used == 6146);
    REQUIRE(d.size() == 2);
    CHECK(d.num_classes == 10);
    CHECK(d.labels == std::vector<std::size_t>{3, 9});
    CHECK(d.images[0].channels == 3);
    CHECK(d.images[0].side == 32);
    for (double v : d.images[0].pixels) REQUIRE(v == 1.0);
    for (double v : d.images[1].pixels) REQUIRE(v == 0.0);

    std::string planes = cifar_record(0, 0);
    planes[1] = static_cast<char>(51);          // R at (0, 0)
    planes[1 + 1024 + 33] = static_cast<char>(102);  // G at (1, 1)
    const auto one = data::parse_cifar10(planes);
    CHECK(one.images[0].at(0, 0, 0) == doctest::Approx(0.2));
    CHECK(one.images[0].at(1, 1, 1) == doctest::Approx(0.4));

    CHECK(data::parse_cifar10(bytes, 1, &used).size() == 1);
    CHECK(used == 3073);

    CHECK_THROWS_WITH_AS(data::parse_cifar10(bytes.substr(0, 5000)), doctest::Contains("3073"), FormatError);
    CHECK_THROWS_WITH_AS(data::parse_cifar10(cifar_record(1, 0) + cifar_record(10, 0)),
                         doctest::Contains("offset 3073"), FormatError);

    const auto path = temp_path("cifar.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out << bytes;
    }
    CHECK(data::load_cifar10(path.string()).size() == 2);
    CHECK(data::load_source("cifar:" + path.string() + ":1").size() == 1);
    fs::remove(path);
}

TEST_CASE("synthetic datasets") {
    for (auto kind : {data::SynthKind::stripes, data::SynthKind::checker}) {
        const auto a = data::synth_dataset(kind, 31, 32, 4), b = data::synth_dataset(kind, 31, 32, 4);
        CHECK(a.images == b.images);
        CHECK(a.labels == b.labels);
        const auto c = data::synth_dataset(kind, 31, 32, 5);
        CHECK_FALSE(a.images == c.images);
        std::ptrdiff_t bal = 0;
        for (auto l : a.labels) bal += l == 0 ? 1 : -1;
        CHECK(std::abs(bal) <= 1);
        for (const auto& img : a.images)
            for (double v : img.pixels) REQUIRE((v >= 0.0 && v <= 1.0));
        a.validate();
    }
    CHECK(data::load_source("synth:stripes:6:3").images == data::synth_dataset(data::SynthKind::stripes, 6, 32, 3).images);
    CHECK(data::load_source("synth:checker:4:1:16").images[0].side == 16);
    CHECK_THROWS_AS(data::load_source("synth:waves:4:1"), std::invalid_argument);
    CHECK_THROWS_AS(data::load_source("synth:stripes:x:1"), std::invalid_argument);
    CHECK_THROWS_AS(data::load_source("imagenet:/tmp"), std::invalid_argument);
    CHECK_THROWS_AS(data::synth_dataset(data::SynthKind::stripes, 1, 32, 1), std::invalid_argument);
}

TEST_CASE("noiseless stripes are linearly separable on patch means") {
    data::SynthOptions opt;
    opt.noise = 0.0;
    const auto d = data::synth_dataset(data::SynthKind::stripes, 64, 32, 9, opt);
    std::vector<std::vector<double>> feats;
    for (const auto& img : d.images) feats.push_back(patch_means(img));
    std::vector<double> w(feats[0].size(), 0.0);
    std::size_t errors = d.size();
    for (int epoch = 0; epoch < 2000 && errors > 0; ++epoch) {
        errors = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double target = d.labels[i] == 0 ? 1.0 : -1.0;
            double s = 0.0;
            for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * feats[i][k];
            if (s * target <= 0.0) {
                ++errors;
                for (std::size_t k = 0; k < w.size(); ++k) w[k] += target * feats[i][k];
            }
        }
    }
    CHECK(errors == 0);
}

TEST_CASE("checkpoint round trip and corruption") {
    for (const char* name : {"ViT-toy", "CoViT-toy"}) {
        auto p = net::build_model(presets::model_preset(name), 12);
        oracle::roughen(p, 12, 0.5);
        const auto bytes = ckpt::serialize(p);
        CHECK(bytes.size() == ckpt::header_size(p.config) + 8 * net::flatten(p).size());
        const auto back = ckpt::deserialize(bytes);
        CHECK(back == p);
        CHECK(ckpt::serialize(back) == bytes);

        auto bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_WITH_AS(ckpt::deserialize(bad), doctest::Contains("magic"), FormatError);
        bad = bytes;
        bad[4] = 7;
        CHECK_THROWS_WITH_AS(ckpt::deserialize(bad), doctest::Contains("version"), FormatError);
        CHECK_THROWS_WITH_AS(ckpt::deserialize(bytes.substr(0, bytes.size() - 3)), doctest::Contains("truncated"),
                             FormatError);
        CHECK_THROWS_AS(ckpt::deserialize(bytes.substr(0, 10)), FormatError);
        CHECK_THROWS_WITH_AS(ckpt::deserialize(bytes + "x"), doctest::Contains("trailing"), FormatError);

        const auto path = temp_path("model.ckpt");
        ckpt::save(p, path.string());
        CHECK(fs::file_size(path) == bytes.size());
        CHECK(ckpt::load(path.string()) == p);
        fs::remove(path);
    }
    CHECK_THROWS_AS(ckpt::load("/nonexistent/dir/model.ckpt"), std::runtime_error);
}

TEST_CASE("spectra CSV rows") {
    const report::SpectraRow agg{"ViT-T1", std::nullopt, std::nullopt, 10.45, 4.125, "exact", 500};
    const auto text = report::spectra_csv({agg});
    CHECK(text == std::string(report::kSpectraHeader) + "\nViT-T1,*,*,10.45,4.125,exact,500\n");
    CHECK(report::spectra_csv({}) == std::string(report::kSpectraHeader) + "\n");
    CHECK(report::parse_spectra_csv(report::spectra_csv({})).empty());

    const std::vector<report::SpectraRow> rows{{"m", 1, "attn", 1.0 / 3.0, 0.0, "bound", 2}, agg};
    const auto back = report::parse_spectra_csv(report::spectra_csv(rows));
    REQUIRE(back.size() == 2);
    CHECK(back[1] == agg);
    CHECK(back[0].step == 1u);
    CHECK(back[0].sigma_mean == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    CHECK(report::format_number(1.0 / 3.0) == "0.333333");

    CHECK_THROWS_AS(report::parse_spectra_csv("model,step\nx,1\n"), FormatError);
    CHECK_THROWS_AS(report::parse_spectra_csv(std::string(report::kSpectraHeader) + "\nm,1,attn,abc,0,exact,1\n"),
                    FormatError);
    CHECK_THROWS_AS(report::parse_spectra_csv(std::string(report::kSpectraHeader) + "\nm,1,attn\n"), FormatError);
    CHECK_THROWS_AS(report::spectra_csv({{"a,b", 1, "attn", 1.0, 0.0, "exact", 1}}), std::invalid_argument);
}

TEST_CASE("attack CSV and JSON mirror") {
    const report::AttackRow row{"ViT-S1", "fgsm", "linf", 2.0 / 255.0, 0.213, 0.676};
    const auto text = report::attack_csv({row});
    CHECK(text == std::string(report::kAttackHeader) + "\nViT-S1,fgsm,linf,0.00784314,0.213,0.676\n");
    const auto back = report::parse_attack_csv(text);
    REQUIRE(back.size() == 1);
    CHECK(back[0].robust_acc == 0.213);
    CHECK(back[0].clean_acc == 0.676);

    const auto j = nlohmann::json::parse(report::attack_json({row}, {{"seed", "7"}}));
    CHECK(j["metadata"]["seed"] == "7");
    REQUIRE(j["rows"].size() == 1);
    CHECK(j["rows"][0]["model"] == "ViT-S1");
    CHECK(j["rows"][0]["robust_acc"].get<double>() == 0.213);

    const auto s = nlohmann::json::parse(
        report::spectra_json({{"ViT-T1", std::nullopt, std::nullopt, 10.45, 4.125, "exact", 500}}));
    CHECK(s["rows"][0]["step"] == "*");
    CHECK(s["rows"][0]["sigma_mean"].get<double>() == 10.45);
    CHECK(s["rows"][0]["images"] == 500);

    CHECK(report::format_from_path("out/a.json") == report::Format::json);
    CHECK(report::format_from_path("a.csv") == report::Format::csv);
    const auto path = temp_path("attack.csv");
    report::emit_report(std::vector<report::AttackRow>{row}, report::Format::csv, path.string());
    CHECK(report::read_text(path.string()) == text);
    fs::remove(path);
}

TEST_CASE("spectra report rows and distribution") {
    auto p = net::build_model(presets::model_preset("ViT-toy"), 14);
    oracle::roughen(p, 14, 0.1);
    std::mt19937_64 rng(14);
    std::vector<net::Image> imgs;
    for (int i = 0; i < 3; ++i) imgs.push_back(oracle::random_image(3, 32, rng));
    const auto ls = spectral::dataset_spectra(p, imgs, spectral::Mode::exact);
    const auto rep = spectral::aggregate_spectra(ls, "toy");
    const auto rows = report::spectra_rows(rep);
    REQUIRE(rows.size() == net::step_count(p.config) + 1);
    CHECK(rows.back().model == "toy");
    CHECK_FALSE(rows.back().step.has_value());
    CHECK(rows.back().sigma_mean == rep.pooled_mean);
    CHECK(rows.back().images == 3);
    CHECK(rows.front().sublayer == "embed");
    CHECK(rows[rows.size() - 2].sublayer == "head");

    const auto dist = report::distribution_report(ls, "toy");
    REQUIRE(dist.steps.size() == 2 * p.config.depth);
    for (const auto& s : dist.steps) {
        CHECK(s.images == 3);
        CHECK(s.min <= s.median);
        CHECK(s.median <= s.max);
        CHECK(s.mean >= s.min);
        CHECK(s.mean <= s.max);
    }
    CHECK(nlohmann::json::parse(report::distribution_json(dist))["steps"].size() == dist.steps.size());
    CHECK(report::distribution_text(dist).find("toy") != std::string::npos);
}

TEST_CASE("presets") {
    const auto names = presets::model_preset_names();
    CHECK(names.size() == 30);
    for (const auto& n : names) {
        const auto c = presets::model_preset(n);
        CHECK(c.image_side == 32);
        CHECK_FALSE(presets::preset_scale_note(n).empty());
    }
    CHECK(presets::model_preset("CoViT-M2").kernel_sizes == std::vector<std::size_t>{1, 3, 5, 7});
    CHECK(presets::model_preset("ViT-L").depth == 12);
    CHECK_THROWS_AS(presets::model_preset("ViT-XL"), std::invalid_argument);

    const auto f = presets::attack_preset("fgsm");
    CHECK(f.epsilon == 2.0 / 255.0);
    CHECK(presets::attack_preset("pgd7-linf").iters == 7);
    CHECK(presets::attack_preset("pgd20-l2").iters == 20);
    CHECK(presets::attack_preset("pgd7-l2").epsilon == 2.0);
    CHECK(presets::attack_preset("cw", 150528).cw.success_threshold == doctest::Approx(260.0));

    const auto j = presets::attack_config_from_json(R"({"kind":"pgd","norm":"l2","epsilon":0.5,"alpha":0.1,"iters":3})");
    CHECK(j.kind == attack::Kind::pgd);
    CHECK(j.norm == attack::Norm::l2);
    CHECK(j.epsilon == 0.5);
    CHECK(j.iters == 3);
    CHECK_THROWS_AS(presets::attack_config_from_json(R"({"iters":0})"), std::invalid_argument);
    CHECK_THROWS_AS(presets::resolve_attack("/nonexistent.json", 3072), std::invalid_argument);
    CHECK(presets::resolve_attack("fgsm", 3072).epsilon == f.epsilon);

    const auto t = presets::toy_train_config();
    t.validate();
    CHECK(t.batch_size == 16);
}
