// vcl: train toy ViT/CoViT models, attack them, measure per-step spectra.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vcl/attack.hpp"
#include "vcl/checkpoint.hpp"
#include "vcl/checks.hpp"
#include "vcl/dataset.hpp"
#include "vcl/errors.hpp"
#include "vcl/presets.hpp"
#include "vcl/report.hpp"
#include "vcl/spectral.hpp"
#include "vcl/train.hpp"

namespace {

using namespace vcl;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

net::ModelConfig model_from_json(const nlohmann::json& j) {
    if (j.is_string()) return presets::model_preset(j.get<std::string>());
    return net::config_from_json(j.dump());
}

std::vector<attack::LabeledImage> labeled(const data::Dataset& d) {
    std::vector<attack::LabeledImage> out;
    for (std::size_t i = 0; i < d.size(); ++i) out.push_back({&d.images[i], d.labels[i]});
    return out;
}

std::map<std::string, std::string> metadata(const std::string& model_id, const net::ModelConfig& c) {
    std::map<std::string, std::string> m{{"config", net::config_to_json(c)}};
    try {
        m["scale"] = presets::preset_scale_note(model_id);
    } catch (const std::invalid_argument&) {
    }
    return m;
}

int cmd_train(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed_flag,
              const std::string& metrics_path) {
    const auto j = nlohmann::json::parse(report::read_text(config_path));
    if (!j.contains("model")) throw UsageError("train config needs a \"model\" entry");
    const auto model = model_from_json(j["model"]);
    train::TrainConfig tc =
        j.contains("train") ? train::train_config_from_json(j["train"].dump()) : presets::toy_train_config();
    const auto train_set = data::load_source(j.value("data", std::string("synth:stripes:256:1")));
    std::optional<data::Dataset> test_set;
    if (j.contains("test_data")) test_set = data::load_source(j["test_data"].get<std::string>());
    const std::uint64_t seed = seed_flag ? *seed_flag : j.value("seed", std::uint64_t{7});

    std::string metrics = "epoch,train_loss,train_acc,test_acc\n";
    const auto result = train::train_loop(model, tc, train_set, seed, test_set ? &*test_set : nullptr,
                                          [&](const train::EpochMetrics& m) {
                                              const std::string test = m.test_acc ? report::format_number(*m.test_acc) : "";
                                              std::printf("epoch %zu  loss %s  train_acc %s  test_acc %s\n", m.epoch,
                                                          report::format_number(m.train_loss).c_str(),
                                                          report::format_number(m.train_acc).c_str(),
                                                          test.empty() ? "-" : test.c_str());
                                              std::fflush(stdout);
                                              metrics += std::to_string(m.epoch) + ',' +
                                                         report::format_number(m.train_loss) + ',' +
                                                         report::format_number(m.train_acc) + ',' + test + '\n';
                                          });
    ckpt::save(result.params, out);
    if (!metrics_path.empty()) report::write_text(metrics_path, metrics);
    if (result.sam_fallbacks > 0) std::printf("sam fallback steps: %zu\n", result.sam_fallbacks);
    std::printf("saved %s (%zu parameters)\n", out.c_str(), result.params.parameter_count());
    return 0;
}

int cmd_attack(const std::string& ckpt_path, const std::string& attack_name, const std::string& source,
               const std::string& report_path, const std::string& model_id) {
    const auto params = ckpt::load(ckpt_path);
    const auto config = presets::resolve_attack(attack_name, params.config.pixel_count());
    const auto d = data::load_source(source);
    const auto items = labeled(d);
    const attack::ModelClassifier model(params);
    report::AttackRow row{model_id,
                          attack_name,
                          std::string(attack::to_string(config.norm)),
                          config.epsilon,
                          attack::robust_accuracy(model, items, config),
                          attack::clean_accuracy(model, items)};
    report::emit_report(std::vector{row}, report::format_from_path(report_path), report_path,
                        metadata(model_id, params.config));
    std::cout << report::attack_csv({row});
    return 0;
}

int cmd_spectra(const std::string& ckpt_path, const std::string& source, const std::string& mode_name,
                const std::string& report_path, const std::string& model_id, std::size_t max_images,
                const std::string& distribution_path) {
    const auto params = ckpt::load(ckpt_path);
    const auto mode = spectral::mode_from_string(mode_name);
    auto d = data::load_source(source);
    if (max_images > 0 && d.size() > max_images) d.images.resize(max_images);
    const auto spectra = spectral::dataset_spectra(params, d.images, mode);
    const auto agg = spectral::aggregate_spectra(spectra, model_id);
    const auto rows = report::spectra_rows(agg);
    report::emit_report(rows, report::format_from_path(report_path), report_path, metadata(model_id, params.config));
    if (!distribution_path.empty()) {
        const auto dist = report::distribution_report(spectra, model_id);
        report::write_text(distribution_path, report::distribution_json(dist));
        std::cout << report::distribution_text(dist);
    }
    std::cout << report::spectra_csv({rows.back()});
    return 0;
}

std::vector<double> residual_trajectory(const std::vector<report::SpectraRow>& rows) {
    std::vector<std::pair<std::size_t, double>> pts;
    for (const auto& r : rows)
        if (r.step && r.sublayer && (*r.sublayer == "attn" || *r.sublayer == "conv" || *r.sublayer == "mlp"))
            pts.emplace_back(*r.step, r.sigma_mean);
    std::sort(pts.begin(), pts.end());
    std::vector<double> out;
    for (const auto& p : pts) out.push_back(p.second);
    return out;
}

int cmd_compare(const std::string& a_path, const std::string& b_path) {
    const auto a = report::parse_spectra_csv(report::read_text(a_path));
    const auto b = report::parse_spectra_csv(report::read_text(b_path));
    const auto ta = residual_trajectory(a);
    const auto tb = residual_trajectory(b);
    const auto cmp = spectral::compare_models(ta, tb);
    auto integral = [](const std::vector<double>& t) {
        double s = 0.0;
        for (double v : t) s += v;
        return s;
    };
    std::printf("a: %s  steps %zu  integral %s\n", a.empty() ? "?" : a.front().model.c_str(), ta.size(),
                report::format_number(integral(ta)).c_str());
    std::printf("b: %s  steps %zu  integral %s\n", b.empty() ? "?" : b.front().model.c_str(), tb.size(),
                report::format_number(integral(tb)).c_str());
    std::printf("ordering: %s%s\n", std::string(spectral::to_string(cmp.ordering)).c_str(),
                cmp.equal ? " (identical trajectories)" : "");
    return 0;
}

int cmd_odecheck(const std::string& ckpt_path, std::uint64_t seed) {
    bool ok = true;
    std::printf("%-28s %-10s %-12s %-12s %s\n", "check", "case", "measured", "bound", "result");
    for (const auto& c : checks::euler_bound_suite()) {
        char name[32];
        std::snprintf(name, sizeof name, "l=%g n=%zu", c.lambda, c.steps);
        const bool pass = c.violations == 0;
        ok = ok && pass;
        std::printf("%-28s %-10s %-12.4g %-12.4g %s\n", "euler error bound", name, c.max_error, c.bound,
                    pass ? "pass" : "FAIL");
    }
    const auto params =
        ckpt_path.empty() ? net::build_model(presets::model_preset("ViT-toy"), seed) : ckpt::load(ckpt_path);
    const auto d = data::synth_dataset(data::SynthKind::stripes, 10, params.config.image_side, seed);
    const auto cases = checks::growth_bound_suite(params, d.images, 100, 1e-4, 0.05, seed);
    std::size_t violations = 0;
    double worst = 0.0;
    for (const auto& c : cases) {
        violations += c.violated ? 1 : 0;
        worst = std::max(worst, c.distortion / c.bound);
    }
    ok = ok && violations == 0;
    std::printf("%-28s %-10s %-12.4g %-12.4g %s\n", "growth bound (100 trials)", "max ratio", worst, 1.0,
                violations == 0 ? "pass" : "FAIL");
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Toy vision transformer robustness lab"};
    app.require_subcommand(1);

    std::string config_path, out_path, metrics_path;
    std::optional<std::uint64_t> seed;
    auto* train = app.add_subcommand("train", "train a model from a JSON config");
    train->add_option("--config", config_path, "JSON config file")->required();
    train->add_option("--out", out_path, "checkpoint path")->required();
    train->add_option("--seed", seed, "overrides the config seed");
    train->add_option("--metrics", metrics_path, "per-epoch CSV");

    std::string ckpt_path, attack_name, source, report_path, model_id = "model", mode = "exact", dist_path;
    std::size_t max_images = 0;
    auto* attack = app.add_subcommand("attack", "robust accuracy under an attack");
    attack->add_option("--ckpt", ckpt_path)->required();
    attack->add_option("--attack", attack_name, "preset (fgsm, pgd7-linf, pgd7-l2, pgd20-l2, cw) or JSON file")
        ->required();
    attack->add_option("--data", source, "synth:<kind>:<n>:<seed> or cifar:<path>[:<max>]")->required();
    attack->add_option("--report", report_path, ".csv or .json")->required();
    attack->add_option("--model-id", model_id);

    auto* spectra = app.add_subcommand("spectra", "per-step largest singular values");
    spectra->add_option("--ckpt", ckpt_path)->required();
    spectra->add_option("--data", source)->required();
    spectra->add_option("--mode", mode, "exact, bound or both")->check(CLI::IsMember({"exact", "bound", "both"}));
    spectra->add_option("--report", report_path)->required();
    spectra->add_option("--model-id", model_id);
    spectra->add_option("--images", max_images, "use at most this many images");
    spectra->add_option("--distribution", dist_path, "per-step distribution JSON");

    std::string report_a, report_b;
    auto* compare = app.add_subcommand("compare", "compare two spectra reports");
    compare->add_option("--report-a", report_a)->required();
    compare->add_option("--report-b", report_b)->required();

    std::uint64_t ode_seed = 7;
    auto* odecheck = app.add_subcommand("odecheck", "Euler error and growth bound suites");
    odecheck->add_option("--ckpt", ckpt_path, "model for the growth suite (default: untrained ViT-toy)");
    odecheck->add_option("--seed", ode_seed);

    if (argc <= 1) {
        std::cerr << app.help();
        return 1;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        return 1;
    }

    try {
        if (*train) return cmd_train(config_path, out_path, seed, metrics_path);
        if (*attack) return cmd_attack(ckpt_path, attack_name, source, report_path, model_id);
        if (*spectra) return cmd_spectra(ckpt_path, source, mode, report_path, model_id, max_images, dist_path);
        if (*compare) return cmd_compare(report_a, report_b);
        if (*odecheck) return cmd_odecheck(ckpt_path, ode_seed);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ResourceLimitError& e) {
        std::cerr << "resource limit: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
