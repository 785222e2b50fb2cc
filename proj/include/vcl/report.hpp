#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vcl/spectral.hpp"

namespace vcl::report {

inline constexpr std::string_view kSpectraHeader = "model,step,sublayer,sigma_mean,sigma_std,method,images";
inline constexpr std::string_view kAttackHeader = "model,attack,norm,epsilon,robust_acc,clean_acc";

/// One spectra row. An absent step/sublayer renders as "*" (aggregate view).
struct SpectraRow {
    std::string model;
    std::optional<std::size_t> step;
    std::optional<std::string> sublayer;
    double sigma_mean = 0.0;
    double sigma_std = 0.0;
    std::string method;
    std::size_t images = 0;
    friend bool operator==(const SpectraRow&, const SpectraRow&) = default;
};

struct AttackRow {
    std::string model;
    std::string attack;
    std::string norm;
    double epsilon = 0.0;
    double robust_acc = 0.0;
    double clean_acc = 0.0;
    friend bool operator==(const AttackRow&, const AttackRow&) = default;
};

enum class Format { csv, json };
Format format_from_path(const std::string& path);

/// printf("%.6g").
std::string format_number(double v);

/// Per-step rows followed by the aggregate row (pooled over residual steps).
std::vector<SpectraRow> spectra_rows(const spectral::SpectraReport& report);
SpectraRow aggregate_row(const spectral::SpectraReport& report);

std::string spectra_csv(const std::vector<SpectraRow>& rows);
std::string attack_csv(const std::vector<AttackRow>& rows);
/// Throws FormatError on a wrong header or malformed line.
std::vector<SpectraRow> parse_spectra_csv(std::string_view text);
std::vector<AttackRow> parse_attack_csv(std::string_view text);

/// JSON mirror; numbers go through format_number. `metadata` is copied into a
/// top-level "metadata" object.
std::string spectra_json(const std::vector<SpectraRow>& rows, const std::map<std::string, std::string>& metadata = {});
std::string attack_json(const std::vector<AttackRow>& rows, const std::map<std::string, std::string>& metadata = {});

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

void emit_report(const std::vector<SpectraRow>& rows, Format format, const std::string& path,
                 const std::map<std::string, std::string>& metadata = {});
void emit_report(const std::vector<AttackRow>& rows, Format format, const std::string& path,
                 const std::map<std::string, std::string>& metadata = {});

/// Per-step distribution of σ across images.
struct StepDistribution {
    std::size_t step_index = 0;
    std::string sublayer;
    double mean = 0.0, std = 0.0, min = 0.0, median = 0.0, max = 0.0;
    std::size_t images = 0;
};

struct DistributionReport {
    std::string model;
    std::string method;
    std::vector<StepDistribution> steps;  ///< residual steps only
    std::optional<double> edge_to_middle_ratio;
};

DistributionReport distribution_report(std::span<const spectral::LayerSpectra> spectra, const std::string& model);
std::string distribution_json(const DistributionReport& r);
std::string distribution_text(const DistributionReport& r);

}  // namespace vcl::report
