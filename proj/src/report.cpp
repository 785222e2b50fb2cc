#include "vcl/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vcl/errors.hpp"

namespace vcl::report {

using nlohmann::ordered_json;

Format format_from_path(const std::string& path) {
    const auto dot = path.rfind('.');
    if (dot != std::string::npos && path.substr(dot) == ".json") return Format::json;
    return Format::csv;
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

SpectraRow aggregate_row(const spectral::SpectraReport& r) {
    return {r.model_id, std::nullopt, std::nullopt, r.pooled_mean, r.pooled_std, std::string(spectral::to_string(r.method)),
            r.image_count};
}

std::vector<SpectraRow> spectra_rows(const spectral::SpectraReport& r) {
    std::vector<SpectraRow> rows;
    for (const auto& s : r.steps)
        rows.push_back({r.model_id, s.step_index, std::string(net::to_string(s.kind)), s.mean, s.std,
                        std::string(spectral::to_string(s.method)), s.count});
    rows.push_back(aggregate_row(r));
    return rows;
}

namespace {

void check_field(const std::string& f) {
    if (f.find_first_of(",\"\n\r") != std::string::npos)
        throw std::invalid_argument("report field '" + f + "' contains a separator");
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double to_double(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError("report: bad number '" + s + "' on line " + std::to_string(line));
    }
}

std::size_t to_count(const std::string& s, std::size_t line) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw FormatError("report: bad count '" + s + "' on line " + std::to_string(line));
    return std::stoull(s);
}

std::vector<std::vector<std::string>> parse_table(std::string_view text, std::string_view header, std::size_t width) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != header) throw FormatError("report: expected header '" + std::string(header) + "'");
    std::vector<std::vector<std::string>> rows;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        auto f = split_line(line);
        if (f.size() != width)
            throw FormatError("report: line " + std::to_string(n) + " has " + std::to_string(f.size()) + " fields");
        rows.push_back(std::move(f));
    }
    return rows;
}

}  // namespace

std::string spectra_csv(const std::vector<SpectraRow>& rows) {
    std::string out(kSpectraHeader);
    out += '\n';
    for (const auto& r : rows) {
        check_field(r.model);
        check_field(r.method);
        if (r.sublayer) check_field(*r.sublayer);
        out += r.model + ',' + (r.step ? std::to_string(*r.step) : "*") + ',' + r.sublayer.value_or("*") + ',' +
               format_number(r.sigma_mean) + ',' + format_number(r.sigma_std) + ',' + r.method + ',' +
               std::to_string(r.images) + '\n';
    }
    return out;
}

std::string attack_csv(const std::vector<AttackRow>& rows) {
    std::string out(kAttackHeader);
    out += '\n';
    for (const auto& r : rows) {
        check_field(r.model);
        check_field(r.attack);
        check_field(r.norm);
        out += r.model + ',' + r.attack + ',' + r.norm + ',' + format_number(r.epsilon) + ',' +
               format_number(r.robust_acc) + ',' + format_number(r.clean_acc) + '\n';
    }
    return out;
}

std::vector<SpectraRow> parse_spectra_csv(std::string_view text) {
    std::vector<SpectraRow> rows;
    std::size_t line = 1;
    for (auto& f : parse_table(text, kSpectraHeader, 7)) {
        ++line;
        SpectraRow r;
        r.model = f[0];
        if (f[1] != "*") r.step = to_count(f[1], line);
        if (f[2] != "*") r.sublayer = f[2];
        r.sigma_mean = to_double(f[3], line);
        r.sigma_std = to_double(f[4], line);
        r.method = f[5];
        r.images = to_count(f[6], line);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<AttackRow> parse_attack_csv(std::string_view text) {
    std::vector<AttackRow> rows;
    std::size_t line = 1;
    for (auto& f : parse_table(text, kAttackHeader, 6)) {
        ++line;
        rows.push_back({f[0], f[1], f[2], to_double(f[3], line), to_double(f[4], line), to_double(f[5], line)});
    }
    return rows;
}

namespace {

// Numbers are emitted as JSON numbers carrying exactly the %.6g digits.
ordered_json num(double v) { return ordered_json::parse(format_number(v)); }

ordered_json meta(const std::map<std::string, std::string>& m) {
    ordered_json j = ordered_json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
}

}  // namespace

std::string spectra_json(const std::vector<SpectraRow>& rows, const std::map<std::string, std::string>& metadata) {
    ordered_json j;
    j["metadata"] = meta(metadata);
    j["rows"] = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json o;
        o["model"] = r.model;
        o["step"] = r.step ? ordered_json(*r.step) : ordered_json("*");
        o["sublayer"] = r.sublayer.value_or("*");
        o["sigma_mean"] = num(r.sigma_mean);
        o["sigma_std"] = num(r.sigma_std);
        o["method"] = r.method;
        o["images"] = r.images;
        j["rows"].push_back(o);
    }
    return j.dump(2) + "\n";
}

std::string attack_json(const std::vector<AttackRow>& rows, const std::map<std::string, std::string>& metadata) {
    ordered_json j;
    j["metadata"] = meta(metadata);
    j["rows"] = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json o;
        o["model"] = r.model;
        o["attack"] = r.attack;
        o["norm"] = r.norm;
        o["epsilon"] = num(r.epsilon);
        o["robust_acc"] = num(r.robust_acc);
        o["clean_acc"] = num(r.clean_acc);
        j["rows"].push_back(o);
    }
    return j.dump(2) + "\n";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void emit_report(const std::vector<SpectraRow>& rows, Format format, const std::string& path,
                 const std::map<std::string, std::string>& metadata) {
    write_text(path, format == Format::csv ? spectra_csv(rows) : spectra_json(rows, metadata));
}

void emit_report(const std::vector<AttackRow>& rows, Format format, const std::string& path,
                 const std::map<std::string, std::string>& metadata) {
    write_text(path, format == Format::csv ? attack_csv(rows) : attack_json(rows, metadata));
}

DistributionReport distribution_report(std::span<const spectral::LayerSpectra> spectra, const std::string& model) {
    const auto agg = spectral::aggregate_spectra(spectra, model);
    DistributionReport r;
    r.model = model;
    r.method = std::string(spectral::to_string(agg.method));
    r.edge_to_middle_ratio = agg.edge_to_middle_ratio;
    for (std::size_t k = 0; k < spectra[0].steps.size(); ++k) {
        const auto kind = spectra[0].steps[k].kind;
        if (kind == net::SublayerKind::embed || kind == net::SublayerKind::head) continue;
        std::vector<double> vals;
        for (const auto& s : spectra) vals.push_back(s.steps[k].value());
        std::sort(vals.begin(), vals.end());
        StepDistribution d;
        d.step_index = spectra[0].steps[k].step_index;
        d.sublayer = std::string(net::to_string(kind));
        d.images = vals.size();
        d.min = vals.front();
        d.max = vals.back();
        const std::size_t m = vals.size() / 2;
        d.median = vals.size() % 2 ? vals[m] : 0.5 * (vals[m - 1] + vals[m]);
        for (const auto& s : agg.steps)
            if (s.step_index == d.step_index) {
                d.mean = s.mean;
                d.std = s.std;
            }
        r.steps.push_back(d);
    }
    return r;
}

std::string distribution_json(const DistributionReport& r) {
    ordered_json j;
    j["model"] = r.model;
    j["method"] = r.method;
    j["edge_to_middle_ratio"] = r.edge_to_middle_ratio ? num(*r.edge_to_middle_ratio) : ordered_json(nullptr);
    j["steps"] = ordered_json::array();
    for (const auto& d : r.steps) {
        ordered_json o;
        o["step"] = d.step_index;
        o["sublayer"] = d.sublayer;
        o["mean"] = num(d.mean);
        o["std"] = num(d.std);
        o["min"] = num(d.min);
        o["median"] = num(d.median);
        o["max"] = num(d.max);
        o["images"] = d.images;
        j["steps"].push_back(o);
    }
    return j.dump(2) + "\n";
}

std::string distribution_text(const DistributionReport& r) {
    std::ostringstream out;
    out << r.model << " (" << r.method << ")\n";
    out << "step  sublayer  mean      std       min       median    max\n";
    for (const auto& d : r.steps) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%4zu  %-8s  %-8.4g  %-8.4g  %-8.4g  %-8.4g  %-8.4g\n", d.step_index,
                      d.sublayer.c_str(), d.mean, d.std, d.min, d.median, d.max);
        out << buf;
    }
    out << "edge/middle ratio: " << (r.edge_to_middle_ratio ? format_number(*r.edge_to_middle_ratio) : "n/a") << "\n";
    return out.str();
}

}  // namespace vcl::report
