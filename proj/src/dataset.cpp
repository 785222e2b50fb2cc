#include "vcl/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <stdexcept>

#include "vcl/errors.hpp"

namespace vcl::data {

void Dataset::validate() const {
    if (images.size() != labels.size()) throw std::invalid_argument("dataset: images and labels differ in length");
    for (auto l : labels)
        if (l >= num_classes) throw std::invalid_argument("dataset: label " + std::to_string(l) + " out of range");
}

std::vector<net::Sample> Dataset::samples() const {
    std::vector<net::Sample> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back({&images[i], labels[i]});
    return out;
}

Dataset parse_cifar10(std::string_view bytes, std::size_t max_records, std::size_t* consumed) {
    Dataset d;
    d.num_classes = 10;
    d.split = "cifar";
    constexpr std::size_t plane = kCifarSide * kCifarSide;
    std::size_t off = 0;
    while (off < bytes.size() && d.size() < max_records) {
        if (bytes.size() - off < kCifarRecordBytes)
            throw FormatError("cifar10: truncated record at byte offset " + std::to_string(off));
        const auto label = static_cast<unsigned char>(bytes[off]);
        if (label > 9)
            throw FormatError("cifar10: label " + std::to_string(label) + " at byte offset " + std::to_string(off));
        Image img(3, kCifarSide);
        for (std::size_t i = 0; i < 3 * plane; ++i)
            img.pixels[i] = static_cast<unsigned char>(bytes[off + 1 + i]) / 255.0;
        d.images.push_back(std::move(img));
        d.labels.push_back(label);
        off += kCifarRecordBytes;
    }
    if (consumed) *consumed = off;
    return d;
}

Dataset load_cifar10(const std::string& path, std::size_t max_records) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cifar10: cannot open " + path);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_cifar10(bytes, max_records);
}

SynthKind synth_kind_from_string(std::string_view s) {
    if (s == "stripes") return SynthKind::stripes;
    if (s == "checker") return SynthKind::checker;
    throw std::invalid_argument("unknown synthetic dataset '" + std::string(s) + "'");
}

Dataset synth_dataset(SynthKind kind, std::size_t n, std::size_t side, std::uint64_t seed,
                      const SynthOptions& options) {
    if (n < 2) throw std::invalid_argument("synth_dataset: n must be at least 2");
    if (side < 4) throw std::invalid_argument("synth_dataset: side must be at least 4");
    Dataset d;
    d.split = kind == SynthKind::stripes ? "stripes" : "checker";
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> bright(0.6, 1.0), dark(0.0, 0.4);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t band = options.band > 0 ? options.band : std::max<std::size_t>(1, side / 8);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % 2;
        const double hi = bright(rng);
        const double lo = dark(rng);
        Image img(options.channels, side);
        for (std::size_t c = 0; c < options.channels; ++c)
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x) {
                    double v = lo;
                    if (kind == SynthKind::stripes) {
                        const std::size_t u = label == 0 ? y : x;
                        if ((u / band) % 2 == 0) v = (u / (2 * band)) % 2 == 0 ? hi : 0.5 * (hi + lo);
                    } else if (((y / band + x / band) % 2 == 0) == (label == 0)) {
                        v = hi;
                    }
                    if (options.noise > 0.0) v += options.noise * noise(rng);
                    img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
                }
        d.images.push_back(std::move(img));
        d.labels.push_back(label);
    }
    return d;
}

namespace {

std::vector<std::string> split_colon(std::string_view s) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in{std::string(s)};
    while (std::getline(in, cur, ':')) parts.push_back(cur);
    return parts;
}

}  // namespace

Dataset load_source(std::string_view spec) {
    const auto p = split_colon(spec);
    if (p.size() >= 4 && p[0] == "synth") {
        const std::size_t side = p.size() >= 5 ? std::stoul(p[4]) : 32;
        return synth_dataset(synth_kind_from_string(p[1]), std::stoul(p[2]), side, std::stoull(p[3]));
    }
    if (p.size() >= 2 && p[0] == "cifar") {
        const std::size_t max = p.size() >= 3 ? std::stoul(p[2]) : SIZE_MAX;
        return load_cifar10(p[1], max);
    }
    throw std::invalid_argument("bad data source '" + std::string(spec) +
                                "' (expected synth:<kind>:<n>:<seed>[:<side>] or cifar:<path>[:<max>])");
}

}  // namespace vcl::data
