#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vcl/net.hpp"

namespace vcl::data {

using net::Image;

struct Dataset {
    std::vector<Image> images;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 2;
    std::string split = "train";

    std::size_t size() const noexcept { return images.size(); }
    bool empty() const noexcept { return images.empty(); }
    /// Throws std::invalid_argument if lengths differ or a label is out of range.
    void validate() const;
    std::vector<net::Sample> samples() const;
};

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;

/// Reads up to max_records records of the CIFAR-10 binary layout (label byte,
/// then R, G, B planes of 32×32 bytes). Throws FormatError with the byte
/// offset on a truncated record or a label above 9.
Dataset load_cifar10(const std::string& path, std::size_t max_records = SIZE_MAX);
/// Same, from an in-memory buffer. *consumed receives the bytes used.
Dataset parse_cifar10(std::string_view bytes, std::size_t max_records = SIZE_MAX, std::size_t* consumed = nullptr);

enum class SynthKind { stripes, checker };
SynthKind synth_kind_from_string(std::string_view s);

struct SynthOptions {
    double noise = 0.05;
    std::size_t channels = 3;
    std::size_t band = 0;  ///< band/cell width in pixels; 0 picks side/8
};

/// Two-class synthetic images. stripes: label 0 horizontal bands, label 1
/// vertical bands, one bright and one dark band per 2·band period; the bright
/// band of every second period is drawn at half contrast, so patch means differ
/// between rows (or columns) of patches. checker: label is the phase of a
/// checkerboard with band-sized cells. Bright and dark levels are drawn per
/// image from [0.6, 1] and [0, 0.4]; Gaussian pixel noise is clipped to [0, 1].
Dataset synth_dataset(SynthKind kind, std::size_t n, std::size_t side, std::uint64_t seed,
                      const SynthOptions& options = {});

/// Parses a data source spec: `synth:<stripes|checker>:<n>:<seed>[:<side>]` or
/// `cifar:<path>[:<max>]`.
Dataset load_source(std::string_view spec);

}  // namespace vcl::data
