#include "vcl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "vcl/errors.hpp"

namespace vcl::ckpt {

namespace {

template <class U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

template <class U>
U get_le(std::string_view in, std::size_t off) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    return v;
}

void need(std::string_view bytes, std::size_t off, std::size_t n, const char* what) {
    if (bytes.size() < off || bytes.size() - off < n)
        throw FormatError(std::string("checkpoint: truncated ") + what + " at byte offset " + std::to_string(off));
}

}  // namespace

std::size_t header_size(const net::ModelConfig& config) { return 4 + 4 + 8 + net::config_to_json(config).size(); }

std::string serialize(const net::ModelParams& params) {
    const std::string json = net::config_to_json(params.config);
    std::string out(kMagic, 4);
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint64_t>(out, json.size());
    out += json;
    out.reserve(out.size() + 8 * params.parameter_count());
    for (const auto* m : params.tensors())
        for (double v : m->data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

net::ModelParams deserialize(std::string_view bytes) {
    need(bytes, 0, 4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
    need(bytes, 4, 4, "version");
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kVersion) + ")");
    need(bytes, 8, 8, "config length");
    const auto len = get_le<std::uint64_t>(bytes, 8);
    need(bytes, 16, len, "config");
    net::ModelConfig config;
    try {
        config = net::config_from_json(bytes.substr(16, len));
    } catch (const std::exception& e) {
        throw FormatError(std::string("checkpoint: bad config block: ") + e.what());
    }
    net::ModelParams p = net::build_model(config, 0);
    std::size_t off = 16 + len;
    need(bytes, off, 8 * p.parameter_count(), "parameter block");
    for (auto* m : p.tensors())
        for (double& v : m->data()) {
            v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, off));
            off += 8;
        }
    if (off != bytes.size()) throw FormatError("checkpoint: trailing bytes at offset " + std::to_string(off));
    return p;
}

void save(const net::ModelParams& params, const std::string& path) {
    const std::string bytes = serialize(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

net::ModelParams load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace vcl::ckpt
