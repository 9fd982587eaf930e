#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "refsplat/error.hpp"
#include "refsplat/scene_io.hpp"

namespace refsplat {

namespace {

// Reads one whitespace-delimited token starting at `pos`; advances pos past
// the single whitespace byte that terminates it.
std::string next_token(const std::vector<char>& bytes, std::size_t& pos) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw FormatError("PFM: truncated header", start);
    std::string tok(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.begin() + static_cast<std::ptrdiff_t>(pos));
    if (pos < bytes.size()) ++pos;
    return tok;
}

std::uint32_t byteswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace

Image read_pfm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open PFM '" + path.string() + "'");
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    const std::string magic = next_token(bytes, pos);
    if (magic == "PF") throw FormatError("PFM: color PFM ('PF') is not supported", 0);
    if (magic != "Pf") throw FormatError("PFM: bad magic '" + magic + "'", 0);

    long long w = 0, h = 0;
    double scale = 0.0;
    const std::size_t dims_at = pos;
    try {
        w = std::stoll(next_token(bytes, pos));
        h = std::stoll(next_token(bytes, pos));
    } catch (const std::logic_error&) {
        throw FormatError("PFM: unreadable dimensions", dims_at);
    }
    if (w <= 0 || h <= 0) throw FormatError("PFM: dimensions must be positive", dims_at);
    const std::size_t scale_at = pos;
    try {
        scale = std::stod(next_token(bytes, pos));
    } catch (const std::logic_error&) {
        throw FormatError("PFM: unreadable scale", scale_at);
    }
    if (scale == 0.0) throw FormatError("PFM: scale must be non-zero", scale_at);
    const bool little = scale < 0.0;

    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 4;
    if (bytes.size() - pos < need)
        throw FormatError("PFM: payload too short (" + std::to_string(bytes.size() - pos) + " of " +
                              std::to_string(need) + " bytes)",
                          bytes.size());

    Image out(static_cast<int>(w), static_cast<int>(h), 1);
    const bool swap = little != (std::endian::native == std::endian::little);
    for (long long row = 0; row < h; ++row) {
        const long long y = h - 1 - row;  // file rows are bottom-to-top
        for (long long x = 0; x < w; ++x) {
            std::uint32_t raw;
            std::memcpy(&raw, bytes.data() + pos + 4 * (row * w + x), 4);
            if (swap) raw = byteswap32(raw);
            out.at(static_cast<int>(x), static_cast<int>(y)) = std::bit_cast<float>(raw);
        }
    }
    return out;
}

void write_pfm(const fs::path& path, const Image& depth) {
    if (depth.channels != 1 || depth.empty()) throw ConfigError("write_pfm: expected a non-empty 1-channel image");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write PFM '" + path.string() + "'");
    out << "Pf\n" << depth.width << ' ' << depth.height << "\n-1.0\n";
    std::vector<char> payload(depth.pixel_count() * 4);
    std::size_t o = 0;
    for (int y = depth.height - 1; y >= 0; --y)
        for (int x = 0; x < depth.width; ++x) {
            std::uint32_t raw = std::bit_cast<std::uint32_t>(static_cast<float>(depth.at(x, y)));
            if constexpr (std::endian::native != std::endian::little) raw = byteswap32(raw);
            std::memcpy(payload.data() + o, &raw, 4);
            o += 4;
        }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

}  // namespace refsplat
