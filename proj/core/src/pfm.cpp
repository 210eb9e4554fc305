#include "cfstereo/pfm.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cfstereo {

namespace {

[[noreturn]] void fail(const std::string& what, size_t offset) {
    throw std::runtime_error("pfm: " + what + " at byte " + std::to_string(offset));
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pfm: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// whitespace-separated header token
std::string token(const std::string& s, size_t& pos) {
    while (pos < s.size() && is_ws(s[pos])) ++pos;
    const size_t start = pos;
    while (pos < s.size() && !is_ws(s[pos])) ++pos;
    if (start == pos) fail("truncated header", pos);
    return s.substr(start, pos - start);
}

uint32_t bswap(uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace

PfmImage read_pfm(const std::string& path) {
    const std::string s = slurp(path);
    size_t pos = 0;

    const std::string magic = token(s, pos);
    if (magic != "Pf" && magic != "PF") fail("bad magic '" + magic + "'", 0);
    PfmImage img;
    img.channels = magic == "PF" ? 3 : 1;

    size_t at = pos;
    try {
        img.width = std::stoll(token(s, pos));
        at = pos;
        img.height = std::stoll(token(s, pos));
    } catch (const std::logic_error&) {
        fail("unparseable dimensions", at);
    }
    if (img.width <= 0 || img.height <= 0) fail("non-positive dimensions", at);

    at = pos;
    double scale = 0.0;
    try {
        scale = std::stod(token(s, pos));
    } catch (const std::logic_error&) {
        fail("unparseable scale", at);
    }
    if (scale == 0.0) fail("zero scale", at);
    img.scale = scale;

    if (pos >= s.size() || !is_ws(s[pos])) fail("missing header terminator", pos);
    ++pos;  // exactly one whitespace byte before the payload

    const size_t count = static_cast<size_t>(img.width * img.height * img.channels);
    if (s.size() - pos < count * 4)
        fail("short file: payload needs " + std::to_string(count * 4) + " bytes, have " +
                 std::to_string(s.size() - pos),
             pos);

    const bool file_le = scale < 0.0;
    const bool host_le = std::endian::native == std::endian::little;
    img.data.resize(count);
    const size_t row = static_cast<size_t>(img.width * img.channels);
    for (int64_t y = 0; y < img.height; ++y) {
        // file rows run bottom-to-top
        const size_t src = pos + static_cast<size_t>(img.height - 1 - y) * row * 4;
        std::memcpy(img.data.data() + static_cast<size_t>(y) * row, s.data() + src, row * 4);
    }
    if (file_le != host_le)
        for (float& f : img.data) {
            uint32_t u;
            std::memcpy(&u, &f, 4);
            u = bswap(u);
            std::memcpy(&f, &u, 4);
        }
    return img;
}

void write_pfm(const std::string& path, const PfmImage& img, bool little_endian) {
    if (img.width <= 0 || img.height <= 0 || (img.channels != 1 && img.channels != 3))
        throw std::runtime_error("pfm: invalid image to write");
    const size_t count = static_cast<size_t>(img.width * img.height * img.channels);
    if (img.data.size() != count) throw std::runtime_error("pfm: data size mismatch");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("pfm: cannot open " + path + " for writing");

    const double mag = img.scale == 0.0 ? 1.0 : std::abs(img.scale);
    char header[96];
    const int n = std::snprintf(header, sizeof(header), "%s\n%lld %lld\n%.9g\n",
                                img.channels == 3 ? "PF" : "Pf",
                                static_cast<long long>(img.width),
                                static_cast<long long>(img.height),
                                little_endian ? -mag : mag);
    out.write(header, n);

    const bool host_le = std::endian::native == std::endian::little;
    const size_t row = static_cast<size_t>(img.width * img.channels);
    std::vector<uint32_t> buf(row);
    for (int64_t y = img.height - 1; y >= 0; --y) {
        std::memcpy(buf.data(), img.data.data() + static_cast<size_t>(y) * row, row * 4);
        if (little_endian != host_le)
            for (uint32_t& u : buf) u = bswap(u);
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(row * 4));
    }
    if (!out) throw std::runtime_error("pfm: write failed for " + path);
}

}  // namespace cfstereo
