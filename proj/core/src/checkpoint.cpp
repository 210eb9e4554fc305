#include "cfstereo/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cfstereo {

namespace {

constexpr char kMagic[4] = {'C', 'F', 'P', 'N'};

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error("checkpoint: " + what); }

void put_u32(std::string& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.append(b, 4);
}

void put_f32(std::string& out, const std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        out.append(reinterpret_cast<const char*>(v.data()), v.size() * 4);
    } else {
        for (float f : v) {
            uint32_t u;
            std::memcpy(&u, &f, 4);
            put_u32(out, u);
        }
    }
}

struct Cursor {
    const std::string& s;
    size_t pos = 0;

    void need(size_t n, const char* what) {
        if (s.size() - pos < n) fail(std::string("truncated reading ") + what);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        const auto* b = reinterpret_cast<const unsigned char*>(s.data() + pos);
        pos += 4;
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    std::string bytes(size_t n, const char* what) {
        need(n, what);
        std::string r = s.substr(pos, n);
        pos += n;
        return r;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& state) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kCheckpointVersion);

    std::string block = state.config_text;
    if (!block.empty() && block.back() != '\n') block += '\n';
    block += "step = " + std::to_string(state.step) + "\n";
    put_u32(buf, static_cast<uint32_t>(block.size()));
    buf += block;

    put_u32(buf, static_cast<uint32_t>(state.tensors.size()));
    for (const auto& t : state.tensors) {
        put_u32(buf, static_cast<uint32_t>(t.name.size()));
        buf += t.name;
        put_u32(buf, static_cast<uint32_t>(t.dims.size()));
        size_t count = 1;
        for (int64_t d : t.dims) {
            if (d <= 0) fail("non-positive dimension in '" + t.name + "'");
            put_u32(buf, static_cast<uint32_t>(d));
            count *= static_cast<size_t>(d);
        }
        if (t.data.size() != count) fail("payload size mismatch in '" + t.name + "'");
        put_f32(buf, t.data);
    }

    const auto crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
    put_u32(buf, crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 16) fail("crc check failed (file shorter than any valid checkpoint)");
    const size_t body = buf.size() - 4;
    const auto* tail = reinterpret_cast<const unsigned char*>(buf.data() + body);
    const uint32_t stored = static_cast<uint32_t>(tail[0]) | (static_cast<uint32_t>(tail[1]) << 8) |
                            (static_cast<uint32_t>(tail[2]) << 16) |
                            (static_cast<uint32_t>(tail[3]) << 24);
    const auto crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(body)));
    if (crc != stored) fail("crc check failed");

    Cursor c{buf};
    if (c.bytes(4, "magic") != std::string(kMagic, 4)) fail("magic check failed");
    const uint32_t version = c.u32("version");
    if (version != kCheckpointVersion)
        fail("version check failed (got " + std::to_string(version) + ", want " +
             std::to_string(kCheckpointVersion) + ")");

    Checkpoint st;
    const uint32_t block_len = c.u32("config length");
    std::string block = c.bytes(block_len, "config block");

    // the step counter is the block's final line
    const size_t nl = block.rfind("step = ");
    if (nl == std::string::npos || (nl != 0 && block[nl - 1] != '\n'))
        fail("config block is missing its step line");
    try {
        st.step = std::stoll(block.substr(nl + 7));
    } catch (const std::logic_error&) {
        fail("unparseable step line");
    }
    st.config_text = block.substr(0, nl);

    const uint32_t n_tensors = c.u32("tensor count");
    st.tensors.reserve(n_tensors);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        CheckpointEntry e;
        const uint32_t name_len = c.u32("tensor name length");
        e.name = c.bytes(name_len, "tensor name");
        const uint32_t ndim = c.u32("tensor rank");
        size_t count = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            const uint32_t dim = c.u32("tensor dims");
            e.dims.push_back(static_cast<int64_t>(dim));
            count *= dim;
        }
        const std::string payload = c.bytes(count * 4, "tensor payload");
        e.data.resize(count);
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(e.data.data(), payload.data(), count * 4);
        } else {
            for (size_t j = 0; j < count; ++j) {
                const auto* b = reinterpret_cast<const unsigned char*>(payload.data() + j * 4);
                const uint32_t u = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                                   (static_cast<uint32_t>(b[2]) << 16) |
                                   (static_cast<uint32_t>(b[3]) << 24);
                std::memcpy(&e.data[j], &u, 4);
            }
        }
        st.tensors.push_back(std::move(e));
    }
    if (c.pos != body) fail("trailing bytes after the last tensor");
    return st;
}

}  // namespace cfstereo
