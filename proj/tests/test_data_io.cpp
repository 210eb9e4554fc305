#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "cfstereo/checkpoint.hpp"
#include "cfstereo/pfm.hpp"
#include "cfstereo/png_io.hpp"
#include "cfstereo/synthetic.hpp"
#include "test_util.hpp"

using namespace cfstereo;

namespace {

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// independent row-wise bilinear lookup of channel c at (u, y)
template <typename T>
double sample_row(const Tensor<T>& img, int64_t c, int64_t y, double u) {
    const int64_t h = img.dim(2), w = img.dim(3);
    const double us = std::clamp(u, 0.0, static_cast<double>(w - 1));
    const int64_t x0 = static_cast<int64_t>(std::floor(us));
    const int64_t x1 = std::min(x0 + 1, w - 1);
    const double f = us - static_cast<double>(x0);
    const auto& v = img.values();
    const size_t row = static_cast<size_t>((c * h + y) * w);
    return (1.0 - f) * static_cast<double>(v[row + static_cast<size_t>(x0)]) +
           f * static_cast<double>(v[row + static_cast<size_t>(x1)]);
}

std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void dump_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE(out.good());
}

// re-seal a hand-modified checkpoint image with a fresh trailing CRC
std::string reseal(std::string bytes) {
    const size_t body = bytes.size() - 4;
    const auto crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(body)));
    for (int i = 0; i < 4; ++i) bytes[body + i] = static_cast<char>((crc >> (8 * i)) & 0xff);
    return bytes;
}

}  // namespace

TEST_CASE("warp consistency: left samples the right image at x minus disparity") {
    for (auto field : {DisparityFieldKind::PlanarRamp, DisparityFieldKind::Blocks,
                       DisparityFieldKind::Constant}) {
        SyntheticSpec spec;
        spec.width = 48;
        spec.height = 24;
        spec.d_max = 16;
        spec.field = field;
        spec.seed = 71;
        auto s = generate_sample<float>(spec);

        double worst = 0.0;
        int64_t valid_n = 0;
        for (int64_t y = 0; y < spec.height; ++y)
            for (int64_t x = 0; x < spec.width; ++x) {
                const size_t i = static_cast<size_t>(y * spec.width + x);
                if (!s.valid[i]) continue;
                ++valid_n;
                const double u = static_cast<double>(x) - static_cast<double>(s.gt[i]);
                for (int64_t c = 0; c < 3; ++c) {
                    const double rhs = sample_row(s.right, c, y, u);
                    const double lhs = static_cast<double>(
                        s.left.values()[static_cast<size_t>((c * spec.height + y) * spec.width + x)]);
                    worst = std::max(worst, std::abs(lhs - rhs));
                }
            }
        CHECK(valid_n > spec.width * spec.height / 2);
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("integer constant shift reproduces the texture exactly") {
    Rng rng(72);
    const int64_t h = 8, w = 24;
    auto tex = testutil::random_tensor<double>({1, 3, h, w}, rng, 0.0, 1.0);

    auto s = synthesize_pair(tex, std::vector<double>(static_cast<size_t>(h * w), 4.0));
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const size_t i = static_cast<size_t>((c * h + y) * w + x);
                if (x < 4) continue;
                // right(x-4) == left(x), bit-exact for an integer shift
                CHECK(s.left.values()[i] ==
                      s.right.values()[static_cast<size_t>((c * h + y) * w + x - 4)]);
            }
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            CHECK(static_cast<int>(s.valid[static_cast<size_t>(y * w + x)]) == (x >= 4 ? 1 : 0));

    auto s0 = synthesize_pair(tex, std::vector<double>(static_cast<size_t>(h * w), 0.0));
    CHECK(testutil::max_abs_diff(s0.left.values(), s0.right.values()) == 0.0);
    for (uint8_t v : s0.valid) CHECK(v == 1);
}

TEST_CASE("a near block occludes the background band to its left") {
    Rng rng(73);
    const int64_t h = 4, w = 32;
    auto tex = testutil::random_tensor<double>({1, 3, h, w}, rng, 0.0, 1.0);

    std::vector<double> field(static_cast<size_t>(h * w), 2.0);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 10; x < 20; ++x) field[static_cast<size_t>(y * w + x)] = 8.0;

    auto s = synthesize_pair(tex, field);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double d = field[static_cast<size_t>(y * w + x)];
            const bool in_frame = static_cast<double>(x) - d >= 0.0;
            const bool occluded = x >= 4 && x < 10;  // band width = near minus far disparity
            const int expect = in_frame && !occluded;
            CHECK_MESSAGE(static_cast<int>(s.valid[static_cast<size_t>(y * w + x)]) == expect,
                          "x=", x);
        }
}

TEST_CASE("generation is deterministic per seed and bounded by d_max") {
    SyntheticSpec spec;
    spec.width = 32;
    spec.height = 16;
    spec.d_max = 8;
    spec.seed = 99;
    for (auto field :
         {DisparityFieldKind::Constant, DisparityFieldKind::PlanarRamp, DisparityFieldKind::Blocks}) {
        spec.field = field;
        auto a = generate_sample<float>(spec);
        auto b = generate_sample<float>(spec);
        CHECK(testutil::max_abs_diff(a.left.values(), b.left.values()) == 0.0);
        CHECK(testutil::max_abs_diff(a.right.values(), b.right.values()) == 0.0);
        CHECK(a.gt == b.gt);
        CHECK(a.valid == b.valid);
        for (float g : a.gt) {
            CHECK(g >= 1.0f);
            CHECK(g <= static_cast<float>(spec.d_max - 1));
        }

        spec.seed = 100;
        auto c = generate_sample<float>(spec);
        CHECK(testutil::max_abs_diff(a.right.values(), c.right.values()) > 0.0);
        spec.seed = 99;
    }

    SyntheticSpec bad = spec;
    bad.width = 8;
    CHECK_THROWS_AS(generate_sample<float>(bad), std::invalid_argument);
}

TEST_CASE("pfm round trip is bit-exact in either byte order") {
    Rng rng(74);
    PfmImage img;
    img.width = 5;
    img.height = 4;
    img.channels = 1;
    img.data.resize(20);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(-100.0, 100.0));

    const auto p = tmp_path("cfs_rt.pfm");
    write_pfm(p, img, true);
    auto back = read_pfm(p);
    CHECK(back.width == 5);
    CHECK(back.height == 4);
    CHECK(back.channels == 1);
    CHECK(back.scale == doctest::Approx(-1.0));
    CHECK(std::memcmp(back.data.data(), img.data.data(), img.data.size() * 4) == 0);

    write_pfm(p, img, false);  // big-endian payload, positive scale
    auto be = read_pfm(p);
    CHECK(be.scale > 0.0);
    CHECK(std::memcmp(be.data.data(), img.data.data(), img.data.size() * 4) == 0);

    PfmImage color;
    color.width = 3;
    color.height = 2;
    color.channels = 3;
    color.data.resize(18);
    for (auto& v : color.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
    write_pfm(p, color, true);
    auto cback = read_pfm(p);
    CHECK(cback.channels == 3);
    CHECK(std::memcmp(cback.data.data(), color.data.data(), color.data.size() * 4) == 0);
}

TEST_CASE("pfm reads a hand-assembled file byte for byte") {
    // "Pf", 2x1, little-endian; 3.5f = 00 00 60 40, 7.25f = 00 00 e8 40
    std::string bytes = "Pf\n2 1\n-1\n";
    const unsigned char payload[8] = {0x00, 0x00, 0x60, 0x40, 0x00, 0x00, 0xe8, 0x40};
    bytes.append(reinterpret_cast<const char*>(payload), 8);

    const auto p = tmp_path("cfs_hand.pfm");
    dump_file(p, bytes);
    auto img = read_pfm(p);
    CHECK(img.width == 2);
    CHECK(img.height == 1);
    CHECK(img.channels == 1);
    CHECK(img.scale == doctest::Approx(-1.0));
    REQUIRE(img.data.size() == 2);
    CHECK(img.data[0] == 3.5f);
    CHECK(img.data[1] == 7.25f);
}

TEST_CASE("pfm rejects malformed files with a byte offset") {
    const auto p = tmp_path("cfs_bad.pfm");

    dump_file(p, "Px\n2 1\n-1\n12345678");
    CHECK_THROWS_WITH_AS(read_pfm(p), doctest::Contains("bad magic"), std::runtime_error);

    dump_file(p, "Pf\n0 1\n-1\n");
    CHECK_THROWS_WITH_AS(read_pfm(p), doctest::Contains("non-positive"), std::runtime_error);

    dump_file(p, "Pf\n2 1\n0\n12345678");
    CHECK_THROWS_WITH_AS(read_pfm(p), doctest::Contains("zero scale"), std::runtime_error);

    dump_file(p, "Pf\n2 1\n-1\n1234");  // 4 of 8 payload bytes
    try {
        read_pfm(p);
        FAIL("expected a short-file rejection");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("short file") != std::string::npos);
        CHECK(std::string(e.what()).find("at byte 10") != std::string::npos);  // payload offset
    }
}

TEST_CASE("kitti disparity png round-trips to 1/256 px with a zero sentinel") {
    Rng rng(75);
    const int64_t w = 17, h = 9;
    std::vector<float> disp(static_cast<size_t>(w * h));
    for (auto& v : disp)
        v = static_cast<float>(std::llround(rng.uniform(0.5, 60.0) * 256.0)) / 256.0f;
    disp[0] = 0.0f;    // invalid by sentinel
    disp[5] = -3.0f;   // negative folds to invalid
    disp[9] = 1.0f;    // stored 256 exactly

    const auto p = tmp_path("cfs_disp.png");
    write_kitti_disp_png(p, disp, w, h);
    auto back = read_kitti_disp_png(p);
    REQUIRE(back.width == w);
    REQUIRE(back.height == h);
    CHECK(back.valid[0] == 0);
    CHECK(back.valid[5] == 0);
    CHECK(back.valid[9] == 1);
    CHECK(back.disp[9] == 1.0f);
    for (size_t i = 0; i < disp.size(); ++i)
        if (back.valid[i]) CHECK(back.disp[i] == disp[i]);  // already quantized: exact

    // 8-bit files are not a disparity map
    const auto p8 = tmp_path("cfs_rgb.png");
    write_image_png(p8, Tensor<float>::full({1, 3, 4, 4}, 0.5f));
    CHECK_THROWS_WITH_AS(read_kitti_disp_png(p8), doctest::Contains("16-bit"), std::runtime_error);

    auto rgb = read_image_png(p8);
    CHECK(rgb.shape() == Shape{1, 3, 4, 4});
    for (float v : rgb.values()) CHECK(v == doctest::Approx(0.5f).epsilon(0.01));
}

TEST_CASE("checkpoint round trip is bit-identical") {
    Checkpoint st;
    st.step = 42;
    st.config_text = "net.d_max = 16\ntrain.steps = 300\n";
    Rng rng(76);
    for (const char* name : {"extractor.conv0.weight", "matcher.up3.bias", "opt/adam.m/w"}) {
        CheckpointEntry e;
        e.name = name;
        e.dims = {2, 3};
        e.data.resize(6);
        for (auto& v : e.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        st.tensors.push_back(std::move(e));
    }

    const auto p = tmp_path("cfs_ckpt.bin");
    save_checkpoint(p, st);
    auto back = load_checkpoint(p);
    CHECK(back.step == 42);
    CHECK(back.config_text == st.config_text);
    REQUIRE(back.tensors.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(back.tensors[i].name == st.tensors[i].name);
        CHECK(back.tensors[i].dims == st.tensors[i].dims);
        CHECK(std::memcmp(back.tensors[i].data.data(), st.tensors[i].data.data(),
                          st.tensors[i].data.size() * 4) == 0);
    }

    // saving the loaded state reproduces the file byte for byte
    const auto p2 = tmp_path("cfs_ckpt2.bin");
    save_checkpoint(p2, back);
    CHECK(slurp_file(p) == slurp_file(p2));
}

TEST_CASE("checkpoint loader names the failed check") {
    Checkpoint st;
    st.step = 1;
    st.config_text = "a = b\n";
    st.tensors.push_back({"w", {4}, {1.0f, 2.0f, 3.0f, 4.0f}});
    const auto p = tmp_path("cfs_ckpt_bad.bin");
    save_checkpoint(p, st);
    const std::string good = slurp_file(p);

    dump_file(p, good.substr(0, good.size() - 7));  // truncation breaks the trailing crc
    CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("crc"), std::runtime_error);

    std::string flipped = good;
    flipped[good.size() / 2] ^= 0x40;
    dump_file(p, flipped);
    CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("crc"), std::runtime_error);

    std::string wrong_version = good;
    wrong_version[4] = static_cast<char>(kCheckpointVersion + 1);
    dump_file(p, reseal(wrong_version));
    CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("version"), std::runtime_error);

    std::string wrong_magic = good;
    wrong_magic[0] = 'X';
    dump_file(p, reseal(wrong_magic));
    CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("magic"), std::runtime_error);
}
