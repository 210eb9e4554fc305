#include <doctest.h>

#include "cfstereo/gradcheck.hpp"
#include "cfstereo/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cfstereo;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("avg_pool2d means, including a truncated last window") {
    // 1x1x3x5 with window 2: last column window covers a single cell pair/cell
    auto x = Tensor<double>::from({1, 1, 3, 5},
                                  {1, 2, 3, 4, 5,
                                   6, 7, 8, 9, 10,
                                   11, 12, 13, 14, 15});
    auto y = avg_pool2d(x, 2);
    CHECK(y.shape() == Shape{1, 1, 2, 3});
    // window (0,0): {1,2,6,7}/4; window (0,2): {5,10}/2; window (1,0): {11,12}/2; (1,2): {15}/1
    CHECK(y.values()[0] == doctest::Approx(4.0));
    CHECK(y.values()[2] == doctest::Approx(7.5));
    CHECK(y.values()[3] == doctest::Approx(11.5));
    CHECK(y.values()[5] == doctest::Approx(15.0));

    Rng rng(201);
    auto report = gradcheck(
        [](const std::vector<Tensor<double>>& in) { return avg_pool2d(in[0], 3); },
        {random_tensor<double>({2, 2, 7, 8}, rng)});
    CHECK(report.worst < 1e-8);
}

TEST_CASE("adaptive_avg_pool2d bins cover the full extent") {
    Rng rng(202);
    auto x = random_tensor<double>({1, 2, 8, 6}, rng);
    auto y = adaptive_avg_pool2d(x, 3, 3);
    CHECK(y.shape() == Shape{1, 2, 3, 3});
    // reference: bin i = [floor(i*H/3), ceil((i+1)*H/3))
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t oh = 0; oh < 3; ++oh)
            for (int64_t ow = 0; ow < 3; ++ow) {
                const int64_t r0 = oh * 8 / 3, r1 = ((oh + 1) * 8 + 2) / 3;
                const int64_t c0 = ow * 6 / 3, c1 = ((ow + 1) * 6 + 2) / 3;
                double acc = 0;
                for (int64_t r = r0; r < r1; ++r)
                    for (int64_t cc = c0; cc < c1; ++cc) acc += x.values()[(c * 8 + r) * 6 + cc];
                acc /= static_cast<double>((r1 - r0) * (c1 - c0));
                CHECK(y.values()[(c * 3 + oh) * 3 + ow] == doctest::Approx(acc));
            }

    // pooling to 1x1 equals the global mean
    auto g = adaptive_avg_pool2d(x, 1, 1);
    double mean0 = 0;
    for (int64_t i = 0; i < 48; ++i) mean0 += x.values()[i];
    CHECK(g.values()[0] == doctest::Approx(mean0 / 48));

    auto report = gradcheck(
        [](const std::vector<Tensor<double>>& in) { return adaptive_avg_pool2d(in[0], 3, 2); },
        {random_tensor<double>({1, 2, 7, 5}, rng)});
    CHECK(report.worst < 1e-8);
}

TEST_CASE("bilinear_upsample2d: align-corners fixed points and interior") {
    auto x = Tensor<double>::from({1, 1, 2, 2}, {0, 1, 2, 3});
    auto y = bilinear_upsample2d(x, 3, 3);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    // corners map to corners under align-corners
    CHECK(y.values()[0] == doctest::Approx(0));
    CHECK(y.values()[2] == doctest::Approx(1));
    CHECK(y.values()[6] == doctest::Approx(2));
    CHECK(y.values()[8] == doctest::Approx(3));
    CHECK(y.values()[4] == doctest::Approx(1.5));  // center = mean of all four

    // against the standalone sampler at every output cell
    Rng rng(203);
    auto x2 = random_tensor<double>({1, 1, 4, 5}, rng);
    auto y2 = bilinear_upsample2d(x2, 7, 9);
    for (int64_t r = 0; r < 7; ++r)
        for (int64_t c = 0; c < 9; ++c) {
            const double sr = static_cast<double>(r) * 3.0 / 6.0;
            const double sc = static_cast<double>(c) * 4.0 / 8.0;
            CHECK(y2.values()[r * 9 + c] ==
                  doctest::Approx(oracle::bilinear_at(x2.values(), 4, 5, sr, sc)));
        }

    // height 1 replicates rows
    auto x3 = Tensor<double>::from({1, 1, 1, 2}, {5, 9});
    auto y3 = bilinear_upsample2d(x3, 3, 3);
    for (int64_t r = 0; r < 3; ++r) {
        CHECK(y3.values()[r * 3 + 0] == doctest::Approx(5));
        CHECK(y3.values()[r * 3 + 2] == doctest::Approx(9));
    }

    CHECK_THROWS(bilinear_upsample2d(x2, 3, 9));  // downsample rejected

    auto report = gradcheck(
        [](const std::vector<Tensor<double>>& in) { return bilinear_upsample2d(in[0], 6, 7); },
        {random_tensor<double>({1, 2, 3, 4}, rng)});
    CHECK(report.worst < 1e-8);
}

TEST_CASE("trilinear_upsample3d: exact on a trilinear field") {
    // values linear in (d, h, w) must be reproduced exactly by the
    // align-corners sampler at any resolution
    const int64_t D = 3, H = 3, W = 4;
    std::vector<double> v(D * H * W);
    for (int64_t d = 0; d < D; ++d)
        for (int64_t h = 0; h < H; ++h)
            for (int64_t w = 0; w < W; ++w)
                v[(d * H + h) * W + w] = 2.0 * d - 0.5 * h + 0.25 * w + 1.0;
    auto x = Tensor<double>::from({1, 1, D, H, W}, v);
    auto y = trilinear_upsample3d(x, 5, 7, 9);
    for (int64_t d = 0; d < 5; ++d)
        for (int64_t h = 0; h < 7; ++h)
            for (int64_t w = 0; w < 9; ++w) {
                const double sd = d * double(D - 1) / 4.0;
                const double sh = h * double(H - 1) / 6.0;
                const double sw = w * double(W - 1) / 8.0;
                CHECK(y.values()[(d * 7 + h) * 9 + w] ==
                      doctest::Approx(2.0 * sd - 0.5 * sh + 0.25 * sw + 1.0));
            }

    Rng rng(204);
    auto report = gradcheck(
        [](const std::vector<Tensor<double>>& in) { return trilinear_upsample3d(in[0], 4, 5, 6); },
        {random_tensor<double>({1, 2, 2, 3, 3}, rng)});
    CHECK(report.worst < 1e-8);
}
