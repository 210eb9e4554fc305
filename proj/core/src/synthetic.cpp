#include "cfstereo/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfstereo/rng.hpp"
#include "op_common.hpp"

namespace cfstereo {

namespace {

// 5x5 box blur with the window cropped at the borders
std::vector<double> box_blur2(const std::vector<double>& src, int64_t h, int64_t w) {
    std::vector<double> out(src.size());
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            int n = 0;
            for (int64_t dy = -2; dy <= 2; ++dy)
                for (int64_t dx = -2; dx <= 2; ++dx) {
                    const int64_t yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    acc += src[static_cast<size_t>(yy * w + xx)];
                    ++n;
                }
            out[static_cast<size_t>(y * w + x)] = acc / n;
        }
    return out;
}

std::vector<double> make_texture(TextureKind kind, int64_t h, int64_t w, Rng& rng) {
    std::vector<double> tex(static_cast<size_t>(3 * h * w));
    for (auto& v : tex) v = rng.uniform();
    if (kind == TextureKind::SmoothedNoise)
        for (int c = 0; c < 3; ++c) {
            std::vector<double> ch(tex.begin() + c * h * w, tex.begin() + (c + 1) * h * w);
            ch = box_blur2(ch, h, w);
            std::copy(ch.begin(), ch.end(), tex.begin() + c * h * w);
        }
    return tex;
}

std::vector<double> make_field(DisparityFieldKind kind, int64_t h, int64_t w, int64_t d_max,
                               Rng& rng) {
    const double lo = 1.0, hi = static_cast<double>(d_max - 1);
    std::vector<double> d(static_cast<size_t>(h * w));
    switch (kind) {
        case DisparityFieldKind::Constant: {
            const double c = rng.uniform(lo, hi);
            std::fill(d.begin(), d.end(), c);
            break;
        }
        case DisparityFieldKind::PlanarRamp: {
            // keep the x-slope below 1 so the warp is injective (no occlusion)
            const double a = rng.uniform(lo, hi);
            double b = rng.uniform(lo, hi);
            const double max_step = 0.9 * static_cast<double>(w - 1);
            b = std::clamp(b, a - max_step, a + max_step);
            const double margin = std::min({a - lo, hi - a, b - lo, hi - b});
            const double sy = rng.uniform(-1.0, 1.0) * margin / static_cast<double>(h - 1);
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x)
                    d[static_cast<size_t>(y * w + x)] =
                        a + (b - a) * static_cast<double>(x) / static_cast<double>(w - 1) +
                        sy * static_cast<double>(y);
            break;
        }
        case DisparityFieldKind::Blocks: {
            // nearer rectangles over a far background create occlusion bands
            const double bg = rng.uniform(lo, std::max(lo + 0.5, hi / 4.0));
            std::fill(d.begin(), d.end(), bg);
            const int64_t rects = rng.uniform_int(2, 4);
            for (int64_t r = 0; r < rects; ++r) {
                const int64_t rw = rng.uniform_int(w / 8, std::max<int64_t>(w / 8, w / 3));
                const int64_t rh = rng.uniform_int(h / 8, std::max<int64_t>(h / 8, h / 3));
                const int64_t x0 = rng.uniform_int(0, w - rw - 1);
                const int64_t y0 = rng.uniform_int(0, h - rh - 1);
                const double dr = rng.uniform(std::min(bg + 1.0, hi), hi);
                for (int64_t y = y0; y < y0 + rh; ++y)
                    for (int64_t x = x0; x < x0 + rw; ++x)
                        d[static_cast<size_t>(y * w + x)] = dr;
            }
            break;
        }
    }
    for (double& v : d) v = std::clamp(v, lo, hi);
    return d;
}

}  // namespace

template <typename T>
StereoSample<T> synthesize_pair(const Tensor<T>& right_texture, const std::vector<T>& disparity) {
    detail::check_rank("synthesize_pair", right_texture, 4);
    detail::check(right_texture.dim(0) == 1 && right_texture.dim(1) == 3,
                  "synthesize_pair: texture must be [1,3,H,W]");
    const int64_t h = right_texture.dim(2), w = right_texture.dim(3);
    detail::check(static_cast<int64_t>(disparity.size()) == h * w,
                  "synthesize_pair: disparity size mismatch");
    for (T v : disparity)
        detail::check(v >= T(0) && static_cast<double>(v) <= static_cast<double>(w - 1),
                      "synthesize_pair: disparity outside [0, W-1]");

    const auto& rv = right_texture.values();
    std::vector<T> lv(rv.size());
    StereoSample<T> s;
    s.height = h;
    s.width = w;
    s.gt = disparity;
    s.valid.assign(static_cast<size_t>(h * w), 0);

    for (int64_t y = 0; y < h; ++y) {
        // right-to-left running min of warp targets: x is visible only if its
        // target is strictly left of every target further right in the row
        double min_u = std::numeric_limits<double>::infinity();
        for (int64_t x = w - 1; x >= 0; --x) {
            const size_t i = static_cast<size_t>(y * w + x);
            const double u = static_cast<double>(x) - static_cast<double>(disparity[i]);
            s.valid[i] = (u >= 0.0 && u < min_u) ? 1 : 0;
            min_u = std::min(min_u, u);

            const double us = std::clamp(u, 0.0, static_cast<double>(w - 1));
            const int64_t x0 = static_cast<int64_t>(std::floor(us));
            const int64_t x1 = std::min(x0 + 1, w - 1);
            const double f = us - static_cast<double>(x0);
            for (int64_t c = 0; c < 3; ++c) {
                const size_t row = static_cast<size_t>((c * h + y) * w);
                const double v = (1.0 - f) * static_cast<double>(rv[row + static_cast<size_t>(x0)]) +
                                 f * static_cast<double>(rv[row + static_cast<size_t>(x1)]);
                lv[row + static_cast<size_t>(x)] = static_cast<T>(v);
            }
        }
    }

    s.left = Tensor<T>::from({1, 3, h, w}, std::move(lv));
    s.right = right_texture;
    return s;
}

template <typename T>
StereoSample<T> generate_sample(const SyntheticSpec& spec) {
    detail::check(spec.width >= 16 && spec.height >= 16,
                  "generate_sample: extent must be at least 16x16");
    detail::check(spec.d_max >= 2, "generate_sample: d_max must be at least 2");

    Rng trng(splitmix64(spec.seed ^ 0x7e37a2u));
    Rng frng(splitmix64(spec.seed ^ 0xf1e1d5u));
    const int64_t h = spec.height, w = spec.width;

    const auto tex = make_texture(spec.texture, h, w, trng);
    const auto field = make_field(spec.field, h, w, spec.d_max, frng);
    for (double v : field)
        detail::check(v <= static_cast<double>(spec.d_max - 1),
                      "generate_sample: disparity field exceeds d_max-1");

    std::vector<T> tv(tex.size());
    for (size_t i = 0; i < tex.size(); ++i) tv[i] = static_cast<T>(tex[i]);
    std::vector<T> fv(field.size());
    for (size_t i = 0; i < field.size(); ++i) fv[i] = static_cast<T>(field[i]);
    return synthesize_pair(Tensor<T>::from({1, 3, h, w}, std::move(tv)), fv);
}

#define CFS_INSTANTIATE_SYNTH(T)                                                       \
    template StereoSample<T> synthesize_pair<T>(const Tensor<T>&, const std::vector<T>&); \
    template StereoSample<T> generate_sample<T>(const SyntheticSpec&);

CFS_INSTANTIATE_SYNTH(float)
CFS_INSTANTIATE_SYNTH(double)

}  // namespace cfstereo
