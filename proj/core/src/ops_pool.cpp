#include <cmath>

#include "cfstereo/ops.hpp"
#include "op_common.hpp"

namespace cfstereo {

namespace {

template <typename T>
void flat_batch(const char* op, const Tensor<T>& x, int trailing, int64_t& batch) {
    detail::check(x.rank() >= trailing, std::string(op) + ": need rank >= " + std::to_string(trailing) +
                                            ", got " + shape_str(x.shape()));
    batch = 1;
    for (int d = 0; d < x.rank() - trailing; ++d) batch *= x.dim(d);
}

// Align-corners source coordinates for one axis: out index -> (lo, hi, frac).
template <typename T>
struct AxisMap {
    std::vector<int64_t> lo, hi;
    std::vector<T> frac;
};

template <typename T>
AxisMap<T> axis_map(int64_t in, int64_t out) {
    AxisMap<T> m;
    m.lo.resize(static_cast<size_t>(out));
    m.hi.resize(static_cast<size_t>(out));
    m.frac.resize(static_cast<size_t>(out));
    const double scale = (out > 1 && in > 1) ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
    for (int64_t i = 0; i < out; ++i) {
        const double src = scale * static_cast<double>(i);
        int64_t lo = static_cast<int64_t>(src);
        if (lo > in - 1) lo = in - 1;
        m.lo[static_cast<size_t>(i)] = lo;
        m.hi[static_cast<size_t>(i)] = lo + 1 < in ? lo + 1 : in - 1;
        m.frac[static_cast<size_t>(i)] = static_cast<T>(src - static_cast<double>(lo));
    }
    return m;
}

// Adaptive bin i over an extent: [i*in/out, ceil((i+1)*in/out))
struct Bins {
    std::vector<int64_t> start, stop;
};

inline Bins make_bins(int64_t in, int64_t out) {
    Bins b;
    b.start.resize(static_cast<size_t>(out));
    b.stop.resize(static_cast<size_t>(out));
    for (int64_t i = 0; i < out; ++i) {
        b.start[static_cast<size_t>(i)] = i * in / out;
        b.stop[static_cast<size_t>(i)] = ((i + 1) * in + out - 1) / out;
    }
    return b;
}

}  // namespace

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int window) {
    detail::check(window >= 1, "avg_pool2d: window must be >= 1, got " + std::to_string(window));
    int64_t batch;
    flat_batch("avg_pool2d", x, 2, batch);
    const int64_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
    const int64_t w = window;
    const int64_t OH = (H + w - 1) / w, OW = (W + w - 1) / w;
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = OH;
    out_shape[out_shape.size() - 1] = OW;

    std::vector<T> y(static_cast<size_t>(batch * OH * OW));
    const T* xv = x.values().data();
    for (int64_t b = 0; b < batch; ++b) {
        const T* src = xv + b * H * W;
        T* dst = y.data() + b * OH * OW;
        for (int64_t oh = 0; oh < OH; ++oh) {
            const int64_t r0 = oh * w, r1 = std::min(r0 + w, H);
            for (int64_t ow = 0; ow < OW; ++ow) {
                const int64_t c0 = ow * w, c1 = std::min(c0 + w, W);
                T acc = T(0);
                for (int64_t r = r0; r < r1; ++r)
                    for (int64_t c = c0; c < c1; ++c) acc += src[r * W + c];
                dst[oh * OW + ow] = acc / static_cast<T>((r1 - r0) * (c1 - c0));
            }
        }
    }

    return make_op_output<T>(
        "avg_pool2d", out_shape, std::move(y), {x},
        [x, batch, H, W, w, OH, OW](const TensorData<T>& out) {
            if (!x.requires_grad()) return;
            auto& dx = x.data()->grad_buffer();
            const T* dy = out.grad.data();
            for (int64_t b = 0; b < batch; ++b) {
                T* dst = dx.data() + b * H * W;
                const T* src = dy + b * OH * OW;
                for (int64_t oh = 0; oh < OH; ++oh) {
                    const int64_t r0 = oh * w, r1 = std::min(r0 + w, H);
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        const int64_t c0 = ow * w, c1 = std::min(c0 + w, W);
                        const T g = src[oh * OW + ow] / static_cast<T>((r1 - r0) * (c1 - c0));
                        for (int64_t r = r0; r < r1; ++r)
                            for (int64_t c = c0; c < c1; ++c) dst[r * W + c] += g;
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
    detail::check(out_h >= 1 && out_w >= 1, "adaptive_avg_pool2d: bad target " + std::to_string(out_h) +
                                                "x" + std::to_string(out_w));
    int64_t batch;
    flat_batch("adaptive_avg_pool2d", x, 2, batch);
    const int64_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
    detail::check(out_h <= H && out_w <= W, "adaptive_avg_pool2d: target " + std::to_string(out_h) +
                                                "x" + std::to_string(out_w) + " exceeds input " +
                                                std::to_string(H) + "x" + std::to_string(W));
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = out_h;
    out_shape[out_shape.size() - 1] = out_w;
    const Bins bh = make_bins(H, out_h), bw = make_bins(W, out_w);

    std::vector<T> y(static_cast<size_t>(batch * out_h * out_w));
    const T* xv = x.values().data();
    for (int64_t b = 0; b < batch; ++b) {
        const T* src = xv + b * H * W;
        T* dst = y.data() + b * out_h * out_w;
        for (int64_t oh = 0; oh < out_h; ++oh)
            for (int64_t ow = 0; ow < out_w; ++ow) {
                T acc = T(0);
                for (int64_t r = bh.start[oh]; r < bh.stop[oh]; ++r)
                    for (int64_t c = bw.start[ow]; c < bw.stop[ow]; ++c) acc += src[r * W + c];
                dst[oh * out_w + ow] =
                    acc / static_cast<T>((bh.stop[oh] - bh.start[oh]) * (bw.stop[ow] - bw.start[ow]));
            }
    }

    return make_op_output<T>(
        "adaptive_avg_pool2d", out_shape, std::move(y), {x},
        [x, batch, H, W, out_h, out_w, bh, bw](const TensorData<T>& out) {
            if (!x.requires_grad()) return;
            auto& dx = x.data()->grad_buffer();
            const T* dy = out.grad.data();
            for (int64_t b = 0; b < batch; ++b) {
                T* dst = dx.data() + b * H * W;
                const T* src = dy + b * out_h * out_w;
                for (int64_t oh = 0; oh < out_h; ++oh)
                    for (int64_t ow = 0; ow < out_w; ++ow) {
                        const T g = src[oh * out_w + ow] /
                                    static_cast<T>((bh.stop[oh] - bh.start[oh]) *
                                                   (bw.stop[ow] - bw.start[ow]));
                        for (int64_t r = bh.start[oh]; r < bh.stop[oh]; ++r)
                            for (int64_t c = bw.start[ow]; c < bw.stop[ow]; ++c) dst[r * W + c] += g;
                    }
            }
        });
}

template <typename T>
Tensor<T> bilinear_upsample2d(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
    int64_t batch;
    flat_batch("bilinear_upsample2d", x, 2, batch);
    const int64_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
    detail::check(out_h >= H && out_w >= W, "bilinear_upsample2d: target " + std::to_string(out_h) +
                                                "x" + std::to_string(out_w) + " below input " +
                                                std::to_string(H) + "x" + std::to_string(W));
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = out_h;
    out_shape[out_shape.size() - 1] = out_w;
    const AxisMap<T> mh = axis_map<T>(H, out_h), mw = axis_map<T>(W, out_w);

    std::vector<T> y(static_cast<size_t>(batch * out_h * out_w));
    const T* xv = x.values().data();
    for (int64_t b = 0; b < batch; ++b) {
        const T* src = xv + b * H * W;
        T* dst = y.data() + b * out_h * out_w;
        for (int64_t oh = 0; oh < out_h; ++oh) {
            const int64_t r0 = mh.lo[oh], r1 = mh.hi[oh];
            const T fh = mh.frac[oh];
            for (int64_t ow = 0; ow < out_w; ++ow) {
                const int64_t c0 = mw.lo[ow], c1 = mw.hi[ow];
                const T fw = mw.frac[ow];
                const T top = src[r0 * W + c0] * (T(1) - fw) + src[r0 * W + c1] * fw;
                const T bot = src[r1 * W + c0] * (T(1) - fw) + src[r1 * W + c1] * fw;
                dst[oh * out_w + ow] = top * (T(1) - fh) + bot * fh;
            }
        }
    }

    return make_op_output<T>(
        "bilinear_upsample2d", out_shape, std::move(y), {x},
        [x, batch, H, W, out_h, out_w, mh, mw](const TensorData<T>& out) {
            if (!x.requires_grad()) return;
            auto& dx = x.data()->grad_buffer();
            const T* dy = out.grad.data();
            for (int64_t b = 0; b < batch; ++b) {
                T* dst = dx.data() + b * H * W;
                const T* src = dy + b * out_h * out_w;
                for (int64_t oh = 0; oh < out_h; ++oh) {
                    const int64_t r0 = mh.lo[oh], r1 = mh.hi[oh];
                    const T fh = mh.frac[oh];
                    for (int64_t ow = 0; ow < out_w; ++ow) {
                        const int64_t c0 = mw.lo[ow], c1 = mw.hi[ow];
                        const T fw = mw.frac[ow];
                        const T g = src[oh * out_w + ow];
                        dst[r0 * W + c0] += g * (T(1) - fh) * (T(1) - fw);
                        dst[r0 * W + c1] += g * (T(1) - fh) * fw;
                        dst[r1 * W + c0] += g * fh * (T(1) - fw);
                        dst[r1 * W + c1] += g * fh * fw;
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> trilinear_upsample3d(const Tensor<T>& x, int64_t out_d, int64_t out_h, int64_t out_w) {
    int64_t batch;
    flat_batch("trilinear_upsample3d", x, 3, batch);
    const int64_t D = x.dim(x.rank() - 3), H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
    detail::check(out_d >= D && out_h >= H && out_w >= W,
                  "trilinear_upsample3d: target " + std::to_string(out_d) + "x" + std::to_string(out_h) +
                      "x" + std::to_string(out_w) + " below input " + std::to_string(D) + "x" +
                      std::to_string(H) + "x" + std::to_string(W));
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 3] = out_d;
    out_shape[out_shape.size() - 2] = out_h;
    out_shape[out_shape.size() - 1] = out_w;
    const AxisMap<T> md = axis_map<T>(D, out_d), mh = axis_map<T>(H, out_h), mw = axis_map<T>(W, out_w);

    std::vector<T> y(static_cast<size_t>(batch * out_d * out_h * out_w));
    const T* xv = x.values().data();
    for (int64_t b = 0; b < batch; ++b) {
        const T* src = xv + b * D * H * W;
        T* dst = y.data() + b * out_d * out_h * out_w;
        for (int64_t od = 0; od < out_d; ++od) {
            const int64_t d0 = md.lo[od], d1 = md.hi[od];
            const T fd = md.frac[od];
            for (int64_t oh = 0; oh < out_h; ++oh) {
                const int64_t r0 = mh.lo[oh], r1 = mh.hi[oh];
                const T fh = mh.frac[oh];
                for (int64_t ow = 0; ow < out_w; ++ow) {
                    const int64_t c0 = mw.lo[ow], c1 = mw.hi[ow];
                    const T fw = mw.frac[ow];
                    auto at = [&](int64_t d, int64_t r, int64_t c) { return src[(d * H + r) * W + c]; };
                    const T v00 = at(d0, r0, c0) * (T(1) - fw) + at(d0, r0, c1) * fw;
                    const T v01 = at(d0, r1, c0) * (T(1) - fw) + at(d0, r1, c1) * fw;
                    const T v10 = at(d1, r0, c0) * (T(1) - fw) + at(d1, r0, c1) * fw;
                    const T v11 = at(d1, r1, c0) * (T(1) - fw) + at(d1, r1, c1) * fw;
                    const T v0 = v00 * (T(1) - fh) + v01 * fh;
                    const T v1 = v10 * (T(1) - fh) + v11 * fh;
                    dst[(od * out_h + oh) * out_w + ow] = v0 * (T(1) - fd) + v1 * fd;
                }
            }
        }
    }

    return make_op_output<T>(
        "trilinear_upsample3d", out_shape, std::move(y), {x},
        [x, batch, D, H, W, out_d, out_h, out_w, md, mh, mw](const TensorData<T>& out) {
            if (!x.requires_grad()) return;
            auto& dx = x.data()->grad_buffer();
            const T* dy = out.grad.data();
            for (int64_t b = 0; b < batch; ++b) {
                T* dst = dx.data() + b * D * H * W;
                const T* src = dy + b * out_d * out_h * out_w;
                for (int64_t od = 0; od < out_d; ++od) {
                    const int64_t d0 = md.lo[od], d1 = md.hi[od];
                    const T fd = md.frac[od];
                    for (int64_t oh = 0; oh < out_h; ++oh) {
                        const int64_t r0 = mh.lo[oh], r1 = mh.hi[oh];
                        const T fh = mh.frac[oh];
                        for (int64_t ow = 0; ow < out_w; ++ow) {
                            const int64_t c0 = mw.lo[ow], c1 = mw.hi[ow];
                            const T fw = mw.frac[ow];
                            const T g = src[(od * out_h + oh) * out_w + ow];
                            auto adx = [&](int64_t d, int64_t r, int64_t c, T v) {
                                dst[(d * H + r) * W + c] += v;
                            };
                            adx(d0, r0, c0, g * (T(1) - fd) * (T(1) - fh) * (T(1) - fw));
                            adx(d0, r0, c1, g * (T(1) - fd) * (T(1) - fh) * fw);
                            adx(d0, r1, c0, g * (T(1) - fd) * fh * (T(1) - fw));
                            adx(d0, r1, c1, g * (T(1) - fd) * fh * fw);
                            adx(d1, r0, c0, g * fd * (T(1) - fh) * (T(1) - fw));
                            adx(d1, r0, c1, g * fd * (T(1) - fh) * fw);
                            adx(d1, r1, c0, g * fd * fh * (T(1) - fw));
                            adx(d1, r1, c1, g * fd * fh * fw);
                        }
                    }
                }
            }
        });
}

#define CFS_INSTANTIATE(T)                                                               \
    template Tensor<T> avg_pool2d<T>(const Tensor<T>&, int);                             \
    template Tensor<T> adaptive_avg_pool2d<T>(const Tensor<T>&, int64_t, int64_t);       \
    template Tensor<T> bilinear_upsample2d<T>(const Tensor<T>&, int64_t, int64_t);       \
    template Tensor<T> trilinear_upsample3d<T>(const Tensor<T>&, int64_t, int64_t, int64_t);

CFS_INSTANTIATE(float)
CFS_INSTANTIATE(double)
#undef CFS_INSTANTIATE

}  // namespace cfstereo
