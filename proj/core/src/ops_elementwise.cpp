#include <algorithm>
#include <cmath>

#include "cfstereo/ops.hpp"
#include "op_common.hpp"

namespace cfstereo {

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> y(x.values().size());
    const auto& xv = x.values();
    for (size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
    return make_op_output<T>(
        "relu", x.shape(), std::move(y), {x},
        [x](const TensorData<T>& out) {
            if (!x.requires_grad()) return;
            auto& dx = x.data()->grad_buffer();
            const auto& xv = x.values();
            for (size_t i = 0; i < dx.size(); ++i)
                if (xv[i] > T(0)) dx[i] += out.grad[i];
        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("add", a, b);
    std::vector<T> y(a.values().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
    return make_op_output<T>(
        "add", a.shape(), std::move(y), {a, b},
        [a, b](const TensorData<T>& out) {
            if (a.requires_grad()) {
                auto& da = a.data()->grad_buffer();
                for (size_t i = 0; i < da.size(); ++i) da[i] += out.grad[i];
            }
            if (b.requires_grad()) {
                auto& db = b.data()->grad_buffer();
                for (size_t i = 0; i < db.size(); ++i) db[i] += out.grad[i];
            }
        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("mul", a, b);
    std::vector<T> y(a.values().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * b.values()[i];
    return make_op_output<T>(
        "mul", a.shape(), std::move(y), {a, b},
        [a, b](const TensorData<T>& out) {
            if (a.requires_grad()) {
                auto& da = a.data()->grad_buffer();
                for (size_t i = 0; i < da.size(); ++i) da[i] += out.grad[i] * b.values()[i];
            }
            if (b.requires_grad()) {
                auto& db = b.data()->grad_buffer();
                for (size_t i = 0; i < db.size(); ++i) db[i] += out.grad[i] * a.values()[i];
            }
        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T alpha) {
    std::vector<T> y(x.values().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = x.values()[i] * alpha;
    return make_op_output<T>(
        "scale", x.shape(), std::move(y), {x},
        [x, alpha](const TensorData<T>& out) {
            if (!x.requires_grad()) return;
            auto& dx = x.data()->grad_buffer();
            for (size_t i = 0; i < dx.size(); ++i) dx[i] += out.grad[i] * alpha;
        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = T(0);
    for (T v : x.values()) acc += v;
    return make_op_output<T>(
        "sum", Shape{}, {acc}, {x},
        [x](const TensorData<T>& out) {
            if (!x.requires_grad()) return;
            auto& dx = x.data()->grad_buffer();
            const T g = out.grad[0];
            for (T& d : dx) d += g;
        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
    detail::check(!xs.empty(), "concat: no inputs");
    const int rank = xs[0].rank();
    detail::check(axis >= 0 && axis < rank, "concat: axis " + std::to_string(axis) +
                                                " out of range for rank " + std::to_string(rank));
    Shape out_shape = xs[0].shape();
    for (size_t i = 1; i < xs.size(); ++i) {
        if (xs[i].rank() != rank)
            throw std::invalid_argument("concat: rank mismatch, input 0 is " + shape_str(xs[0].shape()) +
                                        ", input " + std::to_string(i) + " is " + shape_str(xs[i].shape()));
        for (int d = 0; d < rank; ++d)
            if (d != axis && xs[i].dim(d) != out_shape[static_cast<size_t>(d)])
                throw std::invalid_argument("concat: extent mismatch on axis " + std::to_string(d) +
                                            ", input 0 is " + shape_str(xs[0].shape()) + ", input " +
                                            std::to_string(i) + " is " + shape_str(xs[i].shape()));
        out_shape[static_cast<size_t>(axis)] += xs[i].dim(axis);
    }

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<size_t>(d)];
    for (int d = axis + 1; d < rank; ++d) inner *= out_shape[static_cast<size_t>(d)];
    const int64_t out_axis = out_shape[static_cast<size_t>(axis)];

    std::vector<T> y(static_cast<size_t>(numel(out_shape)));
    int64_t offset = 0;  // running start of each input's slice along `axis`
    for (const auto& x : xs) {
        const int64_t ax = x.dim(axis);
        const auto& xv = x.values();
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(xv.begin() + o * ax * inner, ax * inner,
                        y.begin() + (o * out_axis + offset) * inner);
        offset += ax;
    }

    std::vector<int64_t> axis_extents;
    axis_extents.reserve(xs.size());
    for (const auto& x : xs) axis_extents.push_back(x.dim(axis));

    return make_op_output<T>(
        "concat", out_shape, std::move(y), xs,
        [xs, axis_extents, outer, inner, out_axis](const TensorData<T>& out) {
            int64_t offset = 0;
            for (size_t k = 0; k < xs.size(); ++k) {
                const int64_t ax = axis_extents[k];
                if (xs[k].requires_grad()) {
                    auto& dx = xs[k].data()->grad_buffer();
                    for (int64_t o = 0; o < outer; ++o) {
                        const T* src = out.grad.data() + (o * out_axis + offset) * inner;
                        T* dst = dx.data() + o * ax * inner;
                        for (int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
                    }
                }
                offset += ax;
            }
        });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const int rank = x.rank();
    detail::check(axis >= 0 && axis < rank, "softmax: axis " + std::to_string(axis) +
                                                " out of range for rank " + std::to_string(rank));
    int64_t outer = 1, inner = 1;
    const int64_t ax = x.dim(axis);
    for (int d = 0; d < axis; ++d) outer *= x.dim(d);
    for (int d = axis + 1; d < rank; ++d) inner *= x.dim(d);

    std::vector<T> y(x.values().size());
    const T* xv = x.values().data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * ax * inner + i;
            T mx = xv[base];
            for (int64_t a = 1; a < ax; ++a) mx = std::max(mx, xv[base + a * inner]);
            T denom = T(0);
            for (int64_t a = 0; a < ax; ++a) {
                T e = std::exp(xv[base + a * inner] - mx);
                y[base + a * inner] = e;
                denom += e;
            }
            for (int64_t a = 0; a < ax; ++a) y[base + a * inner] /= denom;
        }

    return make_op_output<T>(
        "softmax", x.shape(), std::move(y), {x},
        [x, outer, inner, ax](const TensorData<T>& out) {
            if (!x.requires_grad()) return;
            auto& dx = x.data()->grad_buffer();
            const T* p = out.values.data();
            const T* dy = out.grad.data();
            // dx = p * (dy - sum(dy * p)) per slice
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i) {
                    const int64_t base = o * ax * inner + i;
                    T dot = T(0);
                    for (int64_t a = 0; a < ax; ++a) dot += dy[base + a * inner] * p[base + a * inner];
                    for (int64_t a = 0; a < ax; ++a)
                        dx[base + a * inner] += p[base + a * inner] * (dy[base + a * inner] - dot);
                }
        });
}

namespace {

// crop/pad act on the last two axes; everything before them is one flat batch.
template <typename T>
void last_two(const Tensor<T>& x, int64_t& batch, int64_t& h, int64_t& w) {
    detail::check(x.rank() >= 2, std::string("crop2d/pad2d: need rank >= 2, got ") + shape_str(x.shape()));
    const auto& s = x.shape();
    h = s[s.size() - 2];
    w = s[s.size() - 1];
    batch = x.size() / (h * w);
}

}  // namespace

template <typename T>
Tensor<T> crop2d(const Tensor<T>& x, int64_t h, int64_t w) {
    int64_t batch, H, W;
    last_two(x, batch, H, W);
    detail::check(h >= 1 && w >= 1 && h <= H && w <= W,
                  "crop2d: target " + std::to_string(h) + "x" + std::to_string(w) +
                      " outside source " + std::to_string(H) + "x" + std::to_string(W));
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = h;
    out_shape[out_shape.size() - 1] = w;
    std::vector<T> y(static_cast<size_t>(batch * h * w));
    const T* xv = x.values().data();
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t r = 0; r < h; ++r)
            std::copy_n(xv + (b * H + r) * W, w, y.data() + (b * h + r) * w);
    return make_op_output<T>(
        "crop2d", out_shape, std::move(y), {x},
        [x, batch, H, W, h, w](const TensorData<T>& out) {
            if (!x.requires_grad()) return;
            auto& dx = x.data()->grad_buffer();
            const T* dy = out.grad.data();
            for (int64_t b = 0; b < batch; ++b)
                for (int64_t r = 0; r < h; ++r) {
                    const T* src = dy + (b * h + r) * w;
                    T* dst = dx.data() + (b * H + r) * W;
                    for (int64_t c = 0; c < w; ++c) dst[c] += src[c];
                }
        });
}

template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, int64_t h, int64_t w) {
    int64_t batch, H, W;
    last_two(x, batch, H, W);
    detail::check(h >= H && w >= W, "pad2d: target " + std::to_string(h) + "x" + std::to_string(w) +
                                        " smaller than source " + std::to_string(H) + "x" + std::to_string(W));
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = h;
    out_shape[out_shape.size() - 1] = w;
    std::vector<T> y(static_cast<size_t>(batch * h * w), T(0));
    const T* xv = x.values().data();
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t r = 0; r < H; ++r)
            std::copy_n(xv + (b * H + r) * W, W, y.data() + (b * h + r) * w);
    return make_op_output<T>(
        "pad2d", out_shape, std::move(y), {x},
        [x, batch, H, W, h, w](const TensorData<T>& out) {
            if (!x.requires_grad()) return;
            auto& dx = x.data()->grad_buffer();
            const T* dy = out.grad.data();
            for (int64_t b = 0; b < batch; ++b)
                for (int64_t r = 0; r < H; ++r) {
                    const T* src = dy + (b * h + r) * w;
                    T* dst = dx.data() + (b * H + r) * W;
                    for (int64_t c = 0; c < W; ++c) dst[c] += src[c];
                }
        });
}

#define CFS_INSTANTIATE(T)                                                              \
    template Tensor<T> relu<T>(const Tensor<T>&);                                       \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                   \
    template Tensor<T> sum<T>(const Tensor<T>&);                                        \
    template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);                   \
    template Tensor<T> softmax<T>(const Tensor<T>&, int);                               \
    template Tensor<T> crop2d<T>(const Tensor<T>&, int64_t, int64_t);                   \
    template Tensor<T> pad2d<T>(const Tensor<T>&, int64_t, int64_t);

CFS_INSTANTIATE(float)
CFS_INSTANTIATE(double)
#undef CFS_INSTANTIATE

}  // namespace cfstereo
