#include "cfstereo/objective.hpp"

#include <cmath>
#include <cstdio>

#include "op_common.hpp"

namespace cfstereo {

namespace {

inline void check_lengths(const char* op, size_t pred, size_t gt, size_t mask) {
    detail::check(pred == gt && gt == mask,
                  std::string(op) + ": pred/gt/mask length mismatch " + std::to_string(pred) +
                      "/" + std::to_string(gt) + "/" + std::to_string(mask));
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

template <typename T>
std::vector<uint8_t> training_mask(const StereoSample<T>& sample, int d_max) {
    detail::check(sample.gt.size() == sample.valid.size(),
                  "training_mask: gt/valid length mismatch");
    std::vector<uint8_t> mask(sample.valid.size());
    for (size_t i = 0; i < mask.size(); ++i)
        mask[i] = sample.valid[i] && sample.gt[i] > T(0) && sample.gt[i] < T(d_max);
    return mask;
}

template <typename T>
double epe(const std::vector<T>& pred, const std::vector<T>& gt, const std::vector<uint8_t>& mask) {
    check_lengths("epe", pred.size(), gt.size(), mask.size());
    double acc = 0.0;
    int64_t n = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i]) {
            acc += std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
            ++n;
        }
    detail::check(n > 0, "epe: mask selects no pixels");
    return acc / static_cast<double>(n);
}

template <typename T>
double bad_pixel_rate(const std::vector<T>& pred, const std::vector<T>& gt,
                      const std::vector<uint8_t>& mask, double threshold_px) {
    check_lengths("bad_pixel_rate", pred.size(), gt.size(), mask.size());
    detail::check(threshold_px > 0.0, "bad_pixel_rate: threshold must be positive");
    int64_t bad = 0, n = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i]) {
            if (std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i])) > threshold_px)
                ++bad;
            ++n;
        }
    detail::check(n > 0, "bad_pixel_rate: mask selects no pixels");
    return static_cast<double>(bad) / static_cast<double>(n);
}

template <typename T>
D1Result d1_metrics(const std::vector<T>& pred, const std::vector<T>& gt,
                    const std::vector<uint8_t>& fg_mask, const std::vector<uint8_t>& valid_mask) {
    check_lengths("d1_metrics", pred.size(), gt.size(), valid_mask.size());
    detail::check(fg_mask.size() == valid_mask.size(), "d1_metrics: fg/valid length mismatch");

    int64_t bad_bg = 0, bad_fg = 0;
    D1Result r;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (!valid_mask[i]) continue;
        const double err = std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
        const bool bad = err > 3.0 && err > 0.05 * static_cast<double>(gt[i]);
        if (fg_mask[i]) {
            ++r.fg_count;
            bad_fg += bad;
        } else {
            ++r.bg_count;
            bad_bg += bad;
        }
    }
    r.valid_count = r.bg_count + r.fg_count;
    if (r.bg_count > 0) r.bg = static_cast<double>(bad_bg) / static_cast<double>(r.bg_count);
    if (r.fg_count > 0) r.fg = static_cast<double>(bad_fg) / static_cast<double>(r.fg_count);
    if (r.valid_count > 0)
        r.all = static_cast<double>(bad_bg + bad_fg) / static_cast<double>(r.valid_count);
    return r;
}

std::string MetricReport::to_lines() const {
    std::string s;
    s += "epe=" + fmt(epe) + "\n";
    s += "bad_1=" + fmt(bad_1) + "\n";
    s += "bad_3=" + fmt(bad_3) + "\n";
    s += "bad_4=" + fmt(bad_4) + "\n";
    s += "bad_5=" + fmt(bad_5) + "\n";
    s += "valid_count=" + std::to_string(valid_count) + "\n";
    if (d1_bg) s += "d1_bg=" + fmt(*d1_bg) + "\n";
    if (d1_fg) s += "d1_fg=" + fmt(*d1_fg) + "\n";
    if (d1_all) s += "d1_all=" + fmt(*d1_all) + "\n";
    if (d1_bg || d1_fg) {
        s += "bg_count=" + std::to_string(bg_count) + "\n";
        s += "fg_count=" + std::to_string(fg_count) + "\n";
    }
    return s;
}

template <typename T>
MetricReport evaluate_disparity(const std::vector<T>& pred, const std::vector<T>& gt,
                                const std::vector<uint8_t>& valid,
                                const std::vector<uint8_t>* fg) {
    MetricReport r;
    r.epe = epe(pred, gt, valid);
    r.bad_1 = bad_pixel_rate(pred, gt, valid, 1.0);
    r.bad_3 = bad_pixel_rate(pred, gt, valid, 3.0);
    r.bad_4 = bad_pixel_rate(pred, gt, valid, 4.0);
    r.bad_5 = bad_pixel_rate(pred, gt, valid, 5.0);
    for (uint8_t m : valid) r.valid_count += m ? 1 : 0;

    const std::vector<uint8_t> all_bg(valid.size(), 0);
    const D1Result d1 = d1_metrics(pred, gt, fg ? *fg : all_bg, valid);
    r.d1_all = d1.all;
    if (fg) {
        r.d1_bg = d1.bg;
        r.d1_fg = d1.fg;
        r.bg_count = d1.bg_count;
        r.fg_count = d1.fg_count;
    }
    return r;
}

#define CFS_INSTANTIATE_OBJECTIVE(T)                                                              \
    template std::vector<uint8_t> training_mask<T>(const StereoSample<T>&, int);                  \
    template double epe<T>(const std::vector<T>&, const std::vector<T>&,                          \
                           const std::vector<uint8_t>&);                                          \
    template double bad_pixel_rate<T>(const std::vector<T>&, const std::vector<T>&,               \
                                      const std::vector<uint8_t>&, double);                       \
    template D1Result d1_metrics<T>(const std::vector<T>&, const std::vector<T>&,                 \
                                    const std::vector<uint8_t>&, const std::vector<uint8_t>&);    \
    template MetricReport evaluate_disparity<T>(const std::vector<T>&, const std::vector<T>&,     \
                                                const std::vector<uint8_t>&,                      \
                                                const std::vector<uint8_t>*);

CFS_INSTANTIATE_OBJECTIVE(float)
CFS_INSTANTIATE_OBJECTIVE(double)

}  // namespace cfstereo
