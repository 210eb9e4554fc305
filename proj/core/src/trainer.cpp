#include "cfstereo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "cfstereo/ops.hpp"
#include "op_common.hpp"

namespace cfstereo {

template <typename T>
void Optimizer<T>::apply(ParamStore<T>& store) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double c1 = 1.0, c2 = 1.0;
    if (kind_ == OptimizerKind::Adam) {
        ++steps_taken;
        c1 = 1.0 - std::pow(b1, static_cast<double>(steps_taken));
        c2 = 1.0 - std::pow(b2, static_cast<double>(steps_taken));
    }
    for (auto& [name, t] : store.params) {
        if (!t.has_grad()) continue;
        const std::vector<T>& g = t.grad();
        std::vector<T>& vals = t.mutable_values();
        if (kind_ == OptimizerKind::SGD) {
            for (size_t i = 0; i < vals.size(); ++i)
                vals[i] -= static_cast<T>(lr_ * static_cast<double>(g[i]));
        } else {
            std::vector<T>& mi = m[name];
            std::vector<T>& vi = v[name];
            if (mi.empty()) mi.assign(vals.size(), T(0));
            if (vi.empty()) vi.assign(vals.size(), T(0));
            for (size_t i = 0; i < vals.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mn = b1 * static_cast<double>(mi[i]) + (1.0 - b1) * gi;
                const double vn = b2 * static_cast<double>(vi[i]) + (1.0 - b2) * gi * gi;
                mi[i] = static_cast<T>(mn);
                vi[i] = static_cast<T>(vn);
                vals[i] -= static_cast<T>(lr_ * (mn / c1) / (std::sqrt(vn / c2) + eps));
            }
        }
        t.zero_grad();
    }
}

std::vector<float> infer_disparity(StereoNetwork<float>& net, const Tensor<float>& left,
                                   const Tensor<float>& right) {
    NoGradGuard ng;
    return net.forward(left, right, false).values();
}

bool median_smoothed_non_increasing(const std::vector<double>& losses, int64_t window,
                                    int64_t start, double slack) {
    detail::check(window > 0, "median_smoothed_non_increasing: window must be positive");
    detail::check(start >= 0, "median_smoothed_non_increasing: start must be non-negative");
    const int64_t n = static_cast<int64_t>(losses.size());
    auto median_at = [&](int64_t i) {
        std::vector<double> w(losses.begin() + i, losses.begin() + i + window);
        std::sort(w.begin(), w.end());
        const int64_t k = window / 2;
        return (window % 2 == 1) ? w[k] : 0.5 * (w[k - 1] + w[k]);
    };
    double prev = 0.0;
    bool have_prev = false;
    for (int64_t i = start; i + window <= n; ++i) {
        const double med = median_at(i);
        if (have_prev && med > prev + slack) return false;
        prev = med;
        have_prev = true;
    }
    return true;
}

namespace {

const FullConfig& validated(const FullConfig& c) {
    c.validate();
    return c;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (T x : t.values())
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

// Replays the forward pass stage by stage (tape off) and names the first
// stage whose output contains a non-finite value.
std::string first_nonfinite_stage(const StereoNetwork<float>& net,
                                  const StereoSample<float>& sample,
                                  const std::vector<uint8_t>& mask) {
    NoGradGuard ng;
    if (!all_finite(sample.left) || !all_finite(sample.right)) return "input";
    Padded<float> pl = pad_to_multiple(sample.left, 8);
    Padded<float> pr = pad_to_multiple(sample.right, 8);
    Tensor<float> el = net.extractor.forward(pl.image, true);
    Tensor<float> er = net.extractor.forward(pr.image, true);
    if (!all_finite(el) || !all_finite(er)) return "extractor";
    Tensor<float> gl = net.pyramid.forward(el, true);
    Tensor<float> gr = net.pyramid.forward(er, true);
    if (!all_finite(gl) || !all_finite(gr)) return "pyramid";
    Tensor<float> volume = build_cost_volume(gl, gr, net.cfg.d_levels());
    if (!all_finite(volume)) return "cost-volume";
    Tensor<float> costs =
        net.matcher.forward(volume, true, net.cfg.d_max, pl.image.dim(2), pl.image.dim(3));
    if (!all_finite(costs)) return "matcher";
    Tensor<float> disparity = soft_argmin(costs);
    if (!all_finite(disparity)) return "soft-argmin";
    if (disparity.dim(1) != pl.orig_h || disparity.dim(2) != pl.orig_w)
        disparity = crop2d(disparity, pl.orig_h, pl.orig_w);
    (void)mask;
    return "loss";
}

}  // namespace

Trainer::Trainer(const FullConfig& config)
    : cfg(validated(config)),
      net(cfg.net, cfg.train.seed),
      opt(cfg.train.optimizer, cfg.train.learning_rate) {}

Trainer Trainer::from_checkpoint(const Checkpoint& ck) {
    Trainer t(parse_config(ck.config_text));
    t.load(ck);
    return t;
}

StereoSample<float> Trainer::sample_for_step(int64_t at_step) const {
    SyntheticSpec spec;
    spec.width = cfg.train.crop_w;
    spec.height = cfg.train.crop_h;
    spec.d_max = cfg.net.d_max;
    spec.texture = cfg.data.texture;
    spec.field = cfg.data.field;
    const uint64_t base = splitmix64(cfg.train.seed ^ 0xda7a5e3dull);
    spec.seed = cfg.data.mode == DataMode::Overfit
                    ? base
                    : splitmix64(base + static_cast<uint64_t>(at_step) * 0x9e3779b97f4a7c15ull);
    return generate_sample<float>(spec);
}

double Trainer::train_step(const StereoSample<float>& sample) {
    std::vector<uint8_t> mask = training_mask(sample, static_cast<int>(cfg.net.d_max));
    detail::check(std::count(mask.begin(), mask.end(), uint8_t(1)) > 0,
                  "train_step: no trainable pixels in sample");
    net.store.zero_grad();
    Tensor<float> disparity = net.forward(sample.left, sample.right, true);
    Tensor<float> loss = masked_smooth_l1_loss(disparity, sample.gt, mask);
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value))
        throw std::runtime_error("train_step: non-finite loss, first non-finite stage: " +
                                 first_nonfinite_stage(net, sample, mask));
    backward(loss);
    opt.apply(net.store);
    ++step;
    return value;
}

void Trainer::run(std::ostream* loss_log, const std::string& checkpoint_dir) {
    if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);
    const int64_t total = cfg.train.steps;
    while (step < total) {
        const double value = train_step(sample_for_step(step));
        const int64_t n = step;
        if (loss_log && (n % cfg.train.log_every == 0 || n == total)) {
            char line[64];
            std::snprintf(line, sizeof(line), "%lld\t%.9g\n", static_cast<long long>(n), value);
            (*loss_log) << line;
        }
        if (!checkpoint_dir.empty() && (n % cfg.train.checkpoint_every == 0 || n == total))
            save_checkpoint(checkpoint_dir + "/ckpt_" + std::to_string(n) + ".bin",
                            to_checkpoint());
    }
}

Checkpoint Trainer::to_checkpoint() const {
    Checkpoint ck;
    ck.step = step;
    ck.config_text = serialize_config(cfg);
    auto push = [&ck](const std::string& name, const Shape& dims, const std::vector<float>& data) {
        ck.tensors.push_back({name, dims, data});
    };
    for (const auto& [name, t] : net.store.params) push(name, t.shape(), t.values());
    for (const auto& [name, t] : net.store.buffers) push(name, t.shape(), t.values());
    if (opt.kind() == OptimizerKind::Adam) {
        for (const auto& [name, t] : net.store.params) {
            auto mi = opt.m.find(name);
            if (mi != opt.m.end()) push("opt/adam.m/" + name, t.shape(), mi->second);
            auto vi = opt.v.find(name);
            if (vi != opt.v.end()) push("opt/adam.v/" + name, t.shape(), vi->second);
        }
        // steps_taken as f32 is exact far beyond any training run here
        push("opt/adam.t", Shape{1}, {static_cast<float>(opt.steps_taken)});
    }
    return ck;
}

void Trainer::load(const Checkpoint& ck) {
    if (serialize_config(cfg) != ck.config_text)
        throw std::runtime_error("checkpoint config differs from trainer config");
    std::unordered_map<std::string, const CheckpointEntry*> index;
    for (const auto& e : ck.tensors) {
        if (!index.emplace(e.name, &e).second)
            throw std::runtime_error("checkpoint has duplicate tensor: " + e.name);
    }
    auto take = [&index](const std::string& name, const Shape& dims) {
        auto it = index.find(name);
        if (it == index.end()) throw std::runtime_error("checkpoint missing tensor: " + name);
        const CheckpointEntry* e = it->second;
        if (e->dims != dims)
            throw std::runtime_error("checkpoint shape mismatch for " + name + ": got " +
                                     shape_str(e->dims) + ", want " + shape_str(dims));
        index.erase(it);
        return e;
    };
    for (auto& [name, t] : net.store.params) t.mutable_values() = take(name, t.shape())->data;
    for (auto& [name, t] : net.store.buffers) t.mutable_values() = take(name, t.shape())->data;
    opt.m.clear();
    opt.v.clear();
    opt.steps_taken = 0;
    if (opt.kind() == OptimizerKind::Adam) {
        for (const auto& [name, t] : net.store.params) {
            const std::string mname = "opt/adam.m/" + name;
            if (index.count(mname)) opt.m[name] = take(mname, t.shape())->data;
            const std::string vname = "opt/adam.v/" + name;
            if (index.count(vname)) opt.v[name] = take(vname, t.shape())->data;
        }
        opt.steps_taken =
            static_cast<int64_t>(std::llround(take("opt/adam.t", Shape{1})->data.at(0)));
    }
    if (!index.empty())
        throw std::runtime_error("checkpoint has unknown tensor: " + index.begin()->first);
    step = ck.step;
    net.store.zero_grad();
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace cfstereo
