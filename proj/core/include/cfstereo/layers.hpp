#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cfstereo/ops.hpp"
#include "cfstereo/rng.hpp"
#include "cfstereo/tensor.hpp"

namespace cfstereo {

// Ordered registry of every learnable tensor (params) and every persistent
// non-learnable tensor (buffers, e.g. batchnorm running statistics). Order of
// registration is the canonical order for init, checkpoints, and optimizers.
template <typename T>
struct ParamStore {
    std::vector<std::pair<std::string, Tensor<T>>> params;
    std::vector<std::pair<std::string, Tensor<T>>> buffers;

    Tensor<T> add_param(const std::string& name, Tensor<T> init) {
        init.set_requires_grad(true);
        params.emplace_back(name, init);
        return init;
    }

    Tensor<T> kaiming_param(const std::string& name, Shape shape, int64_t fan_in, Rng& rng) {
        std::vector<T> v(static_cast<size_t>(numel(shape)));
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
        return add_param(name, Tensor<T>::from(std::move(shape), std::move(v)));
    }

    Tensor<T> const_param(const std::string& name, Shape shape, T value) {
        return add_param(name, Tensor<T>::full(std::move(shape), value));
    }

    Tensor<T> add_buffer(const std::string& name, Shape shape, T value) {
        Tensor<T> t = Tensor<T>::full(shape, value);
        buffers.emplace_back(name, t);
        return t;
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : params) n += t.size();
        return n;
    }

    int64_t param_count_with_prefix(const std::string& prefix) const {
        int64_t n = 0;
        for (const auto& [name, t] : params)
            if (name.rfind(prefix, 0) == 0) n += t.size();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : params) t.zero_grad();
    }
};

// Fresh biases start slightly positive: at the narrow widths used for tests
// a zero-bias ReLU stack can initialize dead, and the soft-argmin head is
// invariant to constant cost shifts, so gradient descent cannot wake it.
inline constexpr double kBiasInit = 0.05;

// conv -> optional batchnorm -> optional relu. Bias is dropped when the norm
// immediately absorbs it.
template <typename T>
struct ConvBlock2d {
    Tensor<T> weight;
    std::optional<Tensor<T>> bias;
    std::optional<Tensor<T>> bn_gamma, bn_beta, bn_mean, bn_var;
    int stride = 1, padding = 0, dilation = 1;
    bool relu_after = true;

    ConvBlock2d() = default;
    ConvBlock2d(ParamStore<T>& store, Rng& rng, const std::string& name, int64_t in_ch,
                int64_t out_ch, int k, int stride_, int padding_, int dilation_, bool use_bn,
                bool relu_)
        : stride(stride_), padding(padding_), dilation(dilation_), relu_after(relu_) {
        weight = store.kaiming_param(name + ".weight", {out_ch, in_ch, k, k}, in_ch * k * k, rng);
        if (use_bn) {
            bn_gamma = store.const_param(name + ".bn.gamma", {out_ch}, T(1));
            bn_beta = store.const_param(name + ".bn.beta", {out_ch}, T(0));
            bn_mean = store.add_buffer(name + ".bn.running_mean", {out_ch}, T(0));
            bn_var = store.add_buffer(name + ".bn.running_var", {out_ch}, T(1));
        } else {
            bias = store.const_param(name + ".bias", {out_ch}, T(kBiasInit));
        }
    }

    Tensor<T> operator()(const Tensor<T>& x, bool train) const {
        Tensor<T> y = conv2d(x, weight, bias, stride, padding, dilation);
        if (bn_gamma) {
            auto mean = *bn_mean;
            auto var = *bn_var;
            y = batchnorm(y, *bn_gamma, *bn_beta, mean, var, train);
        }
        return relu_after ? relu(y) : y;
    }
};

template <typename T>
struct ConvBlock3d {
    Tensor<T> weight;
    std::optional<Tensor<T>> bias;
    std::optional<Tensor<T>> bn_gamma, bn_beta, bn_mean, bn_var;
    int stride = 1, padding = 0;
    bool relu_after = true;

    ConvBlock3d() = default;
    ConvBlock3d(ParamStore<T>& store, Rng& rng, const std::string& name, int64_t in_ch,
                int64_t out_ch, int k, int stride_, int padding_, bool use_bn, bool relu_)
        : stride(stride_), padding(padding_), relu_after(relu_) {
        weight = store.kaiming_param(name + ".weight", {out_ch, in_ch, k, k, k}, in_ch * k * k * k, rng);
        if (use_bn) {
            bn_gamma = store.const_param(name + ".bn.gamma", {out_ch}, T(1));
            bn_beta = store.const_param(name + ".bn.beta", {out_ch}, T(0));
            bn_mean = store.add_buffer(name + ".bn.running_mean", {out_ch}, T(0));
            bn_var = store.add_buffer(name + ".bn.running_var", {out_ch}, T(1));
        } else {
            bias = store.const_param(name + ".bias", {out_ch}, T(kBiasInit));
        }
    }

    Tensor<T> operator()(const Tensor<T>& x, bool train) const {
        Tensor<T> y = conv3d(x, weight, bias, stride, padding);
        if (bn_gamma) {
            auto mean = *bn_mean;
            auto var = *bn_var;
            y = batchnorm(y, *bn_gamma, *bn_beta, mean, var, train);
        }
        return relu_after ? relu(y) : y;
    }
};

// Transposed conv block; weight layout [in_ch, out_ch, k, k, k].
template <typename T>
struct DeconvBlock3d {
    Tensor<T> weight;
    std::optional<Tensor<T>> bias;
    std::optional<Tensor<T>> bn_gamma, bn_beta, bn_mean, bn_var;
    int stride = 2, padding = 0;
    bool relu_after = true;

    DeconvBlock3d() = default;
    DeconvBlock3d(ParamStore<T>& store, Rng& rng, const std::string& name, int64_t in_ch,
                  int64_t out_ch, int k, int stride_, int padding_, bool use_bn, bool relu_)
        : stride(stride_), padding(padding_), relu_after(relu_) {
        weight = store.kaiming_param(name + ".weight", {in_ch, out_ch, k, k, k}, out_ch * k * k * k, rng);
        if (use_bn) {
            bn_gamma = store.const_param(name + ".bn.gamma", {out_ch}, T(1));
            bn_beta = store.const_param(name + ".bn.beta", {out_ch}, T(0));
            bn_mean = store.add_buffer(name + ".bn.running_mean", {out_ch}, T(0));
            bn_var = store.add_buffer(name + ".bn.running_var", {out_ch}, T(1));
        } else {
            bias = store.const_param(name + ".bias", {out_ch}, T(kBiasInit));
        }
    }

    Tensor<T> operator()(const Tensor<T>& x, bool train) const {
        Tensor<T> y = deconv3d(x, weight, bias, stride, padding);
        if (bn_gamma) {
            auto mean = *bn_mean;
            auto var = *bn_var;
            y = batchnorm(y, *bn_gamma, *bn_beta, mean, var, train);
        }
        return relu_after ? relu(y) : y;
    }
};

}  // namespace cfstereo
