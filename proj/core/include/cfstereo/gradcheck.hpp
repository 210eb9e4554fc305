#pragma once

#include <cmath>
#include <functional>

#include "cfstereo/ops.hpp"
#include "cfstereo/rng.hpp"
#include "cfstereo/tensor.hpp"

namespace cfstereo {

struct GradCheckReport {
    std::vector<double> max_rel_err;  // one entry per checked input
    double worst = 0.0;
    bool pass(double tol) const { return worst <= tol; }
};

// Central-difference check of reverse-mode gradients. `f` maps the inputs to
// a tensor of any shape; a fixed random projection scalarizes it so one
// backward pass covers every output element. Relative error per element is
// |analytic - numeric| / max(floor, |analytic| + |numeric|); raise `floor`
// for deep graphs whose negligible gradients sit at the finite-difference
// noise floor (they are then certified to tol*floor in absolute terms).
inline GradCheckReport gradcheck(const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                                 std::vector<Tensor<double>> inputs, double step = 1e-4,
                                 uint64_t seed = 0x5eed, double floor = 1e-8) {
    for (auto& in : inputs) in.set_requires_grad(true);

    Tensor<double> out = f(inputs);
    std::vector<double> proj(out.values().size());
    if (out.size() == 1) {
        proj[0] = 1.0;  // scalar objective: check it directly
    } else {
        Rng rng(seed);
        for (double& v : proj) v = rng.uniform(-1.0, 1.0);
    }

    auto project = [&](const Tensor<double>& t) {
        double acc = 0.0;
        for (size_t i = 0; i < proj.size(); ++i) acc += proj[i] * t.values()[i];
        return acc;
    };

    Tensor<double> weights = Tensor<double>::from(out.shape(), proj);
    Tensor<double> loss = sum(mul(out, weights));
    for (auto& in : inputs) in.zero_grad();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto& in : inputs)
        analytic.push_back(in.has_grad() ? in.grad() : std::vector<double>(in.values().size(), 0.0));

    GradCheckReport report;
    report.max_rel_err.assign(inputs.size(), 0.0);
    NoGradGuard ng;
    for (size_t i = 0; i < inputs.size(); ++i) {
        auto& vals = inputs[i].mutable_values();
        for (size_t j = 0; j < vals.size(); ++j) {
            const double saved = vals[j];
            vals[j] = saved + step;
            const double up = project(f(inputs));
            vals[j] = saved - step;
            const double down = project(f(inputs));
            vals[j] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[i][j];
            const double rel = std::abs(a - numeric) / std::max(floor, std::abs(a) + std::abs(numeric));
            report.max_rel_err[i] = std::max(report.max_rel_err[i], rel);
            report.worst = std::max(report.worst, rel);
        }
    }
    return report;
}

}  // namespace cfstereo
