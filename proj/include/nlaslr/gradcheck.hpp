#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nlaslr/autograd.hpp"
#include "nlaslr/params.hpp"

namespace nlaslr {

/// <y, w> for a constant weight tensor w of the same shape as y.
template <typename T>
Var<T> weighted_sum(const Var<T>& y, const Tensor<T>& weights) {
    require_shape(y.shape() == weights.shape(), "weighted_sum: shape mismatch");
    T acc{0};
    for (std::size_t i = 0; i < weights.size(); ++i) acc += y.value()[i] * weights[i];
    return detail::make_result<T>(Tensor<T>({1}, std::vector<T>{acc}), {y}, [weights](Node<T>& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * weights[i];
    });
}

struct GradCheckOptions {
    double step = 1e-6;
    double tolerance = 1e-4;
    /// Denominator floor of the relative error, so entries whose true
    /// gradient vanishes are judged on absolute error at this scale.
    double floor = 1e-6;
    /// Upper bound on probed entries per input; 0 probes every entry.
    std::size_t max_entries = 0;
    std::uint64_t seed = 1234;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t entries_checked = 0;
    std::string worst;  // "input i, entry j" of the largest relative error
    bool passed = true;
};

/// Compares reverse-mode gradients of `op` against central finite
/// differences. A non-scalar output is reduced by a fixed random
/// projection so every output entry contributes.
template <typename Op>
GradCheckReport finite_difference_check(Op&& op, std::vector<Tensor<double>> inputs, const GradCheckOptions& opts = {}) {
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    auto eval = [&](const std::vector<Var<double>>& vars) { return op(vars); };

    std::vector<Var<double>> vars;
    for (auto& t : inputs) vars.push_back(Var<double>::leaf(t));
    Var<double> out = eval(vars);
    Tensor<double> projection(out.shape());
    for (auto& v : projection.values()) v = unit(rng);
    backward(weighted_sum(out, projection));

    auto objective = [&](const std::vector<Tensor<double>>& values) {
        std::vector<Var<double>> consts;
        for (const auto& t : values) consts.push_back(Var<double>::constant(t));
        const Var<double> result = eval(consts);
        const auto& y = result.value();
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * projection[i];
        return acc;
    };

    GradCheckReport report;
    for (std::size_t which = 0; which < inputs.size(); ++which) {
        const std::size_t n = inputs[which].size();
        std::vector<std::size_t> entries(n);
        for (std::size_t i = 0; i < n; ++i) entries[i] = i;
        if (opts.max_entries && n > opts.max_entries) {
            std::shuffle(entries.begin(), entries.end(), rng);
            entries.resize(opts.max_entries);
        }
        const Tensor<double> analytic = vars[which].has_grad() ? vars[which].grad() : Tensor<double>(inputs[which].shape());
        for (std::size_t idx : entries) {
            std::vector<Tensor<double>> probe = inputs;
            probe[which][idx] = inputs[which][idx] + opts.step;
            const double plus = objective(probe);
            probe[which][idx] = inputs[which][idx] - opts.step;
            const double minus = objective(probe);
            const double numeric = (plus - minus) / (2.0 * opts.step);
            const double a = analytic[idx];
            const double abs_err = std::abs(a - numeric);
            const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), opts.floor});
            report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
            if (rel_err > report.max_relative_error) {
                report.max_relative_error = rel_err;
                report.worst = "input " + std::to_string(which) + ", entry " + std::to_string(idx);
            }
            ++report.entries_checked;
        }
    }
    report.passed = report.max_relative_error < opts.tolerance;
    return report;
}

/// Finite-difference check of d loss / d theta for every parameter of a set.
/// `loss` rebuilds the scalar objective from the current parameter values.
template <typename Loss>
GradCheckReport parameter_gradient_check(ParameterSet<double>& params, Loss&& loss, const GradCheckOptions& opts = {}) {
    std::mt19937_64 rng(opts.seed);
    params.zero_grad();
    backward(loss());
    GradCheckReport report;
    for (auto& p : params.entries()) {
        Tensor<double>& theta = p.var.mutable_value();
        const Tensor<double> analytic = p.var.has_grad() ? p.var.grad() : Tensor<double>(theta.shape());
        std::vector<std::size_t> entries(theta.size());
        for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
        if (opts.max_entries && entries.size() > opts.max_entries) {
            std::shuffle(entries.begin(), entries.end(), rng);
            entries.resize(opts.max_entries);
        }
        for (std::size_t idx : entries) {
            const double saved = theta[idx];
            theta[idx] = saved + opts.step;
            const double plus = loss().value()[0];
            theta[idx] = saved - opts.step;
            const double minus = loss().value()[0];
            theta[idx] = saved;
            const double numeric = (plus - minus) / (2.0 * opts.step);
            const double abs_err = std::abs(analytic[idx] - numeric);
            const double rel_err = abs_err / std::max({std::abs(analytic[idx]), std::abs(numeric), opts.floor});
            report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
            if (rel_err > report.max_relative_error) {
                report.max_relative_error = rel_err;
                report.worst = p.name + "[" + std::to_string(idx) + "]";
            }
            ++report.entries_checked;
        }
    }
    params.zero_grad();
    report.passed = report.max_relative_error < opts.tolerance;
    return report;
}

}  // namespace nlaslr
