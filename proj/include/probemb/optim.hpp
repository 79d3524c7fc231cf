#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace probemb {

/// Bias-corrected Adam over a flat parameter vector.
struct AdamState {
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState create(std::size_t num_params, double lr);
};

/// In-place update. Throws LengthMismatch or NonFiniteGradient.
void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads);

/// Lazy (sparse) variant: advances the step counter once and touches only
/// the listed coordinates' moments and values, as row-sparse embedding
/// tables are usually optimized. Indices must be unique.
void adam_update_lazy(AdamState& state, std::span<double> params, std::span<const double> grads,
                      std::span<const std::size_t> active);

/// Value-semantics form: returns the advanced state and the new parameters.
std::pair<AdamState, std::vector<double>> adam_step(AdamState state, std::vector<double> params,
                                                    std::span<const double> grads);

using LossFn = std::function<double(std::span<const double>)>;

/// Max over coordinates of |fd - analytic| / max(1, |analytic|), where fd is
/// the central difference with step h.
double finite_diff_check(const LossFn& loss_fn, std::span<const double> params,
                         std::span<const double> analytic_grads, double h = 1e-5);

}  // namespace probemb
