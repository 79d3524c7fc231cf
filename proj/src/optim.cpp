#include "probemb/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "probemb/error.hpp"

namespace probemb {

AdamState AdamState::create(std::size_t num_params, double lr) {
    if (!(lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
    AdamState s;
    s.m.assign(num_params, 0.0);
    s.v.assign(num_params, 0.0);
    s.lr = lr;
    return s;
}

namespace {

void check_update(const AdamState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw Error(ErrorCode::LengthMismatch,
                    "params " + std::to_string(params.size()) + ", grads " + std::to_string(grads.size()) +
                        ", state " + std::to_string(state.m.size()));
    }
    if (!std::all_of(grads.begin(), grads.end(), [](double g) { return std::isfinite(g); })) {
        throw Error(ErrorCode::NonFiniteGradient, "gradient contains NaN or Inf");
    }
}

void update_coordinate(AdamState& state, std::span<double> params, std::span<const double> grads,
                       std::size_t i, double correction1, double correction2) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
}

}  // namespace

void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads) {
    check_update(state, params, grads);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) update_coordinate(state, params, grads, i, correction1, correction2);
}

void adam_update_lazy(AdamState& state, std::span<double> params, std::span<const double> grads,
                      std::span<const std::size_t> active) {
    check_update(state, params, grads);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i : active) {
        if (i >= params.size()) throw Error(ErrorCode::LengthMismatch, "active index out of range");
        update_coordinate(state, params, grads, i, correction1, correction2);
    }
}

std::pair<AdamState, std::vector<double>> adam_step(AdamState state, std::vector<double> params,
                                                    std::span<const double> grads) {
    adam_update(state, params, grads);
    return {std::move(state), std::move(params)};
}

double finite_diff_check(const LossFn& loss_fn, std::span<const double> params,
                         std::span<const double> analytic_grads, double h) {
    if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "step h must be positive");
    if (params.size() != analytic_grads.size()) throw Error(ErrorCode::LengthMismatch, "params vs grads");
    std::vector<double> probe(params.begin(), params.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double up = loss_fn(probe);
        probe[i] = saved - h;
        const double down = loss_fn(probe);
        probe[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        if (!std::isfinite(fd) || !std::isfinite(analytic_grads[i])) {
            throw Error(ErrorCode::NonFiniteValue, "non-finite gradient at coordinate " + std::to_string(i));
        }
        worst = std::max(worst, std::abs(fd - analytic_grads[i]) / std::max(1.0, std::abs(analytic_grads[i])));
    }
    return worst;
}

}  // namespace probemb
