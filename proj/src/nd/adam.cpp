#include "pvrp/nd/adam.hpp"

#include <cmath>

#include "pvrp/errors.hpp"

namespace pvrp {
namespace nd {

AdamState::AdamState(std::span<Parameter* const> params, double b1, double b2, double e)
    : beta1(b1), beta2(b2), eps(e) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Parameter* p : params) {
        m.emplace_back(p->value.rows(), p->value.cols());
        v.emplace_back(p->value.rows(), p->value.cols());
    }
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr) {
    if (params.size() != state.m.size()) throw DimensionError("adam_step: parameter set changed");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, state.step);
    const double bc2 = 1.0 - std::pow(state.beta2, state.step);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        Tensor& m = state.m[pi];
        Tensor& v = state.v[pi];
        for (std::size_t i = 0; i < p.value.v.size(); ++i) {
            const double g = p.grad.v[i];
            m.v[i] = state.beta1 * m.v[i] + (1.0 - state.beta1) * g;
            v.v[i] = state.beta2 * v.v[i] + (1.0 - state.beta2) * g * g;
            const double mhat = m.v[i] / bc1;
            const double vhat = v.v[i] / bc2;
            p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->zero_grad();
}

double grad_norm(std::span<Parameter* const> params) {
    double sq = 0.0;
    for (const Parameter* p : params)
        for (real g : p->grad.v) sq += static_cast<double>(g) * g;
    return std::sqrt(sq);
}

}  // namespace nd
}  // namespace pvrp
