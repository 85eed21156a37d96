#pragma once

#include <span>
#include <vector>

#include "pvrp/nd/tensor.hpp"

namespace pvrp {
namespace nd {

// Bias-corrected Adam. Moment buffers are kept per parameter in the order
// the optimizer was constructed with.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Tensor> m;  // first moments
    std::vector<Tensor> v;  // second moments

    explicit AdamState(std::span<Parameter* const> params, double b1 = 0.9, double b2 = 0.999,
                       double e = 1e-8);
};

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr);

void zero_grads(std::span<Parameter* const> params);

// L2 norm over every parameter gradient.
double grad_norm(std::span<Parameter* const> params);

}  // namespace nd
}  // namespace pvrp
