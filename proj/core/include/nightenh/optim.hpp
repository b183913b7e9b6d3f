#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nightenh/tensor.hpp"

namespace nightenh {

// An optimizable tensor together with its gradient and Adam moment state.
// The gradient always has the same shape as the value; backward() calls
// accumulate into it and adam_step() consumes and zeroes it.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m, v;
    int64_t step = 0;

    Parameter() = default;
    Parameter(std::string name_, Tensor init);

    void zero_grad() { grad.fill(0.f); }
};

// Bias-corrected adaptive-moment update. Increments each parameter's step
// counter and zeroes its gradient.
void adam_step(const std::vector<Parameter*>& params, float lr, float beta1 = 0.9f, float beta2 = 0.999f,
               float eps = 1e-8f);

} // namespace nightenh
