#include "nightenh/optim.hpp"

#include <cmath>

#include "nightenh/errors.hpp"

namespace nightenh {

Parameter::Parameter(std::string name_, Tensor init)
    : name(std::move(name_)), value(std::move(init)), grad(value.shape()), m(value.shape()), v(value.shape()) {}

void adam_step(const std::vector<Parameter*>& params, float lr, float beta1, float beta2, float eps) {
    if (lr <= 0.f) throw NumericError("adam_step: learning rate must be positive");
    for (Parameter* p : params) {
        p->step += 1;
        const double bc1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(p->step));
        const double bc2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(p->step));
        const int n = p->value.numel();
        for (int i = 0; i < n; ++i) {
            const float g = p->grad[i];
            p->m[i] = beta1 * p->m[i] + (1.f - beta1) * g;
            p->v[i] = beta2 * p->v[i] + (1.f - beta2) * g * g;
            const double mhat = p->m[i] / bc1;
            const double vhat = p->v[i] / bc2;
            p->value[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
        }
        p->zero_grad();
    }
}

} // namespace nightenh
