#include "nightenh/tensor.hpp"

#include <cmath>
#include <sstream>

#include "nightenh/errors.hpp"

namespace nightenh {

int shape_numel(const std::vector<int>& s) {
    long long n = 1;
    for (int e : s) {
        if (e <= 0) throw ShapeError("tensor extent must be positive, got " + shape_str(s));
        n *= e;
    }
    if (n > (1LL << 31) - 1) throw ShapeError("tensor too large: " + shape_str(s));
    return static_cast<int>(n);
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "{";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "}";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.f) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int>(data_.size()) != shape_numel(shape_))
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         nightenh::shape_str(shape_));
}

Tensor Tensor::scalar(float v) {
    Tensor t({1});
    t.data_[0] = v;
    return t;
}

Tensor Tensor::full(std::vector<int> shape, float v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

std::string Tensor::shape_str() const { return nightenh::shape_str(shape_); }

void Tensor::fill(float v) {
    for (float& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (float x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace nightenh
