#pragma once

#include <string>
#include <vector>

namespace nightenh {

// Dense row-major float tensor. Copies are deep; published tensors are
// treated as immutable, operations allocate fresh outputs and never write
// through their inputs.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<float> data);

    static Tensor scalar(float v);
    static Tensor full(std::vector<int> shape, float v);

    const std::vector<int>& shape() const { return shape_; }
    int numel() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }
    bool is_scalar() const { return data_.size() == 1; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](int i) { return data_[i]; }
    float operator[](int i) const { return data_[i]; }

    // Rank-3 {C,H,W} accessors used by the spatial operations.
    int ch() const { return shape_.size() == 3 ? shape_[0] : 0; }
    int h() const { return shape_.size() == 3 ? shape_[1] : 0; }
    int w() const { return shape_.size() == 3 ? shape_[2] : 0; }
    float& at(int c, int y, int x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
    float at(int c, int y, int x) const { return data_[(c * shape_[1] + y) * shape_[2] + x]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

    void fill(float v);
    bool all_finite() const;

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

std::string shape_str(const std::vector<int>& s);
int shape_numel(const std::vector<int>& s);

} // namespace nightenh
