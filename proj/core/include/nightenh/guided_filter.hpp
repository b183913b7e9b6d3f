#pragma once

#include <vector>

#include "nightenh/image.hpp"
#include "nightenh/tape.hpp"

namespace nightenh {

// The (kernel size, regularizer) bank behind the high-frequency features.
// The full cross product of the two lists defines the bank, enumerated
// k-major, epsilon-minor.
struct HFConfig {
    std::vector<int> kernel_sizes{4, 8, 16};
    std::vector<float> epsilons{0.04f, 0.08f};

    int bank_size() const { return static_cast<int>(kernel_sizes.size() * epsilons.size()); }
};

// Windowed mean with edge-aware normalization (divide by the number of
// in-bounds pixels). radius >= 1.
Image box_filter(const Image& img, int radius);
Field box_filter(const Field& img, int radius);

// Standard guided-filter recurrence with box radius floor(k/2):
//   a = cov(guide,p) / (var(guide) + eps),  b = mean(p) - a mean(guide),
//   out = mean(a) guide + mean(b), clamped to [0,1].
// A single-channel guide is shared across the channels of p.
Image guided_filter(const Image& p, const Image& guide, int k, float eps);

// Residual bank phi_HF: img - guided_filter(img, img, k, eps) per (k, eps).
std::vector<Field> hf_features(const Image& img, const HFConfig& cfg);

// Taped counterparts used inside differentiable losses. Inputs are {C,H,W}
// nodes; the guided filter is self-guided when guide == p.
Var box_filter_t(Var x, int radius);
Var guided_filter_t(Var p, Var guide, int k, float eps);
std::vector<Var> hf_features_t(Var img, const HFConfig& cfg);

} // namespace nightenh
