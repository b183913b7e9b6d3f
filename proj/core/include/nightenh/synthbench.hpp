#pragma once

#include <array>
#include <cstdint>

#include "nightenh/image.hpp"

namespace nightenh {

// Synthetic light-effects family: isotropic Gaussian blobs added on top of a
// clean image. With count == 1 the given center/amplitude/sigma are used
// verbatim; with count > 1 the blobs are sampled around them with the seed.
struct GlowSpec {
    float cx = 0.f, cy = 0.f;                     // pixels
    std::array<float, 3> amplitude{0.5f, 0.5f, 0.5f}; // per channel, in [0,1]
    float sigma = 12.f;                           // pixels
    int count = 1;
    uint32_t seed = 0;
};

struct Composite {
    Image input; // I = clamp(clean + G_true)
    Image glow;  // G_true, clamped to [0,1]
};

Composite synth_composite(const Image& clean, const GlowSpec& spec);

// Procedural clean test scene: smooth gradients and soft-edged shapes with a
// mild color cast, values kept away from the top of the range so composites
// rarely clip.
Image make_test_scene(int h, int w, uint32_t seed);

// Pearson correlation over all samples of the two rasters.
double pearson(const Image& a, const Image& b);

} // namespace nightenh
