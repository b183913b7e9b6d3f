#pragma once

#include <vector>

#include "nightenh/tensor.hpp"

namespace nightenh {

// Dense raster with samples in [0,1], row-major and channel-interleaved.
// Channels are 1 (gray) or 3 (RGB).
struct Image {
    int height = 0, width = 0, channels = 0;
    std::vector<float> data;

    static Image create(int h, int w, int c, float fill = 0.f);

    float& at(int y, int x, int c) { return data[(y * width + x) * channels + c]; }
    float at(int y, int x, int c) const { return data[(y * width + x) * channels + c]; }
    bool same_extent(const Image& o) const { return height == o.height && width == o.width && channels == o.channels; }
    int pixel_count() const { return height * width; }
    int sample_count() const { return height * width * channels; }
    bool valid() const;
};

// Same layout as Image but with unconstrained real values; holds gradient
// fields, Laplacian responses and other signed maps.
struct Field {
    int height = 0, width = 0, channels = 0;
    std::vector<float> data;

    static Field create(int h, int w, int c, float fill = 0.f);
    static Field of(const Image& img); // copy values, drop the [0,1] contract

    float& at(int y, int x, int c) { return data[(y * width + x) * channels + c]; }
    float at(int y, int x, int c) const { return data[(y * width + x) * channels + c]; }
    bool same_extent(const Field& o) const { return height == o.height && width == o.width && channels == o.channels; }
    int sample_count() const { return height * width * channels; }
};

struct GradientField {
    Field gx, gy;
};

// Per-pixel max over the three color channels (the shading initializer).
Image max_channel(const Image& img);

// Well-exposedness-weighted fusion of the color channels:
//   I_gray(x) = sum_c (1/3) w_c(x) I_c(x),  w_c(x) = exp(-(I_c(x)-0.5)^2 / (2 sigma^2)).
Image adaptive_fusion_gray(const Image& img, float sigma = 0.2f);

// Forward differences, zero at the last column (gx) / last row (gy).
GradientField spatial_gradient(const Image& img);
GradientField spatial_gradient(const Field& img);

// 5-point stencil (-4 center, +1 neighbours), replicate border.
Field laplacian(const Image& img);
Field laplacian(const Field& img);

// Standard bilinear resampling with half-pixel center alignment.
Image resize_bilinear(const Image& img, int new_h, int new_w);

Image replicate_channels(const Image& gray, int channels);

// Conversions between interleaved Images and planar {C,H,W} tensors.
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t, bool clamp_01 = true);
Field tensor_to_field(const Tensor& t);

} // namespace nightenh
