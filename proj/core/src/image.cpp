#include "nightenh/image.hpp"

#include <algorithm>
#include <cmath>

#include "nightenh/errors.hpp"

namespace nightenh {

namespace {

void require_extent(int h, int w, int c) {
    if (h < 1 || w < 1) throw ShapeError("image extents must be >= 1");
    if (c != 1 && c != 3) throw ShapeError("image channels must be 1 or 3, got " + std::to_string(c));
}

template <typename Raster>
GradientField spatial_gradient_impl(const Raster& img) {
    GradientField f;
    f.gx = Field::create(img.height, img.width, img.channels);
    f.gy = Field::create(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                f.gx.at(y, x, c) = x + 1 < img.width ? img.at(y, x + 1, c) - img.at(y, x, c) : 0.f;
                f.gy.at(y, x, c) = y + 1 < img.height ? img.at(y + 1, x, c) - img.at(y, x, c) : 0.f;
            }
    return f;
}

template <typename Raster>
Field laplacian_impl(const Raster& img) {
    Field out = Field::create(img.height, img.width, img.channels);
    auto clampy = [&](int y) { return std::clamp(y, 0, img.height - 1); };
    auto clampx = [&](int x) { return std::clamp(x, 0, img.width - 1); };
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = img.at(clampy(y - 1), x, c) + img.at(clampy(y + 1), x, c) +
                                  img.at(y, clampx(x - 1), c) + img.at(y, clampx(x + 1), c) - 4.f * img.at(y, x, c);
    return out;
}

} // namespace

Image Image::create(int h, int w, int c, float fill) {
    require_extent(h, w, c);
    Image img;
    img.height = h;
    img.width = w;
    img.channels = c;
    img.data.assign(static_cast<size_t>(h) * w * c, fill);
    return img;
}

bool Image::valid() const {
    if (height < 1 || width < 1 || (channels != 1 && channels != 3)) return false;
    if (data.size() != static_cast<size_t>(height) * width * channels) return false;
    for (float v : data)
        if (!(v >= 0.f && v <= 1.f)) return false;
    return true;
}

Field Field::create(int h, int w, int c, float fill) {
    Field f;
    f.height = h;
    f.width = w;
    f.channels = c;
    f.data.assign(static_cast<size_t>(h) * w * c, fill);
    return f;
}

Field Field::of(const Image& img) {
    Field f;
    f.height = img.height;
    f.width = img.width;
    f.channels = img.channels;
    f.data = img.data;
    return f;
}

Image max_channel(const Image& img) {
    if (img.channels != 3) throw ShapeError("max_channel: input must have 3 channels");
    Image out = Image::create(img.height, img.width, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(y, x, 0) = std::max({img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)});
    return out;
}

Image adaptive_fusion_gray(const Image& img, float sigma) {
    if (img.channels != 3) throw ShapeError("adaptive_fusion_gray: input must have 3 channels");
    if (!(sigma > 0.f)) throw NumericError("adaptive_fusion_gray: sigma must be positive");
    const float inv = 1.f / (2.f * sigma * sigma);
    Image out = Image::create(img.height, img.width, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float acc = 0.f;
            for (int c = 0; c < 3; ++c) {
                const float v = img.at(y, x, c);
                const float d = v - 0.5f;
                acc += (1.f / 3.f) * std::exp(-d * d * inv) * v;
            }
            out.at(y, x, 0) = acc;
        }
    return out;
}

GradientField spatial_gradient(const Image& img) { return spatial_gradient_impl(img); }
GradientField spatial_gradient(const Field& img) { return spatial_gradient_impl(img); }

Field laplacian(const Image& img) { return laplacian_impl(img); }
Field laplacian(const Field& img) { return laplacian_impl(img); }

Image resize_bilinear(const Image& img, int new_h, int new_w) {
    if (new_h < 1 || new_w < 1) throw ShapeError("resize_bilinear: target extents must be >= 1");
    Image out = Image::create(new_h, new_w, img.channels);
    const float sy = static_cast<float>(img.height) / new_h;
    const float sx = static_cast<float>(img.width) / new_w;
    for (int y = 0; y < new_h; ++y) {
        const float fy = std::max(0.f, (y + 0.5f) * sy - 0.5f);
        const int y0 = std::min(static_cast<int>(fy), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const float wy = fy - y0;
        for (int x = 0; x < new_w; ++x) {
            const float fx = std::max(0.f, (x + 0.5f) * sx - 0.5f);
            const int x0 = std::min(static_cast<int>(fx), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const float wx = fx - x0;
            for (int c = 0; c < img.channels; ++c) {
                const float top = (1.f - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
                const float bot = (1.f - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
                out.at(y, x, c) = std::clamp((1.f - wy) * top + wy * bot, 0.f, 1.f);
            }
        }
    }
    return out;
}

Image replicate_channels(const Image& gray, int channels) {
    if (gray.channels != 1) throw ShapeError("replicate_channels: input must be single-channel");
    Image out = Image::create(gray.height, gray.width, channels);
    for (int y = 0; y < gray.height; ++y)
        for (int x = 0; x < gray.width; ++x)
            for (int c = 0; c < channels; ++c) out.at(y, x, c) = gray.at(y, x, 0);
    return out;
}

Tensor image_to_tensor(const Image& img) {
    Tensor t({img.channels, img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) t.at(c, y, x) = img.at(y, x, c);
    return t;
}

Image tensor_to_image(const Tensor& t, bool clamp_01) {
    if (t.shape().size() != 3) throw ShapeError("tensor_to_image: expected {C,H,W}, got " + t.shape_str());
    Image img = Image::create(t.h(), t.w(), t.ch());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                float v = t.at(c, y, x);
                if (clamp_01) v = std::clamp(v, 0.f, 1.f);
                img.at(y, x, c) = v;
            }
    return img;
}

Field tensor_to_field(const Tensor& t) {
    if (t.shape().size() != 3) throw ShapeError("tensor_to_field: expected {C,H,W}, got " + t.shape_str());
    Field f = Field::create(t.h(), t.w(), t.ch());
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
            for (int c = 0; c < f.channels; ++c) f.at(y, x, c) = t.at(c, y, x);
    return f;
}

} // namespace nightenh
