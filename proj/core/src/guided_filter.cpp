#include "nightenh/guided_filter.hpp"

#include <algorithm>
#include <cmath>

#include "nightenh/errors.hpp"

namespace nightenh {

namespace {

// Summed-area-table windowed mean, normalized by the in-bounds pixel count.
void box_channel(const float* src, int h, int w, int stride, int off, int r, float* dst) {
    std::vector<double> sat(static_cast<size_t>(h + 1) * (w + 1), 0.0);
    const int sw = w + 1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            sat[(y + 1) * sw + x + 1] = static_cast<double>(src[(y * w + x) * stride + off]) + sat[y * sw + x + 1] +
                                        sat[(y + 1) * sw + x] - sat[y * sw + x];
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
            const double s =
                sat[(y1 + 1) * sw + x1 + 1] - sat[y0 * sw + x1 + 1] - sat[(y1 + 1) * sw + x0] + sat[y0 * sw + x0];
            const int cnt = (y1 - y0 + 1) * (x1 - x0 + 1);
            dst[(y * w + x) * stride + off] = static_cast<float>(s / cnt);
        }
    }
}

template <typename Raster>
Raster box_filter_impl(const Raster& img, int radius) {
    if (radius < 1) throw ShapeError("box_filter: radius must be >= 1");
    Raster out = Raster::create(img.height, img.width, img.channels);
    for (int c = 0; c < img.channels; ++c)
        box_channel(img.data.data(), img.height, img.width, img.channels, c, radius, out.data.data());
    return out;
}

} // namespace

Image box_filter(const Image& img, int radius) { return box_filter_impl(img, radius); }
Field box_filter(const Field& img, int radius) { return box_filter_impl(img, radius); }

Image guided_filter(const Image& p, const Image& guide, int k, float eps) {
    if (p.height != guide.height || p.width != guide.width)
        throw ShapeError("guided_filter: p and guide extents differ");
    if (guide.channels != p.channels && guide.channels != 1)
        throw ShapeError("guided_filter: guide must match p's channels or be single-channel");
    if (eps < 0.f) throw NumericError("guided_filter: eps must be >= 0");
    const int r = std::max(1, k / 2);

    Image out = Image::create(p.height, p.width, p.channels);
    const int n = p.height * p.width;
    std::vector<float> a(n), b(n), pc(n), gc(n), gg(n), gp(n);
    for (int c = 0; c < p.channels; ++c) {
        const int gch = guide.channels == 1 ? 0 : c;
        for (int i = 0; i < n; ++i) {
            pc[i] = p.data[i * p.channels + c];
            gc[i] = guide.data[i * guide.channels + gch];
            gg[i] = gc[i] * gc[i];
            gp[i] = gc[i] * pc[i];
        }
        std::vector<float> mean_p(n), mean_g(n), mean_gg(n), mean_gp(n);
        box_channel(pc.data(), p.height, p.width, 1, 0, r, mean_p.data());
        box_channel(gc.data(), p.height, p.width, 1, 0, r, mean_g.data());
        box_channel(gg.data(), p.height, p.width, 1, 0, r, mean_gg.data());
        box_channel(gp.data(), p.height, p.width, 1, 0, r, mean_gp.data());
        for (int i = 0; i < n; ++i) {
            const float var = mean_gg[i] - mean_g[i] * mean_g[i];
            const float cov = mean_gp[i] - mean_g[i] * mean_p[i];
            a[i] = cov / (var + eps);
            b[i] = mean_p[i] - a[i] * mean_g[i];
        }
        std::vector<float> mean_a(n), mean_b(n);
        box_channel(a.data(), p.height, p.width, 1, 0, r, mean_a.data());
        box_channel(b.data(), p.height, p.width, 1, 0, r, mean_b.data());
        for (int i = 0; i < n; ++i)
            out.data[i * p.channels + c] = std::clamp(mean_a[i] * gc[i] + mean_b[i], 0.f, 1.f);
    }
    return out;
}

std::vector<Field> hf_features(const Image& img, const HFConfig& cfg) {
    if (cfg.kernel_sizes.empty() || cfg.epsilons.empty()) throw ShapeError("hf_features: empty (k, eps) bank");
    std::vector<Field> maps;
    maps.reserve(cfg.bank_size());
    for (int k : cfg.kernel_sizes)
        for (float eps : cfg.epsilons) {
            const Image smoothed = guided_filter(img, img, k, eps);
            Field f = Field::create(img.height, img.width, img.channels);
            for (int i = 0; i < f.sample_count(); ++i) f.data[i] = img.data[i] - smoothed.data[i];
            maps.push_back(std::move(f));
        }
    return maps;
}

Var box_filter_t(Var x, int radius) { return x.tape->box_filter(x, radius); }

Var guided_filter_t(Var p, Var guide, int k, float eps) {
    if (eps < 0.f) throw NumericError("guided_filter: eps must be >= 0");
    Tape& t = *p.tape;
    const int r = std::max(1, k / 2);
    Var mean_p = t.box_filter(p, r);
    Var mean_g = t.box_filter(guide, r);
    Var mean_gg = t.box_filter(t.mul(guide, guide), r);
    Var mean_gp = t.box_filter(t.mul(guide, p), r);
    Var var_g = mean_gg - mean_g * mean_g;
    Var cov_gp = mean_gp - mean_g * mean_p;
    Var a = cov_gp / (var_g + eps);
    Var b = mean_p - a * mean_g;
    Var out = t.box_filter(a, r) * guide + t.box_filter(b, r);
    return t.clamp(out, 0.f, 1.f);
}

std::vector<Var> hf_features_t(Var img, const HFConfig& cfg) {
    if (cfg.kernel_sizes.empty() || cfg.epsilons.empty()) throw ShapeError("hf_features: empty (k, eps) bank");
    std::vector<Var> maps;
    maps.reserve(cfg.bank_size());
    for (int k : cfg.kernel_sizes)
        for (float eps : cfg.epsilons) maps.push_back(img - guided_filter_t(img, img, k, eps));
    return maps;
}

} // namespace nightenh
