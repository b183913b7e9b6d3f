#include "nightenh/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nightenh/errors.hpp"

namespace nightenh {

Composite synth_composite(const Image& clean, const GlowSpec& spec) {
    if (clean.channels != 3) throw ShapeError("synth_composite: clean image must have 3 channels");
    if (!(spec.sigma > 0.f)) throw NumericError("synth_composite: sigma must be positive");
    for (float a : spec.amplitude)
        if (a < 0.f || a > 1.f) throw NumericError("synth_composite: amplitudes must lie in [0,1]");
    if (spec.count < 1) throw ShapeError("synth_composite: count must be >= 1");

    struct Blob {
        float cx, cy, sigma;
        std::array<float, 3> amp;
    };
    std::vector<Blob> blobs;
    if (spec.count == 1) {
        blobs.push_back({spec.cx, spec.cy, spec.sigma, spec.amplitude});
    } else {
        std::mt19937 rng(spec.seed);
        // Keep sampled centers off the borders so the glow core stays in
        // frame.
        std::uniform_real_distribution<float> ux(0.1f * clean.width, 0.9f * (clean.width - 1));
        std::uniform_real_distribution<float> uy(0.1f * clean.height, 0.9f * (clean.height - 1));
        std::uniform_real_distribution<float> uamp(0.6f, 1.f);
        std::uniform_real_distribution<float> usig(0.7f, 1.3f);
        for (int i = 0; i < spec.count; ++i) {
            Blob b;
            b.cx = ux(rng);
            b.cy = uy(rng);
            b.sigma = spec.sigma * usig(rng);
            const float s = uamp(rng);
            for (int c = 0; c < 3; ++c) b.amp[c] = spec.amplitude[c] * s;
            blobs.push_back(b);
        }
    }
    for (const auto& b : blobs)
        if (b.cx < 0.f || b.cx > clean.width - 1.f || b.cy < 0.f || b.cy > clean.height - 1.f)
            throw ShapeError("synth_composite: blob center outside the image");

    Composite out;
    out.glow = Image::create(clean.height, clean.width, 3);
    out.input = Image::create(clean.height, clean.width, 3);
    for (int y = 0; y < clean.height; ++y)
        for (int x = 0; x < clean.width; ++x) {
            float acc[3] = {0.f, 0.f, 0.f};
            for (const auto& b : blobs) {
                const float dx = x - b.cx, dy = y - b.cy;
                const float g = std::exp(-(dx * dx + dy * dy) / (2.f * b.sigma * b.sigma));
                for (int c = 0; c < 3; ++c) acc[c] += b.amp[c] * g;
            }
            for (int c = 0; c < 3; ++c) {
                const float g = std::min(acc[c], 1.f);
                out.glow.at(y, x, c) = g;
                out.input.at(y, x, c) = std::min(clean.at(y, x, c) + g, 1.f);
            }
        }
    return out;
}

Image make_test_scene(int h, int w, uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u01(0.f, 1.f);

    // Piecewise-near-constant background: shapes and small details over a
    // nearly flat base. A globally smooth ramp would be indistinguishable
    // from glow under the relative-smoothness prior, so the base tilt is
    // kept very mild. Chroma stays muted so the gray-world prior holds
    // approximately, as it does for night backgrounds.
    Image img = Image::create(h, w, 3);
    const float angle = u01(rng) * 6.2831853f;
    const float gx = std::cos(angle), gy = std::sin(angle);
    const float base0 = 0.06f + 0.08f * u01(rng);
    const float span0 = 0.04f * u01(rng);
    float base[3], span[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = base0 + 0.03f * (u01(rng) - 0.5f);
        span[c] = span0;
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float t = 0.5f + gx * (x / static_cast<float>(w) - 0.5f) + gy * (y / static_cast<float>(h) - 0.5f);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = base[c] + span[c] * t;
        }

    auto paint = [&](float cx, float cy, float rx, float ry, float soft, bool ellipse, const float albedo[3]) {
        const int y0 = std::max(0, static_cast<int>(cy - ry - 8 * soft)), y1 = std::min(h - 1, static_cast<int>(cy + ry + 8 * soft));
        const int x0 = std::max(0, static_cast<int>(cx - rx - 8 * soft)), x1 = std::min(w - 1, static_cast<int>(cx + rx + 8 * soft));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                float d;
                if (ellipse) {
                    const float nx = (x - cx) / rx, ny = (y - cy) / ry;
                    d = (std::sqrt(nx * nx + ny * ny) - 1.f) * std::min(rx, ry);
                } else {
                    const float dx = std::fabs(x - cx) - rx, dy = std::fabs(y - cy) - ry;
                    d = std::max(dx, dy);
                }
                const float m = 1.f / (1.f + std::exp(d / soft));
                if (m <= 1e-4f) continue;
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = (1.f - m) * img.at(y, x, c) + m * albedo[c];
            }
    };

    // A few large structures and small details; much of the frame stays
    // flat and dark, the regime where glow and background edges rarely
    // coincide.
    const int shapes = 3 + static_cast<int>(rng() % 3);
    for (int s = 0; s < shapes; ++s) {
        const bool ellipse = rng() % 2 == 0;
        const float cx = u01(rng) * w, cy = u01(rng) * h;
        const float rx = (0.06f + 0.14f * u01(rng)) * w, ry = (0.06f + 0.14f * u01(rng)) * h;
        const float soft = 0.6f + 0.8f * u01(rng);
        const float albedo0 = 0.10f + 0.32f * u01(rng);
        float albedo[3];
        for (int c = 0; c < 3; ++c) albedo[c] = std::clamp(albedo0 + 0.05f * (u01(rng) - 0.5f), 0.02f, 0.55f);
        paint(cx, cy, rx, ry, soft, ellipse, albedo);
    }
    const int details = 5 + static_cast<int>(rng() % 4);
    for (int s = 0; s < details; ++s) {
        const float cx = u01(rng) * w, cy = u01(rng) * h;
        const float rx = 1.5f + 4.f * u01(rng), ry = 1.5f + 4.f * u01(rng);
        const float albedo0 = 0.10f + 0.38f * u01(rng);
        float albedo[3];
        for (int c = 0; c < 3; ++c) albedo[c] = std::clamp(albedo0 + 0.04f * (u01(rng) - 0.5f), 0.02f, 0.55f);
        paint(cx, cy, rx, ry, 0.6f + 0.5f * u01(rng), rng() % 2 == 0, albedo);
    }
    for (float& v : img.data) v = std::clamp(v, 0.f, 0.6f);
    return img;
}

double pearson(const Image& a, const Image& b) {
    if (!a.same_extent(b)) throw ShapeError("pearson: extents differ");
    const int n = a.sample_count();
    double ma = 0, mb = 0;
    for (int i = 0; i < n; ++i) {
        ma += a.data[i];
        mb += b.data[i];
    }
    ma /= n;
    mb /= n;
    double saa = 0, sbb = 0, sab = 0;
    for (int i = 0; i < n; ++i) {
        const double da = a.data[i] - ma, db = b.data[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    const double den = std::sqrt(saa * sbb);
    return den > 0 ? sab / den : 0.0;
}

} // namespace nightenh
