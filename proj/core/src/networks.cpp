#include "nightenh/networks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nightenh/errors.hpp"

namespace nightenh {

namespace {

Tensor he_normal(std::vector<int> shape, uint32_t seed) {
    Tensor t(std::move(shape));
    const auto& s = t.shape();
    const int fan_in = s.size() == 4 ? s[1] * s[2] * s[3] : t.numel();
    std::mt19937 rng(seed);
    std::normal_distribution<float> dist(0.f, std::sqrt(2.f / static_cast<float>(fan_in)));
    for (int i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

constexpr float kLeakySlope = 0.2f;

} // namespace

ConvLayer::ConvLayer(const std::string& name, int out_c, int in_c, int k, uint32_t seed)
    : w(name + ".w", he_normal({out_c, in_c, k, k}, seed)), b(name + ".b", Tensor({out_c})) {}

void ConvLayer::collect(std::vector<Parameter*>& out) {
    out.push_back(&w);
    out.push_back(&b);
}

GeneratorWeights GeneratorWeights::init(uint32_t seed) {
    GeneratorWeights g;
    g.enc1 = ConvLayer("gen.enc1", 16, 6, 3, seed + 1);
    g.enc2 = ConvLayer("gen.enc2", 32, 16, 3, seed + 2);
    g.enc3 = ConvLayer("gen.enc3", 64, 32, 3, seed + 3);
    g.res1a = ConvLayer("gen.res1a", 64, 64, 3, seed + 4);
    g.res1b = ConvLayer("gen.res1b", 64, 64, 3, seed + 5);
    g.res2a = ConvLayer("gen.res2a", 64, 64, 3, seed + 6);
    g.res2b = ConvLayer("gen.res2b", 64, 64, 3, seed + 7);
    g.dec1 = ConvLayer("gen.dec1", 32, 64, 3, seed + 8);
    g.dec2 = ConvLayer("gen.dec2", 16, 32, 3, seed + 9);
    g.dec3 = ConvLayer("gen.dec3", 16, 16, 3, seed + 10);
    g.head = ConvLayer("gen.head", 3, 16, 3, seed + 11);
    return g;
}

std::vector<Parameter*> GeneratorWeights::params() {
    std::vector<Parameter*> out;
    for (ConvLayer* l : {&enc1, &enc2, &enc3, &res1a, &res1b, &res2a, &res2b, &dec1, &dec2, &dec3, &head})
        l->collect(out);
    return out;
}

ClassifierWeights ClassifierWeights::init(uint32_t seed, int channels) {
    ClassifierWeights c;
    c.w = Parameter("cls.w", he_normal({channels}, seed + 101));
    c.b = Parameter("cls.b", Tensor({1}));
    return c;
}

std::vector<Parameter*> ClassifierWeights::params() { return {&w, &b}; }

DiscriminatorWeights DiscriminatorWeights::init(uint32_t seed) {
    DiscriminatorWeights d;
    d.c1 = ConvLayer("dis.c1", 16, 3, 3, seed + 201);
    d.c2 = ConvLayer("dis.c2", 32, 16, 3, seed + 202);
    d.c3 = ConvLayer("dis.c3", 64, 32, 3, seed + 203);
    d.c4 = ConvLayer("dis.c4", 128, 64, 3, seed + 204);
    d.head = ConvLayer("dis.head", 1, 128, 3, seed + 205);
    return d;
}

std::vector<Parameter*> DiscriminatorWeights::params() {
    std::vector<Parameter*> out;
    for (ConvLayer* l : {&c1, &c2, &c3, &c4, &head}) l->collect(out);
    return out;
}

GeneratorOut generator_forward_t(Tape& t, GeneratorWeights& gw, ParamBinder bind, Var image, Var guidance,
                                 bool modulated) {
    const Tensor& ti = t.value(image);
    const Tensor& tg = t.value(guidance);
    if (ti.shape() != tg.shape())
        throw ShapeError("generator: image and guidance extents differ, " + ti.shape_str() + " vs " + tg.shape_str());
    const int h = ti.h(), w = ti.w();
    const int ph = (8 - h % 8) % 8, pw = (8 - w % 8) % 8;
    Var x = image, g = guidance;
    if (ph || pw) {
        x = t.pad_reflect(x, 0, ph, 0, pw);
        g = t.pad_reflect(g, 0, ph, 0, pw);
    }

    Var gm0 = t.mean_ch(g);
    Var gm1 = t.down2(gm0);
    Var gm2 = t.down2(gm1);
    Var gm3 = t.down2(gm2);
    auto modulate = [&](Var f, Var gm) {
        if (!modulated) return f;
        return t.mul(f, t.broadcast_ch(t.add_c(gm, 1.f), t.value(f).ch()));
    };
    auto conv = [&](Var in, ConvLayer& l, int stride) { return t.conv2d(in, bind(l.w), bind(l.b), stride); };

    Var in = t.concat_ch(x, g);
    Var e1 = modulate(t.leaky_relu(conv(in, gw.enc1, 2), kLeakySlope), gm1);
    Var e2 = modulate(t.leaky_relu(conv(e1, gw.enc2, 2), kLeakySlope), gm2);
    Var e3 = modulate(t.leaky_relu(conv(e2, gw.enc3, 2), kLeakySlope), gm3);

    Var r = e3 + conv(t.leaky_relu(conv(e3, gw.res1a, 1), kLeakySlope), gw.res1b, 1);
    r = r + conv(t.leaky_relu(conv(r, gw.res2a, 1), kLeakySlope), gw.res2b, 1);
    Var bottleneck = r;

    Var d1 = modulate(t.leaky_relu(conv(t.up2(r), gw.dec1, 1), kLeakySlope), gm2);
    Var d2 = modulate(t.leaky_relu(conv(t.up2(d1), gw.dec2, 1), kLeakySlope), gm1);
    Var d3 = modulate(t.leaky_relu(conv(t.up2(d2), gw.dec3, 1), kLeakySlope), gm0);
    // Head logits are clamped so the sigmoid output stays strictly inside
    // (0,1) even in single precision.
    Var out = t.sigmoid(t.clamp(conv(d3, gw.head, 1), -13.8f, 13.8f));
    if (ph || pw) out = t.crop(out, 0, 0, h, w);
    return {out, bottleneck};
}

Image generator_forward(GeneratorWeights& gw, const Image& image, const Image& guidance, bool modulated) {
    Tape t;
    ParamBinder bind{t, false};
    Var img = t.constant(image_to_tensor(image));
    Var gd = t.constant(image_to_tensor(guidance));
    GeneratorOut out = generator_forward_t(t, gw, bind, img, gd, modulated);
    return tensor_to_image(t.value(out.output), false);
}

Var classifier_forward_t(Tape& t, ClassifierWeights& cw, ParamBinder bind, Var bottleneck) {
    const int c = t.value(bottleneck).ch();
    if (c != cw.w.value.numel())
        throw ShapeError("classifier expects " + std::to_string(cw.w.value.numel()) + " channels, got " +
                         std::to_string(c));
    Var pooled = t.gap(bottleneck);
    Var logit = t.sum(t.mul(pooled, bind(cw.w))) + bind(cw.b);
    return t.sigmoid(logit);
}

Var discriminator_forward_t(Tape& t, DiscriminatorWeights& dw, ParamBinder bind, Var image) {
    auto conv = [&](Var in, ConvLayer& l, int stride) { return t.conv2d(in, bind(l.w), bind(l.b), stride); };
    Var x = t.leaky_relu(conv(image, dw.c1, 2), kLeakySlope);
    x = t.leaky_relu(conv(x, dw.c2, 2), kLeakySlope);
    x = t.leaky_relu(conv(x, dw.c3, 2), kLeakySlope);
    x = t.leaky_relu(conv(x, dw.c4, 2), kLeakySlope);
    return conv(x, dw.head, 1);
}

Image attention_map(const Tensor& bottleneck, const ClassifierWeights& cw) {
    if (bottleneck.shape().size() != 3 || bottleneck.ch() != cw.w.value.numel())
        throw ShapeError("attention_map: bottleneck shape mismatch");
    const int c = bottleneck.ch(), h = bottleneck.h(), w = bottleneck.w();
    std::vector<float> mean(static_cast<size_t>(h) * w, 0.f);
    for (int k = 0; k < c; ++k) {
        const float wk = cw.w.value[k];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) mean[y * w + x] += wk * bottleneck.at(k, y, x) / c;
    }
    float lo = mean[0], hi = mean[0];
    for (float v : mean) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Image out = Image::create(h, w, 1);
    const float range = hi - lo;
    for (int i = 0; i < h * w; ++i) out.data[i] = range > 0.f ? (mean[i] - lo) / range : 0.f;
    return out;
}

} // namespace nightenh
