#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "nightenh/errors.hpp"
#include "nightenh/features.hpp"
#include "nightenh/guided_filter.hpp"
#include "nightenh/weights_io.hpp"

using namespace nightenh;
namespace fs = std::filesystem;

namespace {

Image random_image(int h, int w, int c, uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> d(0.f, 1.f);
    Image img = Image::create(h, w, c);
    for (float& v : img.data) v = d(rng);
    return img;
}

// Literal windowed mean, O(r^2) per pixel.
Image box_filter_naive(const Image& img, int r) {
    Image out = Image::create(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0;
                int cnt = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) continue;
                        acc += img.at(yy, xx, c);
                        ++cnt;
                    }
                out.at(y, x, c) = static_cast<float>(acc / cnt);
            }
    return out;
}

// Literal per-window guided filter built only from the naive box mean.
Image guided_filter_naive(const Image& p, const Image& guide, int k, float eps) {
    const int r = std::max(1, k / 2);
    Image out = Image::create(p.height, p.width, p.channels);
    for (int c = 0; c < p.channels; ++c) {
        const int gch = guide.channels == 1 ? 0 : c;
        Image pc = Image::create(p.height, p.width, 1);
        Image gc = Image::create(p.height, p.width, 1);
        Image gg = Image::create(p.height, p.width, 1);
        Image gp = Image::create(p.height, p.width, 1);
        for (int i = 0; i < p.pixel_count(); ++i) {
            pc.data[i] = p.data[i * p.channels + c];
            gc.data[i] = guide.data[i * guide.channels + gch];
            gg.data[i] = gc.data[i] * gc.data[i];
            gp.data[i] = gc.data[i] * pc.data[i];
        }
        Image mp = box_filter_naive(pc, r), mg = box_filter_naive(gc, r);
        Image mgg = box_filter_naive(gg, r), mgp = box_filter_naive(gp, r);
        Image a = Image::create(p.height, p.width, 1), b = Image::create(p.height, p.width, 1);
        for (int i = 0; i < p.pixel_count(); ++i) {
            const float var = mgg.data[i] - mg.data[i] * mg.data[i];
            const float cov = mgp.data[i] - mg.data[i] * mp.data[i];
            a.data[i] = cov / (var + eps);
            b.data[i] = mp.data[i] - a.data[i] * mg.data[i];
        }
        Image ma = box_filter_naive(a, r), mb = box_filter_naive(b, r);
        for (int i = 0; i < p.pixel_count(); ++i)
            out.data[i * p.channels + c] = std::clamp(ma.data[i] * gc.data[i] + mb.data[i], 0.f, 1.f);
    }
    return out;
}

} // namespace

TEST_CASE("box filter reproduces constants") {
    Image img = Image::create(7, 9, 3, 0.63f);
    Image out = box_filter(img, 2);
    for (float v : out.data) CHECK(v == doctest::Approx(0.63f).epsilon(1e-6));
}

TEST_CASE("box filter with radius >= extents is the global mean") {
    Image img = random_image(5, 6, 1, 1);
    double mean = 0;
    for (float v : img.data) mean += v / img.sample_count();
    Image out = box_filter(img, 8);
    for (float v : out.data) CHECK(v == doctest::Approx(mean).epsilon(1e-5));
}

TEST_CASE("box filter matches the naive windowed mean") {
    Image img = random_image(5, 5, 1, 2);
    Image fast = box_filter(img, 1);
    Image slow = box_filter_naive(img, 1);
    for (int i = 0; i < img.sample_count(); ++i) CHECK(std::fabs(fast.data[i] - slow.data[i]) <= 1e-6f);
}

TEST_CASE("box filter rejects radius < 1") {
    CHECK_THROWS_AS(box_filter(Image::create(4, 4, 1), 0), ShapeError);
}

TEST_CASE("guided filter: constant p comes back unchanged") {
    Image p = Image::create(8, 8, 1, 0.37f);
    Image guide = random_image(8, 8, 1, 3);
    Image out = guided_filter(p, guide, 4, 0.04f);
    for (float v : out.data) CHECK(v == doctest::Approx(0.37f).epsilon(1e-4));
}

TEST_CASE("guided filter: self-guidance with eps 0 is the identity") {
    Image p = random_image(8, 8, 1, 4); // random noise keeps every window nonconstant
    Image out = guided_filter(p, p, 4, 0.f);
    for (int i = 0; i < p.sample_count(); ++i) CHECK(out.data[i] == doctest::Approx(p.data[i]).epsilon(1e-4));
}

TEST_CASE("guided filter matches the brute-force sliding-window oracle") {
    for (uint32_t seed = 0; seed < 4; ++seed) {
        Image p = random_image(6, 6, 1, 100 + seed);
        Image g = random_image(6, 6, 1, 200 + seed);
        Image fast = guided_filter(p, g, 4, 0.04f);
        Image slow = guided_filter_naive(p, g, 4, 0.04f);
        for (int i = 0; i < p.sample_count(); ++i) CHECK(std::fabs(fast.data[i] - slow.data[i]) <= 1e-5f);
    }
}

TEST_CASE("guided filter rejects negative eps") {
    Image p = random_image(6, 6, 1, 5);
    CHECK_THROWS_AS(guided_filter(p, p, 4, -0.01f), NumericError);
}

TEST_CASE("guided filter with huge eps degenerates to pure box smoothing") {
    // With a -> 0 the recurrence returns box(b) = box(box(p)): the box-mean
    // of the per-window box means.
    Image p = random_image(16, 16, 1, 6);
    Image gf = guided_filter(p, p, 4, 1e6f);
    Image box2 = box_filter(box_filter(p, 2), 2);
    float worst = 0.f;
    for (int i = 0; i < p.sample_count(); ++i) worst = std::max(worst, std::fabs(gf.data[i] - box2.data[i]));
    CHECK(worst <= 1e-3f);
}

TEST_CASE("hf bank has |k| x |eps| maps in k-major order and reconstructs the input") {
    Image img = random_image(12, 10, 3, 7);
    HFConfig cfg;
    std::vector<Field> maps = hf_features(img, cfg);
    REQUIRE(maps.size() == 6);
    int idx = 0;
    for (int k : cfg.kernel_sizes)
        for (float eps : cfg.epsilons) {
            Image smoothed = guided_filter(img, img, k, eps);
            for (int i = 0; i < img.sample_count(); ++i)
                CHECK(smoothed.data[i] + maps[idx].data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
            ++idx;
        }
}

TEST_CASE("hf maps of a constant image are zero") {
    Image img = Image::create(10, 10, 3, 0.5f);
    for (const Field& m : hf_features(img, HFConfig{}))
        for (float v : m.data) CHECK(v == doctest::Approx(0.f));
}

TEST_CASE("hf maps are near zero-mean on a periodic pattern") {
    Image img = Image::create(64, 64, 1);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) img.at(y, x, 0) = 0.5f + 0.4f * std::sin(2.f * 3.14159265f * x / 8.f);
    for (const Field& m : hf_features(img, HFConfig{})) {
        double mean = 0;
        for (float v : m.data) mean += v / m.sample_count();
        CHECK(std::fabs(mean) <= 0.02);
    }
}

TEST_CASE("empty bank is rejected") {
    HFConfig cfg;
    cfg.kernel_sizes.clear();
    CHECK_THROWS_AS(hf_features(Image::create(8, 8, 1), cfg), ShapeError);
}

TEST_CASE("gray_feat_loss is zero on identical inputs") {
    Image img = random_image(24, 24, 3, 8);
    DefaultExtractor ext;
    CHECK(gray_feat_loss(img, img, ext, HFConfig{}) == 0.0);
}

TEST_CASE("gray_feat_loss: constant shift has a zero HF term") {
    // Values chosen so neither input clips under the shift.
    Image a = random_image(16, 16, 3, 9);
    for (float& v : a.data) v = 0.2f + 0.3f * v;
    Image b = a;
    for (float& v : b.data) v += 0.2f;
    HFConfig cfg;
    const auto ha = hf_features(a, cfg), hb = hf_features(b, cfg);
    double hf_term = 0;
    long total = 0;
    for (size_t m = 0; m < ha.size(); ++m) {
        for (int i = 0; i < ha[m].sample_count(); ++i) hf_term += std::fabs(ha[m].data[i] - hb[m].data[i]);
        total += ha[m].sample_count();
    }
    CHECK(hf_term / total <= 1e-6);
    DefaultExtractor ext;
    CHECK(gray_feat_loss(a, b, ext, cfg) >= 0.0);
}

TEST_CASE("gray_feat_loss matches an independent re-evaluation of both feature paths") {
    Image a = random_image(16, 16, 3, 10);
    Image b = random_image(16, 16, 3, 11);
    HFConfig cfg;
    DefaultExtractor ext;
    const double fast = gray_feat_loss(a, b, ext, cfg);

    // Naive path: plain-image HF bank plus the extractor's Field output.
    auto mean_abs = [](const std::vector<Field>& fa, const std::vector<Field>& fb) {
        double acc = 0;
        long total = 0;
        for (size_t m = 0; m < fa.size(); ++m) {
            for (int i = 0; i < fa[m].sample_count(); ++i) acc += std::fabs(fa[m].data[i] - fb[m].data[i]);
            total += fa[m].sample_count();
        }
        return acc / total;
    };
    const double slow = mean_abs(hf_features(a, cfg), hf_features(b, cfg)) + mean_abs(ext.extract(a), ext.extract(b));
    CHECK(std::fabs(fast - slow) <= 1e-5);
}

TEST_CASE("gray_feat_loss rejects extent mismatches") {
    DefaultExtractor ext;
    CHECK_THROWS_AS(gray_feat_loss(random_image(16, 16, 3, 1), random_image(16, 8, 3, 2), ext, HFConfig{}),
                    ShapeError);
}

TEST_CASE("conv-stack extractor round-trips through an archive and matches a hand evaluation") {
    const fs::path dir = fs::temp_directory_path() / "nightenh_ext_test";
    fs::create_directories(dir);

    // One 3x3 conv (2 output channels), relu, maxpool.
    WeightArchive a;
    ArchiveEntry conv;
    conv.name = "c1";
    conv.kind = "conv";
    conv.shape = {2, 3, 3, 3};
    std::mt19937 rng(12);
    std::uniform_real_distribution<float> d(-0.3f, 0.3f);
    for (int i = 0; i < 2 * 3 * 3 * 3 + 2; ++i) conv.data.push_back(d(rng));
    a.entries.push_back(conv);
    a.entries.push_back({"r1", "relu", {}, {}});
    a.entries.push_back({"p1", "maxpool", {}, {}});
    save_archive(a, dir.string());

    ConvStackExtractor ext = ConvStackExtractor::load(dir.string());
    Image img = random_image(8, 8, 3, 13);
    std::vector<Field> maps = ext.extract(img);
    REQUIRE(maps.size() == 1);
    CHECK(maps[0].height == 4);
    CHECK(maps[0].width == 4);
    CHECK(maps[0].channels == 2);

    // Hand evaluation at one output location: channel 0 at pool cell (0,0).
    auto conv_at = [&](int oc, int y, int x) {
        double acc = conv.data[2 * 27 + oc]; // bias after the kernel block
        for (int ic = 0; ic < 3; ++ic)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const int yy = y + ky - 1, xx = x + kx - 1;
                    if (yy < 0 || yy >= 8 || xx < 0 || xx >= 8) continue;
                    acc += conv.data[((oc * 3 + ic) * 3 + ky) * 3 + kx] * img.at(yy, xx, ic);
                }
        return std::max(acc, 0.0);
    };
    const double expect = std::max({conv_at(0, 0, 0), conv_at(0, 0, 1), conv_at(0, 1, 0), conv_at(0, 1, 1)});
    CHECK(maps[0].at(0, 0, 0) == doctest::Approx(expect).epsilon(1e-4));

    // Determinism for fixed weights.
    std::vector<Field> again = ext.extract(img);
    for (int i = 0; i < maps[0].sample_count(); ++i) CHECK(maps[0].data[i] == again[0].data[i]);

    std::error_code ec;
    fs::remove_all(dir, ec);
}

TEST_CASE("archive loader validates sizes and names") {
    const fs::path dir = fs::temp_directory_path() / "nightenh_badarch";
    fs::create_directories(dir);
    {
        std::ofstream mf(dir / "manifest.txt");
        mf << "w1 tensor 2 2\n";
    }
    {
        std::ofstream bf(dir / "w1.bin", std::ios::binary);
        float two[2] = {1.f, 2.f}; // wrong size: manifest says 4 floats
        bf.write(reinterpret_cast<char*>(two), 8);
    }
    CHECK_THROWS_AS(load_archive(dir.string()), IoError);
    std::error_code ec;
    fs::remove_all(dir, ec);
    CHECK_THROWS_AS(load_archive("/nonexistent/archive"), IoError);
}
