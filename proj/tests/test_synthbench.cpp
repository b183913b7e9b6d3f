#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "nightenh/errors.hpp"
#include "nightenh/image_io.hpp"
#include "nightenh/metrics.hpp"
#include "nightenh/synthbench.hpp"

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

} // namespace

TEST_CASE("zero amplitude composite is the clean image") {
    Image clean = make_test_scene(32, 32, 1);
    GlowSpec spec;
    spec.cx = 16.f;
    spec.cy = 16.f;
    spec.amplitude = {0.f, 0.f, 0.f};
    Composite c = synth_composite(clean, spec);
    CHECK(c.input.data == clean.data);
    for (float v : c.glow.data) CHECK(v == 0.f);
}

TEST_CASE("single blob peaks at its center") {
    Image clean = Image::create(33, 33, 3, 0.2f);
    GlowSpec spec;
    spec.cx = 16.f;
    spec.cy = 16.f;
    spec.amplitude = {0.5f, 0.4f, 0.3f};
    spec.sigma = 6.f;
    Composite c = synth_composite(clean, spec);
    CHECK(c.input.at(16, 16, 0) == doctest::Approx(0.7f));
    CHECK(c.input.at(16, 16, 1) == doctest::Approx(0.6f));
    CHECK(c.input.at(16, 16, 2) == doctest::Approx(0.5f));
}

TEST_CASE("composites are seed-deterministic and never below the clean image") {
    Image clean = make_test_scene(48, 48, 2);
    GlowSpec spec;
    spec.count = 3;
    spec.seed = 99;
    spec.amplitude = {0.5f, 0.5f, 0.5f};
    spec.sigma = 8.f;
    Composite a = synth_composite(clean, spec);
    Composite b = synth_composite(clean, spec);
    CHECK(a.input.data == b.input.data);
    CHECK(a.glow.data == b.glow.data);
    for (int i = 0; i < clean.sample_count(); ++i) CHECK(a.input.data[i] >= clean.data[i] - 1e-6f);
}

TEST_CASE("blob centers outside the image are rejected") {
    Image clean = Image::create(16, 16, 3, 0.1f);
    GlowSpec spec;
    spec.cx = 40.f;
    spec.cy = 8.f;
    CHECK_THROWS_AS(synth_composite(clean, spec), ShapeError);
}

TEST_CASE("mse basics and oracle") {
    Image a = random_image(8, 8, 3, 1);
    CHECK(mse(a, a) == 0.0);

    Image z = Image::create(4, 4, 1, 0.f);
    Image h = Image::create(4, 4, 1, 0.3f);
    CHECK(mse(z, h) == doctest::Approx(0.09).epsilon(1e-6)); // constant gap c -> c^2

    Image b = random_image(8, 8, 3, 2);
    double acc = 0;
    for (int i = 0; i < a.sample_count(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    CHECK(std::fabs(mse(a, b) - acc / a.sample_count()) <= 1e-9);

    CHECK_THROWS_AS(mse(a, random_image(8, 7, 3, 3)), ShapeError);
}

TEST_CASE("psnr spot value, infinity sentinel and symmetry") {
    Image a = random_image(8, 8, 3, 4);
    CHECK(std::isinf(psnr(a, a)));

    Image z = Image::create(4, 4, 1, 0.f);
    Image h = Image::create(4, 4, 1, 0.5f);
    CHECK(psnr(z, h) == doctest::Approx(6.0206).epsilon(1e-4));

    Image b = random_image(8, 8, 3, 5);
    CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)));
}

TEST_CASE("psnr decreases as mse grows") {
    Image base = Image::create(8, 8, 1, 0.5f);
    double prev = 1e9;
    for (float gap : {0.05f, 0.1f, 0.2f, 0.4f}) {
        Image off = Image::create(8, 8, 1, 0.5f - gap);
        const double p = psnr(base, off);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim identity, noise bound, and shift invariance") {
    Image a = random_image(64, 64, 3, 6);
    CHECK(ssim(a, a) == doctest::Approx(1.0));

    for (uint32_t s = 0; s < 10; ++s) {
        Image x = random_image(64, 64, 1, 100 + s);
        Image y = random_image(64, 64, 1, 200 + s);
        CHECK(ssim(x, y) < 0.2);
    }

    // Adding the same constant to both images: means shift together and the
    // centered moments are unchanged. Exactly invariant when local means
    // match; the random pair below keeps them near-equal.
    Image u = random_image(32, 32, 1, 7);
    for (float& v : u.data) v = 0.2f + 0.3f * v;
    Image w = u;
    std::mt19937 rng(8);
    std::uniform_real_distribution<float> n(-0.03f, 0.03f);
    for (float& v : w.data) v += n(rng);
    Image us = u, ws = w;
    for (float& v : us.data) v += 0.25f;
    for (float& v : ws.data) v += 0.25f;
    CHECK(ssim(us, ws) == doctest::Approx(ssim(u, w)).epsilon(1e-3));

    CHECK_THROWS_AS(ssim(Image::create(8, 8, 1), Image::create(8, 8, 1)), ShapeError);
}

TEST_CASE("eval_dataset on identical folders and aggregates") {
    const fs::path dir = fs::temp_directory_path() / "nightenh_eval_test";
    const fs::path pred = dir / "pred", gt = dir / "gt";
    fs::create_directories(pred);
    fs::create_directories(gt);

    std::vector<Image> imgs;
    for (uint32_t s = 0; s < 3; ++s) {
        imgs.push_back(random_image(24, 24, 3, 300 + s));
        const std::string name = "img" + std::to_string(s) + ".png";
        save_image(imgs.back(), (pred / name).string());
        save_image(imgs.back(), (gt / name).string());
    }
    save_image(imgs[0], (gt / "orphan.png").string());

    EvalReport rep = eval_dataset(pred.string(), gt.string());
    REQUIRE(rep.rows.size() == 3);
    for (const auto& r : rep.rows) {
        CHECK(r.mse == 0.0);
        CHECK(r.ssim == doctest::Approx(1.0));
        CHECK(std::isinf(r.psnr));
    }
    CHECK(rep.mean.mse == 0.0);
    CHECK(rep.mean.ssim == doctest::Approx(1.0));
    REQUIRE(rep.unmatched.size() == 1);
    CHECK(rep.unmatched[0].find("orphan.png") != std::string::npos);

    std::ostringstream os;
    write_report(rep, os);
    const std::string text = os.str();
    CHECK(text.find("name,psnr,ssim,mse") == 0);
    CHECK(text.find("inf") != std::string::npos);
    CHECK(text.find("# unmatched: orphan.png") != std::string::npos);

    std::error_code ec;
    fs::remove_all(dir, ec);
}

TEST_CASE("eval_dataset aggregates equal the hand-computed means") {
    const fs::path dir = fs::temp_directory_path() / "nightenh_eval_test2";
    const fs::path pred = dir / "pred", gt = dir / "gt";
    fs::create_directories(pred);
    fs::create_directories(gt);
    std::vector<double> psnrs, ssims, mses;
    for (uint32_t s = 0; s < 3; ++s) {
        Image p = random_image(24, 24, 3, 400 + s);
        Image g = random_image(24, 24, 3, 500 + s);
        const std::string name = "pair" + std::to_string(s) + ".png";
        save_image(p, (pred / name).string());
        save_image(g, (gt / name).string());
        // metrics on the quantized files, exactly what eval_dataset sees
        Image pq = load_image((pred / name).string());
        Image gq = load_image((gt / name).string());
        psnrs.push_back(psnr(pq, gq));
        ssims.push_back(ssim(pq, gq));
        mses.push_back(mse(pq, gq));
    }
    EvalReport rep = eval_dataset(pred.string(), gt.string());
    REQUIRE(rep.rows.size() == 3);
    double mp = 0, ms = 0, mm = 0;
    for (int i = 0; i < 3; ++i) {
        mp += psnrs[i] / 3;
        ms += ssims[i] / 3;
        mm += mses[i] / 3;
    }
    CHECK(rep.mean.psnr == doctest::Approx(mp).epsilon(1e-9));
    CHECK(rep.mean.ssim == doctest::Approx(ms).epsilon(1e-9));
    CHECK(rep.mean.mse == doctest::Approx(mm).epsilon(1e-9));

    std::error_code ec;
    fs::remove_all(dir, ec);
}

TEST_CASE("pearson is offset and scale invariant") {
    Image a = random_image(16, 16, 1, 9);
    Image b = Image::create(16, 16, 1);
    for (int i = 0; i < a.sample_count(); ++i) b.data[i] = std::min(1.f, 0.5f * a.data[i] + 0.2f);
    CHECK(pearson(a, b) >= 0.999);
}
