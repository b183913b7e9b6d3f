#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "nightenh/decomposition.hpp"
#include "nightenh/errors.hpp"
#include "nightenh/metrics.hpp"
#include "nightenh/synthbench.hpp"

using namespace nightenh;

namespace {

Image random_image(int h, int w, int c, uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> d(0.f, 1.f);
    Image img = Image::create(h, w, c);
    for (float& v : img.data) v = d(rng);
    return img;
}

} // namespace

TEST_CASE("init_shading is the channel maximum") {
    Image img = Image::create(1, 1, 3);
    img.at(0, 0, 0) = 0.2f;
    img.at(0, 0, 1) = 0.5f;
    img.at(0, 0, 2) = 0.3f;
    CHECK(init_shading(img).at(0, 0, 0) == doctest::Approx(0.5f));

    for (float v : init_shading(Image::create(4, 4, 3)).data) CHECK(v == 0.f);

    Image red = Image::create(3, 3, 3);
    for (int i = 0; i < red.pixel_count(); ++i) red.data[i * 3] = 1.f;
    for (float v : init_shading(red).data) CHECK(v == 1.f);
}

TEST_CASE("init_light_effects: constant image gives zero") {
    Image img = Image::create(32, 32, 3, 0.5f);
    Image gi = init_light_effects(img);
    for (float v : gi.data) CHECK(std::fabs(v) <= 1e-6f);
}

TEST_CASE("init_light_effects stays below the input pointwise") {
    Image clean = make_test_scene(64, 64, 20);
    GlowSpec spec;
    spec.cx = 32.f;
    spec.cy = 32.f;
    spec.sigma = 10.f;
    spec.amplitude = {0.6f, 0.6f, 0.6f};
    Composite comp = synth_composite(clean, spec);
    Image gi = init_light_effects(comp.input);
    for (int i = 0; i < gi.sample_count(); ++i) {
        CHECK(gi.data[i] >= 0.f);
        CHECK(gi.data[i] <= comp.input.data[i] + 1e-6f);
    }
}

TEST_CASE("init_light_effects recovers a synthetic blob per channel") {
    Image clean = make_test_scene(128, 128, 21);
    GlowSpec spec;
    spec.cx = 70.f;
    spec.cy = 55.f;
    spec.sigma = 16.f;
    spec.amplitude = {0.65f, 0.6f, 0.55f};
    Composite comp = synth_composite(clean, spec);
    Image gi = init_light_effects(comp.input);
    for (int c = 0; c < 3; ++c) {
        Image a = Image::create(128, 128, 1), b = Image::create(128, 128, 1);
        for (int i = 0; i < a.pixel_count(); ++i) {
            a.data[i] = gi.data[i * 3 + c];
            b.data[i] = comp.glow.data[i * 3 + c];
        }
        CHECK(pearson(a, b) >= 0.8);
    }
}

TEST_CASE("init_light_effects validates its arguments") {
    CHECK_THROWS_AS(init_light_effects(Image::create(8, 8, 1)), ShapeError);
    CHECK_THROWS_AS(init_light_effects(Image::create(8, 8, 3), 0.f), NumericError);
}

TEST_CASE("loss_init zero case and constant offset") {
    Image g = random_image(6, 6, 3, 1);
    Image l = random_image(6, 6, 1, 2);
    CHECK(loss_init(g, l, g, l) == 0.0);

    Image gi = Image::create(6, 6, 3, 0.4f);
    Image g2 = Image::create(6, 6, 3, 0.5f);
    CHECK(loss_init(g2, l, gi, l) == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("loss_init matches a naive double-loop oracle") {
    Image g = random_image(7, 5, 3, 3), gi = random_image(7, 5, 3, 4);
    Image l = random_image(7, 5, 1, 5), li = random_image(7, 5, 1, 6);
    double acc_g = 0, acc_l = 0;
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 5; ++x) {
            for (int c = 0; c < 3; ++c) acc_g += std::fabs(g.at(y, x, c) - gi.at(y, x, c));
            acc_l += std::fabs(l.at(y, x, 0) - li.at(y, x, 0));
        }
    const double expect = acc_g / (7 * 5 * 3) + acc_l / (7 * 5);
    CHECK(std::fabs(loss_init(g, l, gi, li) - expect) <= 1e-6);
}

TEST_CASE("loss_init rejects mismatched shapes") {
    CHECK_THROWS_AS(loss_init(random_image(6, 6, 3, 1), random_image(6, 6, 1, 2), random_image(6, 5, 3, 3),
                              random_image(6, 6, 1, 4)),
                    ShapeError);
}

TEST_CASE("loss_excl zero cases and positivity") {
    Image flat = Image::create(16, 16, 3, 0.5f);
    Image ramp = Image::create(16, 16, 3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) ramp.at(y, x, c) = (x + y) / 32.f;
    Image any = random_image(16, 16, 3, 7);

    CHECK(loss_excl(flat, any) == 0.0);
    CHECK(loss_excl(any, flat) == 0.0);
    CHECK(loss_excl(ramp, ramp) > 0.0);
}

TEST_CASE("loss_excl is symmetric") {
    Image a = random_image(16, 16, 3, 8), b = random_image(16, 16, 3, 9);
    CHECK(loss_excl(a, b) == doctest::Approx(loss_excl(b, a)).epsilon(1e-6));
}

TEST_CASE("loss_cc spot values and symmetry") {
    Image gray = Image::create(5, 5, 3, 0.77f);
    CHECK(loss_cc(gray) == 0.0);

    Image px = Image::create(1, 1, 3);
    px.at(0, 0, 0) = 0.2f;
    px.at(0, 0, 1) = 0.5f;
    px.at(0, 0, 2) = 0.3f;
    CHECK(loss_cc(px) == doctest::Approx(0.6).epsilon(1e-6));

    Image img = random_image(6, 6, 3, 10);
    Image perm = Image::create(6, 6, 3);
    for (int i = 0; i < img.pixel_count(); ++i) {
        perm.data[i * 3 + 0] = img.data[i * 3 + 1];
        perm.data[i * 3 + 1] = img.data[i * 3 + 2];
        perm.data[i * 3 + 2] = img.data[i * 3 + 0];
    }
    CHECK(loss_cc(img) == doctest::Approx(loss_cc(perm)).epsilon(1e-5));

    CHECK_THROWS_AS(loss_cc(random_image(4, 4, 1, 11)), ShapeError);
}

TEST_CASE("loss_recon zero case, offset case and oracle") {
    Image l = random_image(6, 6, 1, 13);
    // Layer ranges chosen so the recombination never clips.
    Image r2 = random_image(6, 6, 3, 14);
    for (float& v : r2.data) v *= 0.5f;
    Image g2 = Image::create(6, 6, 3, 0.1f);
    Image i2 = Image::create(6, 6, 3);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
            for (int c = 0; c < 3; ++c) i2.at(y, x, c) = r2.at(y, x, c) * l.at(y, x, 0) + g2.at(y, x, c);
    CHECK(loss_recon(i2, r2, l, g2) == 0.0);

    Image g_off = Image::create(6, 6, 3, 0.15f);
    CHECK(loss_recon(i2, r2, l, g_off) == doctest::Approx(0.05).epsilon(1e-5));

    Image ir = random_image(6, 6, 3, 15);
    double acc = 0;
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
            for (int c = 0; c < 3; ++c)
                acc += std::fabs(ir.at(y, x, c) - (r2.at(y, x, c) * l.at(y, x, 0) + g2.at(y, x, c)));
    CHECK(std::fabs(loss_recon(ir, r2, l, g2) - acc / (6 * 6 * 3)) <= 1e-6);
}

TEST_CASE("decompose on flat gray pulls G toward zero") {
    Image img = Image::create(32, 32, 3, 0.5f);
    DecompResult res = decompose(img); // default config
    double mean_g = 0;
    for (float v : res.layers.G.data) mean_g += v / res.layers.G.sample_count();
    CHECK(mean_g <= 0.02);
}

TEST_CASE("decompose returns the best iterate and a complete trace") {
    Image clean = make_test_scene(64, 64, 22);
    GlowSpec spec;
    spec.cx = 30.f;
    spec.cy = 30.f;
    spec.sigma = 9.f;
    spec.amplitude = {0.5f, 0.5f, 0.5f};
    Composite comp = synth_composite(clean, spec);
    DecompConfig cfg;
    cfg.iterations = 120;
    DecompResult res = decompose(comp.input, cfg);
    REQUIRE(res.trace.size() == 121);
    double best = res.trace.front().total;
    for (const auto& row : res.trace) best = std::min(best, row.total);
    CHECK(best <= res.trace.front().total);

    // best-so-far envelope is non-increasing by construction
    double run = res.trace.front().total;
    for (const auto& row : res.trace) {
        run = std::min(run, row.total);
        CHECK(run <= res.trace.front().total + 1e-12);
    }
}

TEST_CASE("decompose with a zero budget returns the initialization") {
    Image img = random_image(24, 24, 3, 16);
    DecompConfig cfg;
    cfg.iterations = 0;
    DecompResult res = decompose(img, cfg);
    CHECK(res.trace.size() == 1);
    const Image li = init_shading(img);
    // L comes back as the (clamped) initializer.
    for (int i = 0; i < li.sample_count(); ++i)
        CHECK(res.layers.L.data[i] == doctest::Approx(std::clamp(li.data[i], 0.02f, 0.98f)).epsilon(1e-3));
}

TEST_CASE("decompose layers are strictly inside (0,1) and J is recomputed") {
    Image img = random_image(24, 24, 3, 17);
    DecompConfig cfg;
    cfg.iterations = 50;
    DecompResult res = decompose(img, cfg);
    for (float v : res.layers.R.data) {
        CHECK(v > 0.f);
        CHECK(v < 1.f);
    }
    for (float v : res.layers.L.data) {
        CHECK(v > 0.f);
        CHECK(v < 1.f);
    }
    for (float v : res.layers.G.data) {
        CHECK(v > 0.f);
        CHECK(v < 1.f);
    }
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(res.layers.J_init.at(y, x, c) ==
                      doctest::Approx(res.layers.R.at(y, x, c) * res.layers.L.at(y, x, 0)));
}

TEST_CASE("decompose is deterministic") {
    Image img = random_image(24, 24, 3, 18);
    DecompConfig cfg;
    cfg.iterations = 40;
    DecompResult a = decompose(img, cfg);
    DecompResult b = decompose(img, cfg);
    CHECK(a.layers.G.data == b.layers.G.data);
    CHECK(a.layers.R.data == b.layers.R.data);
    REQUIRE(a.trace.size() == b.trace.size());
    for (size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].total == b.trace[i].total);
}

TEST_CASE("decompose rejects single-channel input") {
    CHECK_THROWS_AS(decompose(random_image(16, 16, 1, 19)), ShapeError);
}

TEST_CASE("trace serialization format") {
    std::vector<TraceRow> trace{{0, 0.1, 0.2, 0.3, 0.4, 0.5}, {1, 0.05, 0.1, 0.15, 0.2, 0.25}};
    std::ostringstream os;
    write_trace(trace, os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "iteration,L_init,L_excl,L_cc,L_recon,total");
    std::getline(is, line);
    CHECK(line.substr(0, 2) == "0,");
    int commas = 0;
    for (char ch : line) commas += ch == ',';
    CHECK(commas == 5);
}
