#include <benchmark/benchmark.h>

#include <random>

#include "nightenh/decomposition.hpp"
#include "nightenh/guided_filter.hpp"
#include "nightenh/metrics.hpp"
#include "nightenh/networks.hpp"
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

void BM_GuidedFilter(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Image img = random_image(n, n, 3, 1);
    for (auto _ : state) {
        Image out = guided_filter(img, img, 8, 0.04f);
        benchmark::DoNotOptimize(out.data.data());
    }
    state.SetComplexityN(n * n);
}
BENCHMARK(BM_GuidedFilter)->Arg(128)->Arg(256)->Arg(512)->Complexity();

void BM_HFBank(benchmark::State& state) {
    Image img = random_image(128, 128, 3, 2);
    HFConfig cfg;
    for (auto _ : state) {
        auto maps = hf_features(img, cfg);
        benchmark::DoNotOptimize(maps.data());
    }
}
BENCHMARK(BM_HFBank);

void BM_InitLightEffects(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Composite comp = synth_composite(make_test_scene(n, n, 3), GlowSpec{n / 2.f, n / 2.f, {0.5f, 0.5f, 0.5f}, n / 8.f});
    for (auto _ : state) {
        Image gi = init_light_effects(comp.input);
        benchmark::DoNotOptimize(gi.data.data());
    }
}
BENCHMARK(BM_InitLightEffects)->Arg(128)->Arg(256);

void BM_DecomposeIteration(benchmark::State& state) {
    Composite comp = synth_composite(make_test_scene(128, 128, 4), GlowSpec{64.f, 64.f, {0.5f, 0.5f, 0.5f}, 16.f});
    DecompConfig cfg;
    cfg.iterations = 1;
    for (auto _ : state) {
        DecompResult res = decompose(comp.input, cfg);
        benchmark::DoNotOptimize(res.layers.G.data.data());
    }
}
BENCHMARK(BM_DecomposeIteration);

void BM_GeneratorForward(benchmark::State& state) {
    GeneratorWeights gen = GeneratorWeights::init(5);
    Image img = random_image(128, 128, 3, 6);
    Image guide = random_image(128, 128, 3, 7);
    for (auto _ : state) {
        Image out = generator_forward(gen, img, guide);
        benchmark::DoNotOptimize(out.data.data());
    }
}
BENCHMARK(BM_GeneratorForward);

void BM_Ssim(benchmark::State& state) {
    Image a = random_image(128, 128, 3, 8);
    Image b = random_image(128, 128, 3, 9);
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim);

} // namespace

BENCHMARK_MAIN();
