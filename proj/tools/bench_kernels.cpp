// Parallel kernels against their serial references.

#include <random>

#include <benchmark/benchmark.h>

#include "endo/distance_codec.hpp"
#include "endo/kernels.hpp"
#include "endo/synth.hpp"

using namespace endo;

namespace {

Tensor4<float> random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d;
    Tensor4<float> t(n, c, h, w);
    for (auto& v : t.data) v = d(rng);
    return t;
}

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d(0.0f, 0.1f);
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// Args: channels in, channels out, spatial size.
template <bool Fast>
void BM_conv3x3_forward(benchmark::State& st) {
    const int cin = static_cast<int>(st.range(0)), cout = static_cast<int>(st.range(1)), hw = static_cast<int>(st.range(2));
    const auto in = random_tensor(4, cin, hw, hw, 1);
    const auto w = random_vec(static_cast<std::size_t>(cout) * cin * 9, 2);
    const std::vector<float> b(static_cast<std::size_t>(cout), 0.0f);
    for (auto _ : st) {
        auto out = Fast ? kernels::conv3x3_forward(in, w, b, cout) : kernels::ref::conv3x3_forward(in, w, b, cout);
        benchmark::DoNotOptimize(out.data.data());
    }
    st.SetItemsProcessed(st.iterations() * 4LL * cin * cout * 9 * hw * hw);
}

template <bool Fast>
void BM_conv3x3_backward(benchmark::State& st) {
    const int cin = static_cast<int>(st.range(0)), cout = static_cast<int>(st.range(1)), hw = static_cast<int>(st.range(2));
    const auto in = random_tensor(4, cin, hw, hw, 1);
    const auto g = random_tensor(4, cout, hw, hw, 3);
    const auto w = random_vec(static_cast<std::size_t>(cout) * cin * 9, 2);
    Tensor4<float> gin;
    std::vector<float> gw(w.size()), gb(static_cast<std::size_t>(cout));
    for (auto _ : st) {
        if (Fast)
            kernels::conv3x3_backward(in, w, g, &gin, gw, &gb);
        else
            kernels::ref::conv3x3_backward(in, w, g, &gin, gw, &gb);
        benchmark::DoNotOptimize(gw.data());
    }
}

template <bool Fast>
void BM_upconv2x2_forward(benchmark::State& st) {
    const int cin = static_cast<int>(st.range(0)), cout = cin / 2, hw = static_cast<int>(st.range(1));
    const auto in = random_tensor(4, cin, hw, hw, 1);
    const auto w = random_vec(static_cast<std::size_t>(cin) * cout * 4, 2);
    const std::vector<float> b(static_cast<std::size_t>(cout), 0.0f);
    for (auto _ : st) {
        auto out = Fast ? kernels::upconv2x2_forward(in, w, b, cout) : kernels::ref::upconv2x2_forward(in, w, b, cout);
        benchmark::DoNotOptimize(out.data.data());
    }
}

template <bool Parallel>
void BM_edt(benchmark::State& st) {
    SynthConfig c;
    c.width = c.height = static_cast<int>(st.range(0));
    c.n_cells = c.width * c.height / 370;
    const auto masks = generate(c).second;
    for (auto _ : st) {
        auto d = Parallel ? edt_squared(masks.cells) : edt_squared_serial(masks.cells);
        benchmark::DoNotOptimize(d.data());
    }
}

}  // namespace

BENCHMARK(BM_conv3x3_forward<false>)->Args({8, 8, 96})->Args({16, 32, 48})->Args({64, 64, 12})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv3x3_forward<true>)->Args({8, 8, 96})->Args({16, 32, 48})->Args({64, 64, 12})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv3x3_backward<false>)->Args({8, 8, 96})->Args({64, 64, 12})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv3x3_backward<true>)->Args({8, 8, 96})->Args({64, 64, 12})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_upconv2x2_forward<false>)->Args({32, 24})->Args({128, 6})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_upconv2x2_forward<true>)->Args({32, 24})->Args({128, 6})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_edt<false>)->Arg(192)->Arg(640)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_edt<true>)->Arg(192)->Arg(640)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
