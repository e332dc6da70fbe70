#include <benchmark/benchmark.h>

#include <random>

#include "coach/analytics.hpp"

using namespace coach;

namespace {

std::pair<std::vector<double>, std::vector<double>> paired_samples(int n) {
    std::mt19937 rng(5);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> x(n);
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = noise(rng) + 0.3;
        y[i] = noise(rng);
    }
    return {x, y};
}

void BM_WilcoxonExact(benchmark::State& state) {
    const auto [x, y] = paired_samples(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(wilcoxon_signed_rank(x, y, WilcoxonMethod::exact));
}
BENCHMARK(BM_WilcoxonExact)->Arg(10)->Arg(25)->Arg(50);

void BM_WilcoxonNormal(benchmark::State& state) {
    const auto [x, y] = paired_samples(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(wilcoxon_signed_rank(x, y, WilcoxonMethod::normal));
}
BENCHMARK(BM_WilcoxonNormal)->Arg(100)->Arg(10000);

void BM_BenjaminiHochberg(benchmark::State& state) {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(static_cast<std::size_t>(state.range(0)));
    for (auto& v : p) v = u(rng);
    for (auto _ : state) benchmark::DoNotOptimize(bh_adjust(p));
}
BENCHMARK(BM_BenjaminiHochberg)->Arg(100)->Arg(10000);

}  // namespace
