#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "secgan/evaluation.hpp"
#include "secgan/losses.hpp"
#include "secgan/networks.hpp"
#include "secgan/parsing.hpp"
#include "secgan/training.hpp"
#include "support/fixtures.hpp"

using namespace secgan;

namespace {

NetworkSpec toy_spec(Modality m, Role r) {
    NetworkSpec s;
    s.modality = m;
    s.role = r;
    s.n_attrs = 5;
    s.resolution = 32;
    s.width = 16;
    s.n_res = 2;
    s.d_layers = 5;
    return s;
}

void BM_GeneratorForward(benchmark::State& state) {
    torch::NoGradGuard no_grad;
    const auto m = state.range(0) ? Modality::Seg : Modality::Rgb;
    auto g = build_generator(toy_spec(m, Role::Generator));
    auto x = torch::rand({16, modality_channels(m), 32, 32});
    auto y = torch::zeros({16, 5});
    for (auto _ : state) benchmark::DoNotOptimize(g.forward(x, y));
}
BENCHMARK(BM_GeneratorForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Parse(benchmark::State& state) {
    torch::NoGradGuard no_grad;
    ParserHandle p(32, 16, 0);
    auto x = torch::rand({16, 3, 32, 32}) * 2 - 1;
    for (auto _ : state) benchmark::DoNotOptimize(parse(p, x));
}
BENCHMARK(BM_Parse)->Unit(benchmark::kMillisecond);

void BM_GradientPenalty(benchmark::State& state) {
    auto d = build_discriminator(toy_spec(Modality::Rgb, Role::Discriminator));
    CriticFn critic = [&](const torch::Tensor& x) { return d.forward(x).adv.mean({1, 2, 3}); };
    auto a = torch::rand({16, 3, 32, 32}), b = torch::rand({16, 3, 32, 32});
    std::mt19937_64 rng(0);
    for (auto _ : state) benchmark::DoNotOptimize(gradient_penalty(critic, a, b, rng));
}
BENCHMARK(BM_GradientPenalty)->Unit(benchmark::kMillisecond);

void BM_MaskCrossEntropy(benchmark::State& state) {
    auto t = to_one_hot(torch::rand({16, 12, 32, 32}));
    auto p = torch::softmax(torch::randn({16, 12, 32, 32}), 1);
    for (auto _ : state) benchmark::DoNotOptimize(mask_cross_entropy(t, p));
}
BENCHMARK(BM_MaskCrossEntropy);

void BM_FrechetDistance(benchmark::State& state) {
    auto a = torch::randn({500, state.range(0)}, torch::kFloat64);
    auto b = torch::randn({500, state.range(0)}, torch::kFloat64) + 0.5;
    for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
}
BENCHMARK(BM_FrechetDistance)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainingIteration(benchmark::State& state) {
    auto data = fixture::tiny_data(64);
    auto c = fixture::tiny_config();
    c.iterations = 1 << 30;
    c.semantic_branch = state.range(0) != 0;
    Trainer t(c, data, fixture::tiny_parser());
    for (auto _ : state) benchmark::DoNotOptimize(t.iterate());
}
BENCHMARK(BM_TrainingIteration)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
