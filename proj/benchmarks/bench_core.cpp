#include <benchmark/benchmark.h>

#include "mhri/evaluator.hpp"
#include "mhri/ops.hpp"
#include "mhri/synth.hpp"
#include "mhri/trainer.hpp"

namespace {

using namespace mhri;

void BM_Matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    RngStream rng(1);
    Tensor a = Tensor::randn({n, n}, 1.0, rng);
    Tensor b = Tensor::randn({n, n}, 1.0, rng);
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_CausalAttention(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    RngStream rng(2);
    Tensor q = Tensor::randn({n, 64}, 1.0, rng);
    Tensor k = Tensor::randn({n, 64}, 1.0, rng);
    Tensor v = Tensor::randn({n, 64}, 1.0, rng);
    std::vector<uint8_t> valid(static_cast<size_t>(n), 1);
    for (auto _ : state) {
        Tensor out = causal_attention(q, k, v, 4, valid);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_CausalAttention)->Arg(16)->Arg(32)->Arg(64);

ModelConfig default_model() {
    ModelConfig cfg;
    cfg.d_v = 16;
    cfg.d_t = 16;
    return cfg;
}

Episode bench_episode(int n) {
    SynthConfig synth;
    synth.n_episodes = 1;
    synth.min_utterances = n;
    synth.max_utterances = n;
    synth.seed = 3;
    return generate_dataset(synth)[0];
}

// The per-decision path behind `predict --measure-latency`.
void BM_EpisodeForward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    MhriModel model(default_model());
    const Episode ep = bench_episode(n);
    for (auto _ : state) {
        EpisodeForward fwd = model.forward_episode(ep, ep.size());
        benchmark::DoNotOptimize(fwd.response.probs.data());
    }
    state.SetItemsProcessed(state.iterations() * n);  // decisions per second
}
BENCHMARK(BM_EpisodeForward)->Arg(8)->Arg(18)->Arg(32);

void BM_TrainStep(benchmark::State& state) {
    MhriModel model(default_model());
    const Episode ep = bench_episode(18);
    const MaskSet masks = build_masks(ep, ep.size());
    ScenePriorParams sp;
    ResponsePriorParams rp;
    AblationFlags flags;
    RngStream dropout_rng(4);
    for (auto _ : state) {
        model.params().zero_grad();
        EpisodeForward fwd = model.forward_episode(ep, ep.size(), true, &dropout_rng);
        LossParts scene = scene_loss(fwd.scene, ep, masks, sp, 0.01);
        LossParts resp = response_loss(fwd.response, ep, masks, rp, 0.01);
        Tensor total = joint_loss(scene.total, resp.total, flags);
        total.backward();
        adamw_step(model.params(), 1e-4, 0.9, 0.999, 1e-8, 0.01);
        benchmark::DoNotOptimize(total.value());
    }
}
BENCHMARK(BM_TrainStep);

void BM_GenerateDataset(benchmark::State& state) {
    SynthConfig synth;
    synth.n_episodes = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto episodes = generate_dataset(synth);
        benchmark::DoNotOptimize(episodes.size());
    }
}
BENCHMARK(BM_GenerateDataset)->Arg(10)->Arg(60);

}  // namespace

BENCHMARK_MAIN();
