#include <benchmark/benchmark.h>

#include <vector>

#include "patan/data.hpp"
#include "patan/filtration.hpp"
#include "patan/model.hpp"
#include "patan/training.hpp"

namespace {

using namespace patan;

ModelConfig bench_model_config(int k) {
    ModelConfig mc;
    mc.d_in = 24;
    mc.k = k;
    mc.num_classes = 10;
    mc.d_sp = 32;
    mc.d_t = 32;
    mc.h_rel = 32;
    mc.seed = 7;
    return mc;
}

GeneratorSpec bench_data_spec(int k) {
    GeneratorSpec spec;
    spec.num_source_classes = 10;
    spec.num_target_classes = 5;
    spec.d_in = 24;
    spec.k = k;
    spec.samples_per_class_source = 4;
    spec.samples_per_class_target = 4;
    spec.noise_std = 0.05;
    spec.target_shift.rotation_angle = 0.3;
    spec.target_shift.offset_scale = 0.5;
    spec.seed = 11;
    return spec;
}

void BM_Forward(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    PatanModel model(bench_model_config(k));
    SplitDataset data = generate(bench_data_spec(k));
    ForwardOptions opts;
    opts.grl_coeff = 0.5;
    std::size_t i = 0;
    for (auto _ : state) {
        ad::Graph g;
        ForwardOutput out = forward(g, model, data.source[i % data.source.size()].frames(), opts);
        benchmark::DoNotOptimize(out.temporal_probs.data());
        ++i;
    }
}
BENCHMARK(BM_Forward)->Arg(4)->Arg(8);

void BM_LossBackward(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    PatanModel model(bench_model_config(k));
    SplitDataset data = generate(bench_data_spec(k));
    TrainConfig cfg;
    cfg.method = Method::patan;
    std::vector<const VideoSample*> src, tgt;
    for (int i = 0; i < 8; ++i) {
        src.push_back(&data.source[i]);
        tgt.push_back(&data.target[i]);
    }
    ClassWeights gamma = ClassWeights::ones(10);
    for (auto _ : state) {
        model.params().zero_grad();
        ad::Graph g;
        ad::Node* loss = loss_patan(g, cfg, model, src, tgt, gamma, 0.5);
        g.backward(loss);
        benchmark::DoNotOptimize(loss->scalar());
    }
}
BENCHMARK(BM_LossBackward)->Arg(4)->Arg(8);

void BM_Generate(benchmark::State& state) {
    GeneratorSpec spec = bench_data_spec(8);
    spec.samples_per_class_source = static_cast<int>(state.range(0));
    spec.samples_per_class_target = static_cast<int>(state.range(0));
    for (auto _ : state) {
        SplitDataset data = generate(spec);
        benchmark::DoNotOptimize(data.source.data());
    }
    state.SetItemsProcessed(state.iterations() *
                            (spec.samples_per_class_source * spec.num_source_classes +
                             spec.samples_per_class_target * spec.num_target_classes));
}
BENCHMARK(BM_Generate)->Arg(10)->Arg(40);

void BM_ClipSubsets(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    for (auto _ : state) {
        for (int r = 2; r <= k; ++r) {
            auto subsets = clip_subsets(k, r, 32, 3);
            benchmark::DoNotOptimize(subsets.data());
        }
    }
}
BENCHMARK(BM_ClipSubsets)->Arg(8)->Arg(12);

} // namespace

BENCHMARK_MAIN();
