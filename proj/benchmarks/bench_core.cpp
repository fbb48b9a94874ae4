// Microbenchmarks on the shipped 3SG/3PL scenario: gradients, encoding,
// training steps and overlap computation.

#include <benchmark/benchmark.h>

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "gradlab/compare.hpp"
#include "gradlab/gradcore.hpp"
#include "gradlab/rng.hpp"
#include "gradlab/tinylm.hpp"
#include "support/desk_gradiend.hpp"
#include "support/desk_scenario.hpp"

using namespace gradlab;

namespace {

struct Probe {
    std::vector<TokenId> context;
    TokenId label = 0;
};

Probe probe(std::size_t i) {
    const auto& s = desk::scenario();
    const auto& p = s.base.params;
    const auto& inst = s.train[i % s.train.size()];
    const auto ids = p.vocab.encode(inst.tokens);
    return {make_context(p.config, ids, inst.target_pos), *p.vocab.find(inst.factual_word)};
}

void BM_forward_probs(benchmark::State& state) {
    const auto& p = desk::scenario().base.params;
    const auto x = probe(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward_probs(p, x.context));
    }
}
BENCHMARK(BM_forward_probs);

void BM_full_grad(benchmark::State& state) {
    const auto& p = desk::scenario().base.params;
    const auto x = probe(1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(full_grad(p, x.context, x.label));
    }
}
BENCHMARK(BM_full_grad);

void BM_grad_w1(benchmark::State& state) {
    const auto& p = desk::scenario().base.params;
    const auto selection = std::make_shared<const ParamSelection>(default_selection(p));
    const auto x = probe(2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(grad(p, x.context, x.label, selection));
    }
}
BENCHMARK(BM_grad_w1);

void BM_encode(benchmark::State& state) {
    const auto& gm = desk::trained_gradiend().model;
    const auto& p = desk::scenario().base.params;
    const auto selection = std::make_shared<const ParamSelection>(gm.selection);
    const auto x = probe(3);
    const auto g = grad(p, x.context, x.label, selection);
    for (auto _ : state) {
        benchmark::DoNotOptimize(encode(gm, g.values));
    }
}
BENCHMARK(BM_encode);

void BM_train_base_steps(benchmark::State& state) {
    const auto& s = desk::scenario();
    const auto init = init_params(ModelConfig{}, s.base.params.vocab);
    BaseTrainConfig config;
    config.steps = static_cast<std::size_t>(state.range(0));
    config.probe_size = 16;
    for (auto _ : state) {
        benchmark::DoNotOptimize(train_base(init, s.corpus, config));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_train_base_steps)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_train_gradiend_steps(benchmark::State& state) {
    const auto& s = desk::scenario();
    auto config = desk::default_gradiend_config();
    config.max_steps = static_cast<std::size_t>(state.range(0));
    config.eval_steps = config.max_steps;
    config.seeds = {0};
    const auto selection = default_selection(s.base.params);
    for (auto _ : state) {
        benchmark::DoNotOptimize(train_gradiend(s.base.params, s.train, {}, config, selection));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_train_gradiend_steps)->Arg(100)->Unit(benchmark::kMillisecond);

std::vector<ImportanceProfile> random_profiles(std::size_t n, std::size_t entries, std::size_t space) {
    SplitMix64 rng(derive_seed(99, 1));
    std::vector<ImportanceProfile> out;
    for (std::size_t r = 0; r < n; ++r) {
        std::set<std::size_t> picked;
        while (picked.size() < entries) {
            picked.insert(rng.uniform_index(space));
        }
        ImportanceProfile p{"run" + std::to_string(r), {}, "base"};
        for (auto i : picked) {
            p.entries.push_back({Coordinate{TensorId::W1, i}, rng.uniform01()});
        }
        out.push_back(std::move(p));
    }
    return out;
}

void BM_overlap_matrix(benchmark::State& state) {
    const auto profiles = random_profiles(static_cast<std::size_t>(state.range(0)), 2560, 4096);
    for (auto _ : state) {
        benchmark::DoNotOptimize(overlap_matrix(profiles, 1000));
    }
}
BENCHMARK(BM_overlap_matrix)->Arg(3)->Arg(10)->Arg(44)->Unit(benchmark::kMicrosecond);

void BM_venn_regions(benchmark::State& state) {
    const auto profiles = random_profiles(static_cast<std::size_t>(state.range(0)), 2560, 4096);
    for (auto _ : state) {
        benchmark::DoNotOptimize(venn_regions(profiles, 1000));
    }
}
BENCHMARK(BM_venn_regions)->Arg(3)->Arg(6)->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
