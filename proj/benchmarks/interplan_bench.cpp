#include <benchmark/benchmark.h>

#include "interplan/env.hpp"
#include "interplan/ipo.hpp"
#include "interplan/policy.hpp"
#include "interplan/rollout.hpp"

namespace interplan {
namespace {

PolicyParams noisy_params() {
  PolicyParams p = PolicyParams::zeros();
  Rng rng(3);
  for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = 0.2 * (uniform01(rng) - 0.5);
  return p;
}

void BM_GenerateTask(benchmark::State& state) {
  const auto difficulty = static_cast<Difficulty>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_task(seed++, TaskType::Heat, difficulty));
}
BENCHMARK(BM_GenerateTask)->Arg(0)->Arg(1);

void BM_Step(benchmark::State& state) {
  const auto g = generate_task(12, TaskType::Clean, Difficulty::Normal);
  const auto plan = *solve(g.state, g.spec, kDefaultMaxSteps);
  for (auto _ : state) {
    WorldState s = g.state;
    for (const auto& a : plan) s = step(s, a, g.spec).state;
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(plan.size()));
}
BENCHMARK(BM_Step);

void BM_SampleResponse(benchmark::State& state) {
  const PolicyParams params = noisy_params();
  const auto g = generate_task(5, TaskType::Cool, Difficulty::Easy);
  Rng rng(1);
  const Trajectory history = prefix(run_replica(params, g.spec, 30, rng), 0);
  for (auto _ : state) benchmark::DoNotOptimize(sample_response(params, history, g.spec, rng));
}
BENCHMARK(BM_SampleResponse);

void BM_Episode(benchmark::State& state) {
  const PolicyParams params = noisy_params();
  const auto g = generate_task(5, TaskType::Cool, Difficulty::Easy);
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(run_replica(params, g.spec, 30, rng));
}
BENCHMARK(BM_Episode);

void BM_GroupRollout(benchmark::State& state) {
  const PolicyParams params = noisy_params();
  std::vector<TaskSpec> tasks;
  for (std::uint64_t i = 0; i < 16; ++i)
    tasks.push_back(generate_task(i * 13, static_cast<TaskType>(i % kNumTaskTypes), Difficulty::Easy).spec);
  RolloutOptions options;
  options.concurrent = state.range(0) > 1;
  options.threads = static_cast<unsigned>(state.range(0));
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(group_rollout(params, tasks, 5, 30, rng, options));
}
BENCHMARK(BM_GroupRollout)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Objective(benchmark::State& state) {
  const PolicyParams params = noisy_params();
  std::vector<TaskSpec> tasks;
  for (std::uint64_t i = 0; i < 16; ++i)
    tasks.push_back(generate_task(i * 13, static_cast<TaskType>(i % kNumTaskTypes), Difficulty::Easy).spec);
  Rng rng(2);
  RolloutBatch batch = group_rollout(params, tasks, 5, 30, rng);
  for (std::size_t k = 0; k < batch.groups.size(); ++k) batch.groups[k].rewards[k % 5] = 1.0;
  assign_advantages(batch, DegenerateGroupMode::ZeroAdvantage);
  IPOConfig config;
  const PolicyParams ref = PolicyParams::zeros();
  for (auto _ : state) benchmark::DoNotOptimize(ipo_objective(params, params, ref, batch, config));
}
BENCHMARK(BM_Objective)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace interplan

BENCHMARK_MAIN();
