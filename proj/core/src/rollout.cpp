#include "interplan/rollout.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace interplan {

Responder policy_responder(const PolicyParams& params, SampleMode mode) {
  return [&params, mode](const Trajectory& so_far, const TaskSpec& spec, Rng& rng) {
    return sample_response(params, so_far, spec, rng, mode);
  };
}

Trajectory run_episode(const TaskSpec& spec, int max_steps, Rng& rng,
                       const Responder& responder) {
  if (max_steps < 1) throw std::invalid_argument("max_steps must be at least 1");
  auto [state, initial] = reset(spec, max_steps);
  Trajectory traj;
  traj.spec = spec;
  traj.initial_observation = std::move(initial);
  traj.max_steps = max_steps;

  bool done = false;
  while (!done) {
    StepResponse response = responder(traj, spec, rng);
    // The environment only ever sees the rendered text.
    std::optional<ParsedAction> action;
    try {
      action = parse_action(parse_response(response.text()).action_text, spec);
    } catch (const ParseError&) {
    } catch (const GrammarError&) {
    }
    response.parsed = action;
    StepResult result = action ? step(state, *action, spec) : step_unparsed(state, spec);
    if (!result.observation.valid) ++traj.invalid_count;
    traj.turns.push_back({std::move(response), std::move(result.observation)});
    state = std::move(result.state);
    done = result.done;
  }
  const bool goal = goal_check(state, spec);
  traj.reward = goal ? 1.0 : 0.0;
  traj.truncated = !goal && !state.terminated;
  return traj;
}

Trajectory run_replica(const PolicyParams& params_old, const TaskSpec& spec, int max_steps,
                       Rng& rng, SampleMode mode) {
  return run_episode(spec, max_steps, rng, policy_responder(params_old, mode));
}

void summarize_rewards(TrajectoryGroup& group) {
  const auto n = static_cast<double>(group.rewards.size());
  double sum = 0.0;
  for (double r : group.rewards) sum += r;
  group.mean_reward = n > 0 ? sum / n : 0.0;
  double sq = 0.0;
  for (double r : group.rewards) sq += (r - group.mean_reward) * (r - group.mean_reward);
  group.std_reward = n > 0 ? std::sqrt(sq / n) : 0.0;
}

std::string rollout_log_path(const std::string& dir, const std::string& policy_version,
                             long phase_index) {
  return (std::filesystem::path(dir) /
          ("rollout-v" + policy_version + "-p" + std::to_string(phase_index) + ".jsonl"))
      .string();
}

RolloutBatch group_rollout(const Responder& responder, const std::vector<TaskSpec>& batch,
                           int n, int max_steps, Rng& rng, const RolloutOptions& options) {
  if (n < 2) throw std::invalid_argument("group size must be at least 2");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be at least 1");

  // Every replica owns a stream derived from one draw of the caller's rng, so
  // scheduling order cannot change any trajectory.
  const std::uint64_t phase_seed = rng();
  const std::size_t total = batch.size() * static_cast<std::size_t>(n);
  std::vector<Trajectory> slots(total);

  auto run = [&](std::size_t job) {
    const std::size_t task = job / static_cast<std::size_t>(n);
    const std::size_t replica = job % static_cast<std::size_t>(n);
    Rng stream(derive_seed({phase_seed, task, replica}));
    slots[job] = run_episode(batch[task], max_steps, stream, responder);
  };

  unsigned workers = options.threads ? options.threads : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(total)));
  if (!options.concurrent || workers == 1) {
    for (std::size_t job = 0; job < total; ++job) run(job);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t job = next++; job < total; job = next++) run(job);
        } catch (...) {
          errors[w] = std::current_exception();
          next = total;
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  RolloutBatch out;
  out.policy_version = options.policy_version;
  for (std::size_t task = 0; task < batch.size(); ++task) {
    TrajectoryGroup group;
    group.spec = batch[task];
    for (int j = 0; j < n; ++j) {
      auto& traj = slots[task * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
      group.rewards.push_back(traj.reward);
      group.trajectories.push_back(std::move(traj));
    }
    summarize_rewards(group);
    out.groups.push_back(std::move(group));
  }

  if (!options.log_dir.empty()) {
    std::filesystem::create_directories(options.log_dir);
    const std::string path =
        rollout_log_path(options.log_dir, options.policy_version, options.phase_index);
    std::ofstream log(path);
    if (!log) throw std::runtime_error("cannot write trajectory log: " + path);
    for (const auto& group : out.groups)
      for (const auto& traj : group.trajectories) log << trajectory_record(traj).dump() << "\n";
  }
  return out;
}

RolloutBatch group_rollout(const PolicyParams& params_old, const std::vector<TaskSpec>& batch,
                           int n, int max_steps, Rng& rng, const RolloutOptions& options) {
  return group_rollout(policy_responder(params_old, options.mode), batch, n, max_steps, rng,
                       options);
}

}  // namespace interplan
