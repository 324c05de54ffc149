#ifndef INTERPLAN_ROLLOUT_HPP_
#define INTERPLAN_ROLLOUT_HPP_

#include <functional>
#include <string>
#include <vector>

#include "interplan/env.hpp"
#include "interplan/policy.hpp"
#include "interplan/random.hpp"
#include "interplan/react.hpp"

namespace interplan {

// Produces the next response given the trajectory so far. Must be safe to
// call from several threads at once.
using Responder =
    std::function<StepResponse(const Trajectory& so_far, const TaskSpec& spec, Rng& rng)>;

Responder policy_responder(const PolicyParams& params, SampleMode mode = SampleMode::Sample);

struct TrajectoryGroup {
  TaskSpec spec;
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  double mean_reward = 0.0;
  double std_reward = 0.0;  // population
  std::vector<double> advantages;
};

struct RolloutBatch {
  std::vector<TrajectoryGroup> groups;
  std::string policy_version;
};

struct RolloutOptions {
  SampleMode mode = SampleMode::Sample;
  bool concurrent = true;
  unsigned threads = 0;  // 0 picks the hardware concurrency
  std::string policy_version = "0";
  std::string log_dir;  // trajectory JSON Lines are written here when non-empty
  long phase_index = 0;
};

// One environment replica driven to Done, goal completion or the budget.
Trajectory run_episode(const TaskSpec& spec, int max_steps, Rng& rng,
                       const Responder& responder);

Trajectory run_replica(const PolicyParams& params_old, const TaskSpec& spec, int max_steps,
                       Rng& rng, SampleMode mode = SampleMode::Sample);

RolloutBatch group_rollout(const Responder& responder, const std::vector<TaskSpec>& batch,
                           int n, int max_steps, Rng& rng, const RolloutOptions& options = {});

RolloutBatch group_rollout(const PolicyParams& params_old, const std::vector<TaskSpec>& batch,
                           int n, int max_steps, Rng& rng, const RolloutOptions& options = {});

// Population mean and standard deviation of the group's rewards.
void summarize_rewards(TrajectoryGroup& group);

std::string rollout_log_path(const std::string& dir, const std::string& policy_version,
                             long phase_index);

}  // namespace interplan

#endif  // INTERPLAN_ROLLOUT_HPP_
