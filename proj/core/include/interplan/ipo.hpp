#ifndef INTERPLAN_IPO_HPP_
#define INTERPLAN_IPO_HPP_

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "interplan/policy.hpp"
#include "interplan/react.hpp"
#include "interplan/rollout.hpp"

namespace interplan {

class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised for a zero-variance group under SkipGroup; callers drop the group.
class DegenerateGroup : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StaleBatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DegenerateGroupMode { ZeroAdvantage, SkipGroup };
enum class OptimizerKind { Ascent, Adam };

std::string to_string(DegenerateGroupMode mode);
std::string to_string(OptimizerKind kind);
DegenerateGroupMode degenerate_group_mode_from_string(const std::string& name);
OptimizerKind optimizer_from_string(const std::string& name);

struct IPOConfig {
  double epsilon = 0.2;
  double beta = 0.01;
  double learning_rate = 0.05;
  int group_size = 5;
  int batch_tasks = 16;
  int max_steps = kDefaultMaxSteps;
  double gamma = 1.0;  // kept for completeness; rewards are undiscounted
  DegenerateGroupMode degenerate_group_mode = DegenerateGroupMode::ZeroAdvantage;
  OptimizerKind optimizer = OptimizerKind::Ascent;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

struct ObjectiveReport {
  double objective_value = 0.0;
  double surrogate_term = 0.0;
  double kl_term = 0.0;
  double clip_fraction = 0.0;
  Eigen::MatrixXd gradient;
  int steps = 0;
  int groups_used = 0;
};

// Re-simulates the recorded actions from the spec's start state and checks the goal.
double compute_reward(const Trajectory& trajectory, const TaskSpec& spec);

std::vector<double> compute_advantages(const TrajectoryGroup& group, DegenerateGroupMode mode);

// Fills every group's advantages; skipped groups are left empty. Returns the
// number of skipped groups.
int assign_advantages(RolloutBatch& batch, DegenerateGroupMode mode);

double probability_ratio(const PolicyParams& params, const PolicyParams& params_old,
                         const Trajectory& trajectory, std::size_t t);

// Tolerance for re-scoring a recorded log-probability.
inline constexpr double kRescoreTolerance = 1e-12;

ObjectiveReport ipo_objective(const PolicyParams& params, const PolicyParams& params_old,
                              const PolicyParams& params_ref, const RolloutBatch& batch,
                              const IPOConfig& config);

struct OptimizerState {
  long step = 0;
  Eigen::MatrixXd first_moment;
  Eigen::MatrixXd second_moment;
};

PolicyParams update_policy(const PolicyParams& params, const ObjectiveReport& report,
                           const IPOConfig& config, OptimizerState* state = nullptr);

void save_optimizer_state(const std::string& path, const OptimizerState& state);
OptimizerState load_optimizer_state(const std::string& path);

}  // namespace interplan

#endif  // INTERPLAN_IPO_HPP_
