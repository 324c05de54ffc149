#include "interplan/ipo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace interplan {

std::string to_string(DegenerateGroupMode mode) {
  return mode == DegenerateGroupMode::ZeroAdvantage ? "zero_advantage" : "skip_group";
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Ascent ? "ascent" : "adam";
}

DegenerateGroupMode degenerate_group_mode_from_string(const std::string& name) {
  if (name == "zero_advantage") return DegenerateGroupMode::ZeroAdvantage;
  if (name == "skip_group") return DegenerateGroupMode::SkipGroup;
  throw InvalidConfig("unknown degenerate group mode: " + name);
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "ascent") return OptimizerKind::Ascent;
  if (name == "adam") return OptimizerKind::Adam;
  throw InvalidConfig("unknown optimizer: " + name);
}

void IPOConfig::validate() const {
  if (!(epsilon > 0)) throw InvalidConfig("epsilon must be positive");
  if (!(beta >= 0)) throw InvalidConfig("beta must be non-negative");
  if (!(learning_rate > 0)) throw InvalidConfig("learning_rate must be positive");
  if (group_size < 2) throw InvalidConfig("group_size must be at least 2");
  if (batch_tasks < 1) throw InvalidConfig("batch_tasks must be at least 1");
  if (max_steps < 1) throw InvalidConfig("max_steps must be at least 1");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw InvalidConfig("adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0)) throw InvalidConfig("adam_epsilon must be positive");
}

double compute_reward(const Trajectory& trajectory, const TaskSpec& spec) {
  auto [state, initial] = reset(spec, trajectory.max_steps);
  for (const auto& turn : trajectory.turns) {
    if (state.terminated || state.step_count >= state.max_steps) break;
    const auto& action = turn.response.parsed;
    state = (action ? step(state, *action, spec) : step_unparsed(state, spec)).state;
  }
  return goal_check(state, spec) ? 1.0 : 0.0;
}

std::vector<double> compute_advantages(const TrajectoryGroup& group, DegenerateGroupMode mode) {
  const auto& r = group.rewards;
  if (r.size() < 2) throw std::invalid_argument("a group needs at least two rewards");
  // d_i = n*x_i - sum, so (x_i - mean) / sd == d_i / sqrt(mean(d^2)).
  const auto n = static_cast<double>(r.size());
  double sum = 0.0;
  for (double x : r) sum += x;
  std::vector<double> out;
  out.reserve(r.size());
  double ss = 0.0;
  for (double x : r) {
    out.push_back(n * x - sum);
    ss += out.back() * out.back();
  }
  const double scale = std::sqrt(ss / n);
  if (scale == 0.0) {
    if (mode == DegenerateGroupMode::SkipGroup)
      throw DegenerateGroup("all rewards in the group are equal for " + group.spec.task_id);
    return std::vector<double>(r.size(), 0.0);
  }
  for (double& d : out) d /= scale;
  return out;
}

int assign_advantages(RolloutBatch& batch, DegenerateGroupMode mode) {
  int skipped = 0;
  for (auto& group : batch.groups) {
    try {
      group.advantages = compute_advantages(group, mode);
    } catch (const DegenerateGroup&) {
      group.advantages.clear();
      ++skipped;
    }
  }
  return skipped;
}

double probability_ratio(const PolicyParams& params, const PolicyParams& params_old,
                         const Trajectory& trajectory, std::size_t t) {
  if (t >= trajectory.turns.size()) throw std::out_of_range("step index past the trajectory");
  const Trajectory before = prefix(trajectory, t);
  const auto& response = trajectory.turns[t].response;
  return std::exp(log_prob(params, before, response) - log_prob(params_old, before, response));
}

ObjectiveReport ipo_objective(const PolicyParams& params, const PolicyParams& params_old,
                              const PolicyParams& params_ref, const RolloutBatch& batch,
                              const IPOConfig& config) {
  ObjectiveReport report;
  report.gradient = Eigen::MatrixXd::Zero(params.feature_dim(), params.choice_vocab());
  int groups = 0;
  for (const auto& group : batch.groups)
    if (!group.advantages.empty()) ++groups;
  report.groups_used = groups;
  if (groups == 0) return report;

  int clipped = 0;
  const double lo = 1.0 - config.epsilon;
  const double hi = 1.0 + config.epsilon;
  for (const auto& group : batch.groups) {
    if (group.advantages.empty()) continue;
    if (group.advantages.size() != group.trajectories.size())
      throw std::invalid_argument("advantages do not match the group size");
    const double group_weight = 1.0 / (groups * static_cast<double>(group.trajectories.size()));
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      const Trajectory& traj = group.trajectories[i];
      if (traj.turns.empty()) continue;
      const double w = group_weight / static_cast<double>(traj.turns.size());
      const double advantage = group.advantages[i];
      const auto stages = trajectory_stages(traj);
      for (std::size_t t = 0; t < stages.size(); ++t) {
        const double lp_old = stages_log_prob(params_old, stages[t]);
        const double recorded = traj.turns[t].response.total_log_prob;
        if (std::abs(lp_old - recorded) > kRescoreTolerance * std::max(1.0, std::abs(recorded)))
          throw StaleBatch("recorded log-probability does not re-score under the old policy");
        const double lp = stages_log_prob(params, stages[t]);
        const double ratio = std::exp(lp - lp_old);
        const double unclipped = ratio * advantage;
        const double clipped_value = std::clamp(ratio, lo, hi) * advantage;
        const bool clip_active = clipped_value < unclipped;
        report.surrogate_term += w * std::min(unclipped, clipped_value);
        if (clip_active) {
          ++clipped;
        } else if (advantage != 0.0) {
          add_grad_log_prob(params, stages[t], w * advantage * ratio, report.gradient);
        }
        report.kl_term += w * stages_kl(params, params_ref, stages[t]);
        if (config.beta != 0.0)
          add_grad_kl(params, params_ref, stages[t], -config.beta * w, report.gradient);
        ++report.steps;
      }
    }
  }
  report.clip_fraction = report.steps ? static_cast<double>(clipped) / report.steps : 0.0;
  report.objective_value = report.surrogate_term - config.beta * report.kl_term;
  return report;
}

PolicyParams update_policy(const PolicyParams& params, const ObjectiveReport& report,
                           const IPOConfig& config, OptimizerState* state) {
  if (report.gradient.rows() != params.weights.rows() ||
      report.gradient.cols() != params.weights.cols())
    throw std::invalid_argument("gradient shape does not match the parameters");
  if (!report.gradient.allFinite()) throw NonFiniteGradient("objective gradient is not finite");
  PolicyParams next = params;
  if (config.optimizer == OptimizerKind::Ascent) {
    next.weights += config.learning_rate * report.gradient;
    return next;
  }
  if (!state) throw std::invalid_argument("adam needs an optimizer state");
  if (state->first_moment.size() == 0) {
    state->first_moment = Eigen::MatrixXd::Zero(params.weights.rows(), params.weights.cols());
    state->second_moment = state->first_moment;
  }
  ++state->step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  state->first_moment = b1 * state->first_moment + (1 - b1) * report.gradient;
  state->second_moment =
      b2 * state->second_moment + (1 - b2) * report.gradient.array().square().matrix();
  const double c1 = 1 - std::pow(b1, static_cast<double>(state->step));
  const double c2 = 1 - std::pow(b2, static_cast<double>(state->step));
  next.weights.array() += config.learning_rate * (state->first_moment.array() / c1) /
                          ((state->second_moment.array() / c2).sqrt() + config.adam_epsilon);
  return next;
}

namespace {

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  out << m.rows() << " " << m.cols() << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c);
    out << "\n";
  }
}

Eigen::MatrixXd read_matrix(std::istream& in) {
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> rows >> cols)) throw std::runtime_error("bad optimizer state");
  Eigen::MatrixXd m(rows, cols);
  std::string token;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(in >> token)) throw std::runtime_error("truncated optimizer state");
      m(r, c) = std::stod(token);
    }
  return m;
}

}  // namespace

void save_optimizer_state(const std::string& path, const OptimizerState& state) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write optimizer state: " + path);
  out << "interplan-optimizer 1\nstep " << state.step << "\n" << std::setprecision(17);
  write_matrix(out, state.first_moment);
  write_matrix(out, state.second_moment);
}

OptimizerState load_optimizer_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read optimizer state: " + path);
  std::string magic, key;
  int version = 0;
  OptimizerState state;
  in >> magic >> version >> key >> state.step;
  if (magic != "interplan-optimizer" || version != 1 || key != "step")
    throw std::runtime_error("not an optimizer state file: " + path);
  state.first_moment = read_matrix(in);
  state.second_moment = read_matrix(in);
  return state;
}

}  // namespace interplan
