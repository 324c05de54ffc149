#ifndef INTERPLAN_HARNESS_HPP_
#define INTERPLAN_HARNESS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "interplan/env.hpp"
#include "interplan/ipo.hpp"
#include "interplan/policy.hpp"

namespace interplan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingStarved : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ReplayDivergence : public std::runtime_error {
 public:
  ReplayDivergence(int turn, const std::string& what) : std::runtime_error(what), turn_(turn) {}
  int turn() const { return turn_; }  // -1 for the initial observation

 private:
  int turn_;
};

// Inclusive seed range; only seeds whose layout belongs to `split` are drawn.
struct SeedPool {
  std::uint64_t first = 0;
  std::uint64_t last = 0;
  Split split = Split::Seen;

  std::uint64_t draw(Rng& rng) const;
  bool overlaps(const SeedPool& other) const;
};

struct EnvConfig {
  std::vector<TaskType> task_types = {TaskType::Pick,  TaskType::Look,  TaskType::Heat,
                                      TaskType::Cool,  TaskType::Clean, TaskType::PickTwo};
  Difficulty difficulty = Difficulty::Easy;
  SeedPool seen_pool{0, 999999, Split::Seen};
  SeedPool unseen_pool{0, 999999, Split::Unseen};
};

struct ScheduleConfig {
  int total_updates = 500;
  int eval_every = 25;  // 0 evaluates only after the last update
  std::uint64_t master_seed = 1;
  int eval_episodes = 64;
  int starvation_limit = 50;
};

struct LoggingConfig {
  std::string output_dir = "runs/default";
  std::string metrics_path;  // defaults to <output_dir>/metrics.csv
  bool trajectory_log = false;
  int checkpoint_every = 100;  // 0 keeps only the final checkpoint
};

struct RunConfig {
  IPOConfig ipo;
  EnvConfig env;
  ScheduleConfig schedule;
  LoggingConfig logging;
  unsigned threads = 0;

  void validate() const;
};

// Flat "section.key = value" text; '#' starts a comment.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string format_run_config(const RunConfig& config);

struct MetricsRow {
  long update_index = 0;
  double mean_reward = 0.0;
  double mean_response_length = 0.0;  // sampled choices per trajectory
  double mean_response_chars = 0.0;   // rendered response characters per trajectory
  double mean_total_steps = 0.0;
  double mean_invalid_steps = 0.0;
  double clip_fraction = 0.0;
  double kl_term = 0.0;
  std::optional<double> eval_seen_rate;
  std::optional<double> eval_unseen_rate;
  std::optional<double> generalization_gap;
  double objective_value = 0.0;
  double surrogate_term = 0.0;
  int skipped_groups = 0;
};

const std::string& metrics_header();
std::string format_metrics_row(const MetricsRow& row);

struct TrainResult {
  PolicyParams params;
  std::string final_checkpoint;
  std::string metrics_path;
  std::vector<MetricsRow> rows;
  std::vector<std::string> trajectory_logs;
};

// The K training tasks of one update: types rotate through the configured
// list, seeds come from the Seen pool.
std::vector<TaskSpec> sample_training_tasks(const RunConfig& config, long update_index);

TrainResult train(const RunConfig& config);

struct EvalResult {
  double rate = 0.0;
  int episodes = 0;
  std::map<TaskType, double> per_type_rate;
  std::map<TaskType, int> per_type_episodes;
};

struct EvalOptions {
  Split split = Split::Seen;
  int episodes = 64;
  bool greedy = true;
  Difficulty difficulty = Difficulty::Easy;
  std::vector<TaskType> task_types = EnvConfig{}.task_types;
  SeedPool pool{0, 999999, Split::Seen};
  std::uint64_t seed = 1;
  int max_steps = kDefaultMaxSteps;
};

// Evaluation tasks for a split, balanced across task types.
std::vector<TaskSpec> evaluation_tasks(const EvalOptions& options);

EvalResult evaluate(const Responder& responder, const EvalOptions& options);
EvalResult evaluate(const PolicyParams& params, const EvalOptions& options);

// Re-executes record `index` of a trajectory log and returns its transcript.
std::string replay(const std::string& log_path, std::size_t index);
std::string replay_record(const std::string& json_line);

std::size_t count_records(const std::string& log_path);

}  // namespace interplan

#endif  // INTERPLAN_HARNESS_HPP_
