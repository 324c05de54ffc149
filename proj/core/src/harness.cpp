#include "interplan/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "interplan/rollout.hpp"

namespace interplan {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !in.eof()) throw ConfigError("bad value for " + key + ": " + value);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  throw ConfigError("bad boolean for " + key + ": " + value);
}

SeedPool parse_pool(const std::string& key, const std::string& value, Split split) {
  const auto dots = value.find("..");
  if (dots == std::string::npos) throw ConfigError(key + " must look like FIRST..LAST");
  SeedPool pool;
  pool.first = parse_number<std::uint64_t>(key, trim(value.substr(0, dots)));
  pool.last = parse_number<std::uint64_t>(key, trim(value.substr(dots + 2)));
  pool.split = split;
  return pool;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_optional(const std::optional<double>& x) {
  return x ? format_double(*x) : std::string();
}

std::string join_types(const std::vector<TaskType>& types) {
  std::string out;
  for (std::size_t i = 0; i < types.size(); ++i) out += (i ? "," : "") + to_string(types[i]);
  return out;
}

struct EpisodeJob {
  TaskSpec spec;
  std::uint64_t seed;
};

EvalResult run_evaluation(const Responder& responder, const std::vector<EpisodeJob>& jobs,
                          int max_steps) {
  EvalResult result;
  std::map<TaskType, int> successes;
  int total = 0;
  for (const auto& job : jobs) {
    Rng rng(job.seed);
    const Trajectory traj = run_episode(job.spec, max_steps, rng, responder);
    const bool ok = traj.reward > 0.0;
    total += ok;
    successes[job.spec.task_type] += ok;
    ++result.per_type_episodes[job.spec.task_type];
  }
  result.episodes = static_cast<int>(jobs.size());
  result.rate = jobs.empty() ? 0.0 : static_cast<double>(total) / jobs.size();
  for (const auto& [type, count] : result.per_type_episodes)
    result.per_type_rate[type] = static_cast<double>(successes[type]) / count;
  return result;
}

std::vector<EpisodeJob> evaluation_jobs(const EvalOptions& options) {
  std::vector<EpisodeJob> jobs;
  const auto specs = evaluation_tasks(options);
  for (std::size_t i = 0; i < specs.size(); ++i)
    jobs.push_back({specs[i], derive_seed({options.seed, 0x5a3e, static_cast<std::uint64_t>(
                                                                     options.split), i})});
  return jobs;
}

}  // namespace

std::uint64_t SeedPool::draw(Rng& rng) const {
  const std::uint64_t width = last - first + 1;
  for (;;) {
    const std::uint64_t seed = first + (width == 0 ? rng() : rng() % width);
    if (split_of(seed) == split) return seed;
  }
}

bool SeedPool::overlaps(const SeedPool& other) const {
  if (split != other.split) return false;
  return first <= other.last && other.first <= last;
}

void RunConfig::validate() const {
  ipo.validate();
  if (env.task_types.empty()) throw ConfigError("env.task_types is empty");
  for (const SeedPool* pool : {&env.seen_pool, &env.unseen_pool}) {
    if (pool->last < pool->first) throw ConfigError("seed pool range is reversed");
    bool found = false;
    for (std::uint64_t s = pool->first; s <= pool->last && s < pool->first + kNumLayouts; ++s)
      found = found || split_of(s) == pool->split;
    if (!found) throw ConfigError("seed pool holds no seed of its split");
  }
  if (env.seen_pool.split != Split::Seen || env.unseen_pool.split != Split::Unseen ||
      env.seen_pool.overlaps(env.unseen_pool))
    throw ConfigError("Seen and Unseen seed pools must be disjoint");
  if (schedule.total_updates < 1) throw ConfigError("schedule.total_updates must be positive");
  if (schedule.eval_every < 0) throw ConfigError("schedule.eval_every must be non-negative");
  if (schedule.eval_episodes < 1) throw ConfigError("schedule.eval_episodes must be positive");
  if (schedule.starvation_limit < 1) throw ConfigError("schedule.starvation_limit must be positive");
  if (logging.checkpoint_every < 0) throw ConfigError("logging.checkpoint_every must be non-negative");
  if (logging.output_dir.empty()) throw ConfigError("logging.output_dir is empty");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "ipo.epsilon") c.ipo.epsilon = parse_number<double>(key, value);
      else if (key == "ipo.beta") c.ipo.beta = parse_number<double>(key, value);
      else if (key == "ipo.learning_rate") c.ipo.learning_rate = parse_number<double>(key, value);
      else if (key == "ipo.group_size") c.ipo.group_size = parse_number<int>(key, value);
      else if (key == "ipo.batch_tasks") c.ipo.batch_tasks = parse_number<int>(key, value);
      else if (key == "ipo.max_steps") c.ipo.max_steps = parse_number<int>(key, value);
      else if (key == "ipo.gamma") c.ipo.gamma = parse_number<double>(key, value);
      else if (key == "ipo.degenerate_group_mode")
        c.ipo.degenerate_group_mode = degenerate_group_mode_from_string(value);
      else if (key == "ipo.optimizer") c.ipo.optimizer = optimizer_from_string(value);
      else if (key == "ipo.adam_beta1") c.ipo.adam_beta1 = parse_number<double>(key, value);
      else if (key == "ipo.adam_beta2") c.ipo.adam_beta2 = parse_number<double>(key, value);
      else if (key == "ipo.adam_epsilon") c.ipo.adam_epsilon = parse_number<double>(key, value);
      else if (key == "env.task_types") {
        c.env.task_types.clear();
        std::istringstream items(value);
        std::string item;
        while (std::getline(items, item, ',')) c.env.task_types.push_back(task_type_from_string(trim(item)));
      } else if (key == "env.difficulty") c.env.difficulty = difficulty_from_string(value);
      else if (key == "env.seen_seeds") c.env.seen_pool = parse_pool(key, value, Split::Seen);
      else if (key == "env.unseen_seeds") c.env.unseen_pool = parse_pool(key, value, Split::Unseen);
      else if (key == "schedule.total_updates") c.schedule.total_updates = parse_number<int>(key, value);
      else if (key == "schedule.eval_every") c.schedule.eval_every = parse_number<int>(key, value);
      else if (key == "schedule.master_seed")
        c.schedule.master_seed = parse_number<std::uint64_t>(key, value);
      else if (key == "schedule.eval_episodes") c.schedule.eval_episodes = parse_number<int>(key, value);
      else if (key == "schedule.starvation_limit")
        c.schedule.starvation_limit = parse_number<int>(key, value);
      else if (key == "logging.output_dir") c.logging.output_dir = value;
      else if (key == "logging.metrics_path") c.logging.metrics_path = value;
      else if (key == "logging.trajectory_log") c.logging.trajectory_log = parse_bool(key, value);
      else if (key == "logging.checkpoint_every")
        c.logging.checkpoint_every = parse_number<int>(key, value);
      else if (key == "rollout.threads") c.threads = parse_number<unsigned>(key, value);
      else throw ConfigError("unknown key: " + key);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream out;
  out << "ipo.epsilon = " << format_double(c.ipo.epsilon) << "\n"
      << "ipo.beta = " << format_double(c.ipo.beta) << "\n"
      << "ipo.learning_rate = " << format_double(c.ipo.learning_rate) << "\n"
      << "ipo.group_size = " << c.ipo.group_size << "\n"
      << "ipo.batch_tasks = " << c.ipo.batch_tasks << "\n"
      << "ipo.max_steps = " << c.ipo.max_steps << "\n"
      << "ipo.gamma = " << format_double(c.ipo.gamma) << "\n"
      << "ipo.degenerate_group_mode = " << to_string(c.ipo.degenerate_group_mode) << "\n"
      << "ipo.optimizer = " << to_string(c.ipo.optimizer) << "\n"
      << "ipo.adam_beta1 = " << format_double(c.ipo.adam_beta1) << "\n"
      << "ipo.adam_beta2 = " << format_double(c.ipo.adam_beta2) << "\n"
      << "ipo.adam_epsilon = " << format_double(c.ipo.adam_epsilon) << "\n"
      << "env.task_types = " << join_types(c.env.task_types) << "\n"
      << "env.difficulty = " << to_string(c.env.difficulty) << "\n"
      << "env.seen_seeds = " << c.env.seen_pool.first << ".." << c.env.seen_pool.last << "\n"
      << "env.unseen_seeds = " << c.env.unseen_pool.first << ".." << c.env.unseen_pool.last << "\n"
      << "schedule.total_updates = " << c.schedule.total_updates << "\n"
      << "schedule.eval_every = " << c.schedule.eval_every << "\n"
      << "schedule.master_seed = " << c.schedule.master_seed << "\n"
      << "schedule.eval_episodes = " << c.schedule.eval_episodes << "\n"
      << "schedule.starvation_limit = " << c.schedule.starvation_limit << "\n"
      << "logging.output_dir = " << c.logging.output_dir << "\n";
  if (!c.logging.metrics_path.empty()) out << "logging.metrics_path = " << c.logging.metrics_path << "\n";
  out << "logging.trajectory_log = " << (c.logging.trajectory_log ? "true" : "false") << "\n"
      << "logging.checkpoint_every = " << c.logging.checkpoint_every << "\n"
      << "rollout.threads = " << c.threads << "\n";
  return out.str();
}

const std::string& metrics_header() {
  static const std::string header =
      "update_index,mean_reward,mean_response_length,mean_response_chars,mean_total_steps,"
      "mean_invalid_steps,clip_fraction,kl_term,eval_seen_rate,eval_unseen_rate,"
      "generalization_gap,objective_value,surrogate_term,skipped_groups";
  return header;
}

std::string format_metrics_row(const MetricsRow& r) {
  return std::to_string(r.update_index) + "," + format_double(r.mean_reward) + "," +
         format_double(r.mean_response_length) + "," + format_double(r.mean_response_chars) + "," +
         format_double(r.mean_total_steps) + "," + format_double(r.mean_invalid_steps) + "," +
         format_double(r.clip_fraction) + "," + format_double(r.kl_term) + "," +
         format_optional(r.eval_seen_rate) + "," + format_optional(r.eval_unseen_rate) + "," +
         format_optional(r.generalization_gap) + "," + format_double(r.objective_value) + "," +
         format_double(r.surrogate_term) + "," + std::to_string(r.skipped_groups);
}

std::vector<TaskSpec> sample_training_tasks(const RunConfig& config, long update_index) {
  Rng rng(derive_seed({config.schedule.master_seed, 0x7a5c, static_cast<std::uint64_t>(update_index)}));
  const auto& types = config.env.task_types;
  std::vector<TaskSpec> out;
  for (int k = 0; k < config.ipo.batch_tasks; ++k) {
    const std::size_t slot =
        (static_cast<std::size_t>(update_index) * config.ipo.batch_tasks + k) % types.size();
    const std::uint64_t seed = config.env.seen_pool.draw(rng);
    out.push_back(
        generate_task(seed, types[slot], config.env.difficulty, config.ipo.max_steps).spec);
  }
  return out;
}

std::vector<TaskSpec> evaluation_tasks(const EvalOptions& options) {
  Rng rng(derive_seed({options.seed, 0xe7a1, static_cast<std::uint64_t>(options.split)}));
  SeedPool pool = options.pool;
  pool.split = options.split;
  std::vector<TaskSpec> out;
  for (int i = 0; i < options.episodes; ++i) {
    const TaskType type = options.task_types[static_cast<std::size_t>(i) % options.task_types.size()];
    out.push_back(generate_task(pool.draw(rng), type, options.difficulty, options.max_steps).spec);
  }
  return out;
}

EvalResult evaluate(const Responder& responder, const EvalOptions& options) {
  return run_evaluation(responder, evaluation_jobs(options), options.max_steps);
}

EvalResult evaluate(const PolicyParams& params, const EvalOptions& options) {
  return evaluate(
      policy_responder(params, options.greedy ? SampleMode::Greedy : SampleMode::Sample), options);
}

TrainResult train(const RunConfig& config) {
  config.validate();
  const fs::path dir(config.logging.output_dir);
  const fs::path checkpoints = dir / "checkpoints";
  fs::create_directories(checkpoints);
  {
    std::ofstream copy(dir / "config.conf");
    copy << format_run_config(config);
  }

  TrainResult result;
  result.metrics_path =
      config.logging.metrics_path.empty() ? (dir / "metrics.csv").string() : config.logging.metrics_path;
  if (const auto parent = fs::path(result.metrics_path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream metrics(result.metrics_path);
  if (!metrics) throw std::runtime_error("cannot write metrics: " + result.metrics_path);
  metrics << metrics_header() << "\n";

  PolicyParams params = PolicyParams::zeros();
  const PolicyParams reference = params;
  save_checkpoint((checkpoints / "policy-0.txt").string(), params, 0);
  OptimizerState optimizer;

  auto eval_jobs = [&](Split split) {
    EvalOptions options;
    options.split = split;
    options.episodes = config.schedule.eval_episodes;
    options.difficulty = config.env.difficulty;
    options.task_types = config.env.task_types;
    options.pool = split == Split::Seen ? config.env.seen_pool : config.env.unseen_pool;
    options.seed = derive_seed({config.schedule.master_seed, 0xe7});
    options.max_steps = kDefaultMaxSteps;
    return evaluation_jobs(options);
  };
  const auto seen_jobs = eval_jobs(Split::Seen);
  const auto unseen_jobs = eval_jobs(Split::Unseen);

  int zero_streak = 0;
  const int total = config.schedule.total_updates;
  for (long u = 0; u < total; ++u) {
    const auto specs = sample_training_tasks(config, u);
    Rng rollout_rng(derive_seed({config.schedule.master_seed, 0x2011, static_cast<std::uint64_t>(u)}));
    RolloutOptions options;
    options.threads = config.threads;
    options.policy_version = std::to_string(u);
    options.phase_index = u;
    if (config.logging.trajectory_log) options.log_dir = (dir / "trajectories").string();
    RolloutBatch batch = group_rollout(params, specs, config.ipo.group_size, config.ipo.max_steps,
                                       rollout_rng, options);
    if (!options.log_dir.empty())
      result.trajectory_logs.push_back(rollout_log_path(options.log_dir, options.policy_version, u));

    MetricsRow row;
    row.update_index = u;
    int trajectories = 0, successes = 0;
    for (auto& group : batch.groups) {
      for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
        auto& traj = group.trajectories[i];
        traj.reward = compute_reward(traj, group.spec);
        group.rewards[i] = traj.reward;
        successes += traj.reward > 0.0;
        ++trajectories;
        row.mean_reward += traj.reward;
        row.mean_total_steps += static_cast<double>(traj.turns.size());
        row.mean_invalid_steps += traj.invalid_count;
        for (const auto& turn : traj.turns) {
          row.mean_response_length += static_cast<double>(turn.response.token_log_probs.size());
          row.mean_response_chars += static_cast<double>(turn.response.text().size());
        }
      }
      summarize_rewards(group);
    }
    for (double* x : {&row.mean_reward, &row.mean_total_steps, &row.mean_invalid_steps,
                      &row.mean_response_length, &row.mean_response_chars})
      *x /= trajectories;

    row.skipped_groups = assign_advantages(batch, config.ipo.degenerate_group_mode);
    const ObjectiveReport report = ipo_objective(params, params, reference, batch, config.ipo);
    row.clip_fraction = report.clip_fraction;
    row.kl_term = report.kl_term;
    row.objective_value = report.objective_value;
    row.surrogate_term = report.surrogate_term;
    params = update_policy(params, report, config.ipo, &optimizer);

    const long applied = u + 1;
    const bool last = applied == total;
    const int every = config.schedule.eval_every;
    if (last || (every > 0 && applied % every == 0)) {
      const Responder greedy = policy_responder(params, SampleMode::Greedy);
      row.eval_seen_rate = run_evaluation(greedy, seen_jobs, kDefaultMaxSteps).rate;
      row.eval_unseen_rate = run_evaluation(greedy, unseen_jobs, kDefaultMaxSteps).rate;
      row.generalization_gap = *row.eval_unseen_rate - *row.eval_seen_rate;
    }
    metrics << format_metrics_row(row) << "\n" << std::flush;
    result.rows.push_back(row);

    if (config.logging.checkpoint_every > 0 && applied % config.logging.checkpoint_every == 0)
      save_checkpoint((checkpoints / ("policy-" + std::to_string(applied) + ".txt")).string(),
                      params, applied);

    zero_streak = successes == 0 ? zero_streak + 1 : 0;
    if (zero_streak >= config.schedule.starvation_limit)
      throw TrainingStarved("no successful trajectory in " + std::to_string(zero_streak) +
                            " consecutive updates (through update " + std::to_string(u) +
                            "); the sparse reward gives no learning signal");
  }

  result.final_checkpoint = (checkpoints / "policy-final.txt").string();
  save_checkpoint(result.final_checkpoint, params, total);
  if (config.ipo.optimizer == OptimizerKind::Adam)
    save_optimizer_state((checkpoints / "optimizer-final.txt").string(), optimizer);
  result.params = std::move(params);
  return result;
}

std::string replay_record(const std::string& json_line) {
  const auto record = nlohmann::json::parse(json_line);
  const auto seed = record.at("seed").get<std::uint64_t>();
  const TaskType type = task_type_from_string(record.at("task_type").get<std::string>());
  const Difficulty difficulty = difficulty_from_string(record.at("difficulty").get<std::string>());
  const int max_steps = record.at("max_steps").get<int>();
  const TaskSpec spec = generate_task(seed, type, difficulty, max_steps).spec;
  if (spec.task_id != record.at("task_id").get<std::string>() ||
      spec.variant != record.at("variant").get<int>())
    throw ReplayDivergence(-1, "regenerated task differs from the logged task");

  auto [state, initial] = reset(spec, max_steps);
  const std::string logged_initial = record.at("initial_obs").get<std::string>();
  if (initial.text != logged_initial)
    throw ReplayDivergence(-1, "initial observation differs:\n  logged: " + logged_initial +
                                   "\n  replay: " + initial.text);

  std::string transcript = "Task: " + spec.instruction + "\nObservation: " + initial.text + "\n";
  const auto& turns = record.at("turns");
  bool done = false;
  int turn_index = 0;
  for (const auto& turn : turns) {
    if (done) throw ReplayDivergence(turn_index, "log continues after the episode ended");
    StepResponse response;
    response.thought = turn.at("thought").get<std::string>();
    response.action_text = turn.at("action").get<std::string>();
    std::optional<ParsedAction> action;
    try {
      action = parse_action(parse_response(response.text()).action_text, spec);
    } catch (const ParseError&) {
    } catch (const GrammarError&) {
    }
    StepResult result = action ? step(state, *action, spec) : step_unparsed(state, spec);
    const std::string logged = turn.at("obs").get<std::string>();
    if (result.observation.text != logged || result.observation.valid != turn.at("valid").get<bool>())
      throw ReplayDivergence(turn_index, "turn " + std::to_string(turn_index) +
                                             " observation differs:\n  logged: " + logged +
                                             "\n  replay: " + result.observation.text);
    transcript += response.text() + "\nObservation: " + result.observation.text + "\n";
    state = std::move(result.state);
    done = result.done;
    ++turn_index;
  }
  if (!done) throw ReplayDivergence(turn_index, "log ends before the episode ended");
  const double reward = goal_check(state, spec) ? 1.0 : 0.0;
  if (reward != record.at("reward").get<double>())
    throw ReplayDivergence(turn_index, "final reward differs from the logged reward");
  transcript += "Reward: " + format_double(reward) + "\n";
  return transcript;
}

std::string replay(const std::string& log_path, std::size_t index) {
  std::ifstream in(log_path);
  if (!in) throw std::runtime_error("cannot read trajectory log: " + log_path);
  std::string line;
  for (std::size_t i = 0; std::getline(in, line); ++i)
    if (i == index) return replay_record(line);
  throw std::out_of_range("log has no record " + std::to_string(index));
}

std::size_t count_records(const std::string& log_path) {
  std::ifstream in(log_path);
  if (!in) throw std::runtime_error("cannot read trajectory log: " + log_path);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace interplan
