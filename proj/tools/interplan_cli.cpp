#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "interplan/harness.hpp"

using namespace interplan;

namespace {

int run_train(const std::string& config_path, const std::optional<std::uint64_t>& seed) {
  RunConfig config = load_run_config(config_path);
  if (seed) config.schedule.master_seed = *seed;
  const TrainResult result = train(config);
  const MetricsRow& last = result.rows.back();
  std::printf("updates: %zu\nfinal mean reward: %.4f\n", result.rows.size(), last.mean_reward);
  if (last.eval_seen_rate && last.eval_unseen_rate)
    std::printf("eval seen: %.4f  unseen: %.4f\n", *last.eval_seen_rate, *last.eval_unseen_rate);
  std::printf("metrics: %s\ncheckpoint: %s\n", result.metrics_path.c_str(),
              result.final_checkpoint.c_str());
  return 0;
}

int run_eval(const EvalOptions& options, const std::string& checkpoint) {
  const PolicyParams params = load_checkpoint(checkpoint);
  const EvalResult result = evaluate(params, options);
  std::printf("split: %s  mode: %s  episodes: %d\n", to_string(options.split).c_str(),
              options.greedy ? "greedy" : "sample", result.episodes);
  std::printf("completion rate: %.4f\n", result.rate);
  for (const auto& [type, rate] : result.per_type_rate)
    std::printf("  %-9s %.4f (%d)\n", to_string(type).c_str(), rate,
                result.per_type_episodes.at(type));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive policy optimization for text household tasks"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "Train a policy from a run config");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  train_cmd->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", seed, "Override schedule.master_seed");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  std::string checkpoint, split_name = "seen", difficulty_name = "easy";
  EvalOptions eval_options;
  bool greedy = true;
  eval_cmd->add_option("--checkpoint", checkpoint, "Policy checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", split_name, "seen or unseen")->check(CLI::IsMember({"seen", "unseen"}));
  eval_cmd->add_flag("--greedy,!--sample", greedy, "Greedy choices (default) or seeded sampling");
  eval_cmd->add_option("--difficulty", difficulty_name, "easy or normal")
      ->check(CLI::IsMember({"easy", "normal"}));
  eval_cmd->add_option("--episodes", eval_options.episodes, "Number of evaluation tasks");
  eval_cmd->add_option("--seed", eval_options.seed, "Evaluation seed");

  auto* replay_cmd = app.add_subcommand("replay", "Re-execute a logged trajectory");
  std::string log_path;
  std::size_t index = 0;
  replay_cmd->add_option("--log", log_path, "Trajectory JSON Lines log")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--index", index, "Record index")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return run_train(config_path, seed);
    if (*eval_cmd) {
      eval_options.split = split_from_string(split_name);
      eval_options.difficulty = difficulty_from_string(difficulty_name);
      eval_options.greedy = greedy;
      return run_eval(eval_options, checkpoint);
    }
    if (*replay_cmd) {
      std::cout << replay(log_path, index);
      return 0;
    }
  } catch (const ReplayDivergence& e) {
    std::cerr << "replay divergence at turn " << e.turn() << ": " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
