#ifndef INTERPLAN_TESTS_SUPPORT_HPP_
#define INTERPLAN_TESTS_SUPPORT_HPP_

// Reference computations the tests compare the library against. Nothing in
// here calls the code path it is used to check.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "interplan/env.hpp"
#include "interplan/policy.hpp"
#include "interplan/random.hpp"
#include "interplan/react.hpp"
#include "interplan/rollout.hpp"

namespace interplan::testing {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double population_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Softmax over candidates spelled out from the weight matrix entry by entry.
inline std::vector<double> explicit_probs(const Eigen::MatrixXd& w, const Stage& stage) {
  std::vector<double> logits;
  for (const auto& columns : stage.descriptors) {
    double z = 0.0;
    for (int k : columns)
      for (Eigen::Index r = 0; r < w.rows(); ++r) z += w(r, k) * stage.features(r);
    logits.push_back(z);
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& z : logits) total += (z = std::exp(z - top));
  for (double& z : logits) z /= total;
  return logits;
}

inline double explicit_log_prob(const PolicyParams& params, const Trajectory& prefix,
                                const StepResponse& response) {
  double lp = 0.0;
  for (const auto& s : stages_for(memory_of(prefix), *response.choices))
    lp += std::log(explicit_probs(params.weights, s)[static_cast<std::size_t>(s.chosen)]);
  return lp;
}

inline PolicyParams random_params(std::uint64_t seed, double scale) {
  PolicyParams p = PolicyParams::zeros();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = normal(rng);
  return p;
}

// A fully scored response for a chosen action, with the fixed thought 0.
inline StepResponse scripted_response(const PolicyParams& params, const Trajectory& so_far,
                                      const ParsedAction& action) {
  const AgentMemory memory = memory_of(so_far);
  StepResponse r;
  r.thought = thought_text(0, memory);
  r.action_text = render_action(action);
  r.parsed = action;
  r.choices = ChoiceRecord{0, static_cast<int>(action.verb), action.args};
  for (const auto& s : stages_for(memory, *r.choices)) {
    r.token_log_probs.push_back(stages_log_prob(params, {s}));
    r.total_log_prob += r.token_log_probs.back();
  }
  return r;
}

inline std::vector<ParsedAction> oracle_plan(const TaskSpec& spec) {
  const auto plan = solve(reset(spec).first, spec, kDefaultMaxSteps);
  return plan ? *plan : std::vector<ParsedAction>{};
}

// Follows the breadth-first plan from the task's start state, then declares Done.
inline Responder plan_responder(const PolicyParams& params) {
  return [params](const Trajectory& so_far, const TaskSpec& spec, Rng&) {
    const auto plan = oracle_plan(spec);
    Trajectory conditioned = so_far;
    conditioned.spec = spec;
    if (so_far.turns.size() < plan.size())
      return scripted_response(params, conditioned, plan[so_far.turns.size()]);
    return scripted_response(params, conditioned, ParsedAction{Verb::Done, {}});
  };
}

struct ReferenceParse {
  enum class Outcome { Ok, MissingActionMarker, EmptyAction };
  Outcome outcome = Outcome::Ok;
  std::string thought;
  std::string action_text;
};

inline std::string regex_trim(const std::string& s) {
  static const std::regex edges(R"(^\s+|\s+$)");
  return std::regex_replace(s, edges, "");
}

inline ReferenceParse regex_parse(const std::string& text) {
  static const std::regex last_action(
      R"(Action:((?:(?!Action:)[^\n])*)(?:(?!Action:)[\s\S])*$)");
  static const std::regex last_thought(R"(Thought:((?:(?!Thought:)[\s\S])*)$)");
  ReferenceParse out;
  std::smatch m;
  if (!std::regex_search(text, m, last_action)) {
    out.outcome = ReferenceParse::Outcome::MissingActionMarker;
    return out;
  }
  out.action_text = regex_trim(m[1].str());
  if (out.action_text.empty()) {
    out.outcome = ReferenceParse::Outcome::EmptyAction;
    return out;
  }
  const std::string head = text.substr(0, static_cast<std::size_t>(m.position(0)));
  std::smatch t;
  if (std::regex_search(head, t, last_thought)) out.thought = regex_trim(t[1].str());
  return out;
}

// Goal predicate written out per task type from the task description.
inline bool reference_goal(const WorldState& s, const TaskSpec& spec) {
  auto processed = [&](const Object& o) {
    switch (spec.task_type) {
      case TaskType::Heat: return o.thermal == Thermal::Heated;
      case TaskType::Cool: return o.thermal == Thermal::Cooled;
      case TaskType::Clean: return o.clean;
      default: return true;
    }
  };
  if (spec.task_type == TaskType::Look) {
    return std::any_of(s.objects.begin(), s.objects.end(), [&](const auto& kv) {
      return kv.second.kind == spec.target_kind && kv.second.inspected;
    });
  }
  int placed = 0;
  for (const auto& [rid, r] : s.receptacles) {
    if (r.kind != spec.destination_kind) continue;
    for (const auto& id : r.contents) {
      const Object& o = s.objects.at(id);
      if (o.kind == spec.target_kind && processed(o)) ++placed;
    }
  }
  return placed >= (spec.task_type == TaskType::PickTwo ? 2 : 1);
}

inline std::vector<TaskType> all_task_types() {
  return {TaskType::Pick, TaskType::Look, TaskType::Heat,
          TaskType::Cool, TaskType::Clean, TaskType::PickTwo};
}

}  // namespace interplan::testing

#endif  // INTERPLAN_TESTS_SUPPORT_HPP_
