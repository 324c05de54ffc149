#ifndef INTERPLAN_REACT_HPP_
#define INTERPLAN_REACT_HPP_

#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "interplan/env.hpp"

namespace interplan {

class ParseError : public std::runtime_error {
 public:
  enum class Kind { MissingActionMarker, EmptyAction };
  ParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class GrammarError : public std::runtime_error {
 public:
  GrammarError(std::string span, const std::string& what)
      : std::runtime_error(what), span_(std::move(span)) {}
  const std::string& span() const { return span_; }

 private:
  std::string span_;
};

// The discrete choices behind a sampled response; lets any parameter set
// re-score the response exactly.
struct ChoiceRecord {
  int thought = -1;
  int verb = -1;
  std::vector<std::string> args;

  bool operator==(const ChoiceRecord&) const = default;
};

struct StepResponse {
  std::string thought;
  std::string action_text;
  std::optional<ParsedAction> parsed;
  std::vector<double> token_log_probs;
  double total_log_prob = 0.0;
  std::optional<ChoiceRecord> choices;

  std::string text() const;  // "Thought: ...\nAction: ..."

  bool operator==(const StepResponse&) const = default;
};

struct Turn {
  StepResponse response;
  Observation observation;  // feedback for this response

  bool operator==(const Turn&) const = default;
};

// (q, o_0, m_0, o_1, ..., m_t, o_{t+1}): the instruction lives in spec.
struct Trajectory {
  TaskSpec spec;
  Observation initial_observation;
  std::vector<Turn> turns;
  double reward = 0.0;
  bool truncated = false;
  int invalid_count = 0;
  int max_steps = kDefaultMaxSteps;

  const Observation& last_observation() const {
    return turns.empty() ? initial_observation : turns.back().observation;
  }

  bool operator==(const Trajectory&) const = default;
};

// System segment shared by every prompt.
const std::string& system_prompt();

std::string format_prompt(const TaskSpec& spec, const Trajectory& trajectory);

struct ParsedResponse {
  std::string thought;
  std::string action_text;
};

ParsedResponse parse_response(const std::string& text);

ParsedAction parse_action(const std::string& action_text, const TaskSpec& spec);

// JSON Lines record for one trajectory.
nlohmann::json trajectory_record(const Trajectory& trajectory);

}  // namespace interplan

#endif  // INTERPLAN_REACT_HPP_
