#include "interplan/react.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace interplan {

namespace {

constexpr const char* kThoughtMarker = "Thought:";
constexpr const char* kActionMarker = "Action:";

std::string trim(const std::string& s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto begin = std::find_if_not(s.begin(), s.end(), is_space);
  auto end = std::find_if_not(s.rbegin(), s.rend(), is_space).base();
  return begin < end ? std::string(begin, end) : std::string();
}

std::string normalize(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

std::string resolve(const std::string& entity, const TaskSpec& spec) {
  if (entity.empty()) throw GrammarError(entity, "missing argument");
  if (!std::binary_search(spec.entities.begin(), spec.entities.end(), entity))
    throw GrammarError(entity, "unknown entity: " + entity);
  return entity;
}

const char* const kFormatReminder =
    "Your response should use the following format:\n"
    "Thought: <your thoughts>\n"
    "Action: <your next action>\n";

}  // namespace

std::string StepResponse::text() const {
  return std::string(kThoughtMarker) + " " + thought + "\n" + kActionMarker + " " + action_text;
}

const std::string& system_prompt() {
  static const std::string prompt =
      "You are an intelligent agent in a household environment and your target is to "
      "perform actions to complete the task goal. At the beginning of your interactions, "
      "you will be given the detailed description of the current environment and your "
      "goal to accomplish.\n"
      "For each of your turn, you will be given the observation of the last turn. You "
      "should first think about the current condition and plan for your future actions, "
      "and then output your action in this turn. Your output must strictly follow this "
      "format: Thought: <your thoughts> ; Action: <your next action>.\n"
      "The available actions are:\n"
      "1. go to (receptacle)\n"
      "2. open (receptacle)\n"
      "3. close (receptacle)\n"
      "4. take (object)\n"
      "5. put (object) in (receptacle)\n"
      "6. heat (object)\n"
      "7. cool (object)\n"
      "8. clean (object)\n"
      "9. examine (object)\n"
      "10. inventory: check your current inventory\n"
      "11. done: indicate that you believe the task is complete\n"
      "Where (object) refers to manipulable objects and (receptacle) refers to "
      "receptacles or locations. In some houses you must walk through rooms: go to "
      "(room) moves you to an adjacent room.\n"
      "After your each turn, the environment will give you immediate feedback based on "
      "which you plan your next few steps. If the environment outputs: Nothing happens, "
      "that means the previous action is invalid and you should try more options.\n"
      "You can only hold one object at a time. Before taking a new object, make sure you "
      "have placed down any object you are currently holding.\n"
      "You should not assume or anticipate the feedback. Even if you have planned "
      "multiple steps ahead, you should only execute one action at a time.\n"
      "Do not proceed with any further exploration or actions until you receive the "
      "feedback from the environment after your action.\n";
  return prompt;
}

std::string format_prompt(const TaskSpec& spec, const Trajectory& trajectory) {
  std::string out = system_prompt();
  out += "\nYour task is to: " + spec.instruction + "\n";
  auto observation_block = [&out](const Observation& obs) {
    out += "\nObservation: " + obs.text + "\n";
    out += kFormatReminder;
  };
  observation_block(trajectory.initial_observation);
  for (const auto& turn : trajectory.turns) {
    out += "\n" + turn.response.text() + "\n";
    observation_block(turn.observation);
  }
  return out;
}

ParsedResponse parse_response(const std::string& text) {
  const auto action_pos = text.rfind(kActionMarker);
  if (action_pos == std::string::npos)
    throw ParseError(ParseError::Kind::MissingActionMarker, "response has no Action: marker");

  std::string rest = text.substr(action_pos + std::char_traits<char>::length(kActionMarker));
  const auto newline = rest.find('\n');
  if (newline != std::string::npos) rest.resize(newline);

  ParsedResponse out;
  out.action_text = trim(rest);
  if (out.action_text.empty())
    throw ParseError(ParseError::Kind::EmptyAction, "Action: marker has no content");

  const std::string head = text.substr(0, action_pos);
  const auto thought_pos = head.rfind(kThoughtMarker);
  if (thought_pos != std::string::npos)
    out.thought = trim(head.substr(thought_pos + std::char_traits<char>::length(kThoughtMarker)));
  return out;
}

ParsedAction parse_action(const std::string& action_text, const TaskSpec& spec) {
  const std::string s = normalize(action_text);
  if (s == "done") return {Verb::Done, {}};
  if (s == "inventory") return {Verb::Inventory, {}};

  if (starts_with(s, "go to ")) return {Verb::GoTo, {resolve(s.substr(6), spec)}};

  if (starts_with(s, "put ")) {
    const std::string body = s.substr(4);
    for (const char* sep : {" in/on ", " in ", " on "}) {
      const auto pos = body.find(sep);
      if (pos == std::string::npos) continue;
      const std::string obj = body.substr(0, pos);
      const std::string where = body.substr(pos + std::char_traits<char>::length(sep));
      return {Verb::Put, {resolve(obj, spec), resolve(where, spec)}};
    }
    throw GrammarError(s, "put needs 'put (object) in (receptacle)'");
  }

  static const std::array<std::pair<const char*, Verb>, 7> unary = {{
      {"open ", Verb::Open},
      {"close ", Verb::Close},
      {"take ", Verb::Take},
      {"heat ", Verb::Heat},
      {"cool ", Verb::Cool},
      {"clean ", Verb::Clean},
      {"examine ", Verb::Examine},
  }};
  for (const auto& [prefix, verb] : unary) {
    if (starts_with(s, prefix))
      return {verb, {resolve(s.substr(std::char_traits<char>::length(prefix)), spec)}};
  }
  throw GrammarError(s, "not an available action: " + s);
}

nlohmann::json trajectory_record(const Trajectory& trajectory) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& turn : trajectory.turns) {
    turns.push_back({{"obs", turn.observation.text},
                     {"thought", turn.response.thought},
                     {"action", turn.response.action_text},
                     {"valid", turn.observation.valid},
                     {"log_prob", turn.response.total_log_prob}});
  }
  return {{"task_id", trajectory.spec.task_id},
          {"seed", trajectory.spec.seed},
          {"split", to_string(trajectory.spec.split)},
          {"task_type", to_string(trajectory.spec.task_type)},
          {"difficulty", to_string(trajectory.spec.difficulty)},
          {"variant", trajectory.spec.variant},
          {"max_steps", trajectory.max_steps},
          {"initial_obs", trajectory.initial_observation.text},
          {"turns", std::move(turns)},
          {"reward", trajectory.reward},
          {"invalid_count", trajectory.invalid_count},
          {"truncated", trajectory.truncated}};
}

}  // namespace interplan
