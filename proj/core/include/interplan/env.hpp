#ifndef INTERPLAN_ENV_HPP_
#define INTERPLAN_ENV_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace interplan {

inline constexpr int kDefaultMaxSteps = 30;
inline constexpr const char* kNothingHappens = "Nothing happens";

enum class TaskType { Pick, Look, Heat, Cool, Clean, PickTwo };
inline constexpr int kNumTaskTypes = 6;

enum class Split { Seen, Unseen };
enum class Difficulty { Easy, Normal };
enum class Thermal { Ambient, Heated, Cooled };

enum class Verb {
  GoTo,
  Open,
  Close,
  Take,
  Put,
  Heat,
  Cool,
  Clean,
  Examine,
  Inventory,
  Done
};
inline constexpr int kNumVerbs = 11;

class UnknownTaskType : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EpisodeAlreadyTerminated : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string to_string(TaskType type);
std::string to_string(Split split);
std::string to_string(Difficulty difficulty);
std::string to_string(Verb verb);
TaskType task_type_from_string(const std::string& name);
Difficulty difficulty_from_string(const std::string& name);
Split split_from_string(const std::string& name);

// Number of arguments each verb takes.
int verb_arity(Verb verb);

// Generated task: the instruction plus the facts the goal predicate needs.
struct TaskSpec {
  std::string task_id;
  TaskType task_type = TaskType::Pick;
  std::string instruction;
  std::uint64_t seed = 0;
  Split split = Split::Seen;
  Difficulty difficulty = Difficulty::Easy;
  int variant = 0;  // generation attempt that produced a solvable world

  std::string target_kind;
  std::string destination_kind;  // empty for Look
  std::string appliance_kind;    // microwave / fridge / sinkbasin, or empty
  std::vector<std::string> entities;  // sorted vocabulary of every entity id

  bool operator==(const TaskSpec&) const = default;
};

struct Receptacle {
  std::string kind;
  std::string room;
  bool openable = false;
  bool open = true;
  std::vector<std::string> contents;  // kept sorted

  bool operator==(const Receptacle&) const = default;
};

struct Object {
  std::string kind;
  Thermal thermal = Thermal::Ambient;
  bool clean = false;
  bool inspected = false;  // examined while held under a lit desklamp
  bool fixed = false;      // cannot be picked up (the desklamp)

  bool operator==(const Object&) const = default;
};

struct WorldState {
  std::vector<std::string> rooms;  // corridor order: rooms[i] adjoins rooms[i+1]
  std::map<std::string, Receptacle> receptacles;
  std::map<std::string, Object> objects;
  std::string agent_location;  // a room id or a receptacle id
  std::optional<std::string> inventory;
  int step_count = 0;
  int max_steps = kDefaultMaxSteps;
  bool terminated = false;
  Difficulty difficulty = Difficulty::Easy;

  bool operator==(const WorldState&) const = default;
};

struct ParsedAction {
  Verb verb = Verb::Done;
  std::vector<std::string> args;

  bool operator==(const ParsedAction&) const = default;
};

// What the agent perceives after an action. The observation text is rendered
// from this and nothing else, so it only ever carries observable content.
struct Percept {
  enum class Event {
    Start,
    Arrive,
    Opened,
    Closed,
    Took,
    Placed,
    Heated,
    Cooled,
    Cleaned,
    Examined,
    ExaminedUnderLamp,
    Inventory,
    DoneDeclared,
    Invalid
  };

  Event event = Event::Start;
  std::vector<std::string> event_args;
  std::string location;
  bool at_room = true;
  std::string room;  // room the agent is in (empty in Easy mode)
  // Receptacles listed at a room (Normal) or the whole house (Easy).
  std::vector<std::string> listed_receptacles;
  std::vector<std::string> exits;
  bool location_closed = false;
  std::vector<std::string> visible_objects;  // contents of the current location
  std::optional<std::string> held;

  bool operator==(const Percept&) const = default;
};

struct Observation {
  std::string text;
  bool valid = true;
  bool done_hint = false;
  Percept percept;

  bool operator==(const Observation&) const = default;
};

struct StepResult {
  WorldState state;
  Observation observation;
  bool done = false;
};

struct GeneratedTask {
  TaskSpec spec;
  WorldState state;
};

// Layout partition: seed % kNumLayouts picks the layout, and every fifth
// layout is held out.
inline constexpr std::uint64_t kNumLayouts = 100;
std::uint64_t layout_of(std::uint64_t seed);
Split split_of(std::uint64_t seed);

GeneratedTask generate_task(std::uint64_t seed, TaskType task_type,
                            Difficulty difficulty,
                            int max_steps = kDefaultMaxSteps);

// Rebuilds the spec's starting world and renders o_0.
std::pair<WorldState, Observation> reset(const TaskSpec& spec,
                                         int max_steps = kDefaultMaxSteps);

StepResult step(const WorldState& state, const ParsedAction& action,
                const TaskSpec& spec);

// Turn for a response that did not parse: costs a step, changes nothing.
StepResult step_unparsed(const WorldState& state, const TaskSpec& spec);

bool goal_check(const WorldState& state, const TaskSpec& spec);

// Canonical sorted-key JSON text of the full hidden state.
std::string serialize(const WorldState& state);

std::string render_observation(const Percept& percept);

// Breadth-first search for a shortest goal-reaching plan. Distractor pickups
// and state-neutral verbs are pruned because they can never shorten a plan.
std::optional<std::vector<ParsedAction>> solve(const WorldState& state,
                                               const TaskSpec& spec,
                                               int depth_limit);

// Surface form used by the policy and understood by parse_action.
std::string render_action(const ParsedAction& action);

// Kind of an entity id: "cabinet 2" -> "cabinet"; rooms map to themselves.
std::string kind_of(const std::string& entity);

bool is_room(const WorldState& state, const std::string& id);
std::string room_of(const WorldState& state, const std::string& location);

}  // namespace interplan

#endif  // INTERPLAN_ENV_HPP_
