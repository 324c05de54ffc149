#include "interplan/env.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <unordered_map>

#include "interplan/random.hpp"

namespace interplan {

namespace {

struct ReceptacleKind {
  const char* name;
  bool openable;
  const char* home_room;
};

constexpr std::array<ReceptacleKind, 13> kReceptacleKinds = {{
    {"fridge", true, "kitchen"},
    {"microwave", true, "kitchen"},
    {"sinkbasin", false, "kitchen"},
    {"countertop", false, "kitchen"},
    {"cabinet", true, "kitchen"},
    {"diningtable", false, "kitchen"},
    {"garbagecan", false, "kitchen"},
    {"desk", false, "bedroom"},
    {"dresser", false, "bedroom"},
    {"drawer", true, "bedroom"},
    {"shelf", false, "livingroom"},
    {"sidetable", false, "livingroom"},
    {"coffeetable", false, "livingroom"},
}};

constexpr std::array<const char*, 5> kRoomNames = {
    "kitchen", "hallway", "livingroom", "bedroom", "bathroom"};

const std::vector<std::string> kSeenObjectKinds = {
    "apple", "bread", "egg",  "lettuce", "potato",  "tomato", "mug",
    "cup",   "plate", "bowl", "book",    "cd",      "pen",    "pencil",
    "keychain", "watch", "vase", "candle", "soapbar", "spraybottle"};

const std::vector<std::string> kUnseenObjectKinds = {
    "spatula",    "ladle",  "pillow",    "remotecontrol", "creditcard",
    "statue",     "tissuebox", "newspaper", "houseplant", "cellphone"};

const std::vector<std::string> kHeatCoolTargets = {
    "apple", "bread", "egg", "potato", "tomato", "mug", "cup"};
const std::vector<std::string> kCleanTargets = {
    "mug", "cup", "plate", "bowl", "apple", "potato", "tomato", "lettuce"};
const std::vector<std::string> kLookTargets = {
    "book", "cd", "pen", "pencil", "keychain", "watch", "vase", "candle"};

struct Scale {
  int min_rooms, max_rooms;
  int min_receptacles, max_receptacles;
  int min_objects, max_objects;
};

// Both modes share one world scale, so they differ only in the assists.
constexpr Scale kEasyScale{2, 2, 4, 5, 6, 7};
constexpr Scale kNormalScale = kEasyScale;

constexpr int kMaxGenerationAttempts = 64;

const ReceptacleKind& receptacle_kind(const std::string& kind) {
  for (const auto& k : kReceptacleKinds)
    if (kind == k.name) return k;
  throw std::invalid_argument("unknown receptacle kind: " + kind);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
  return items[uniform_index(rng, items.size())];
}

std::string numbered(const std::string& kind, std::map<std::string, int>& counts) {
  return kind + " " + std::to_string(++counts[kind]);
}

const char* appliance_for(TaskType type) {
  switch (type) {
    case TaskType::Heat: return "microwave";
    case TaskType::Cool: return "fridge";
    case TaskType::Clean: return "sinkbasin";
    default: return "";
  }
}

struct Layout {
  std::vector<std::string> rooms;
  std::vector<std::pair<std::string, std::string>> receptacles;  // id, room
};

Layout build_layout(std::uint64_t layout_id, Difficulty difficulty) {
  const Scale& scale = difficulty == Difficulty::Easy ? kEasyScale : kNormalScale;
  const bool unseen = split_of(layout_id) == Split::Unseen;
  Rng rng(derive_seed({0x1a7007, layout_id, static_cast<std::uint64_t>(difficulty)}));

  Layout layout;
  const int num_rooms = uniform_int(rng, scale.min_rooms, scale.max_rooms);
  std::vector<std::string> room_pool(kRoomNames.begin(), kRoomNames.end());
  if (!unseen) {
    // Seen homes always have a kitchen; the rest keep their canonical order.
    layout.rooms.push_back(room_pool[0]);
    room_pool.erase(room_pool.begin());
  }
  std::shuffle(room_pool.begin(), room_pool.end(), rng);
  while (static_cast<int>(layout.rooms.size()) < num_rooms) {
    layout.rooms.push_back(room_pool.back());
    room_pool.pop_back();
  }
  if (!unseen) std::sort(layout.rooms.begin() + 1, layout.rooms.end());

  std::vector<std::string> kinds = {"fridge", "microwave", "sinkbasin"};
  const int num_receptacles =
      uniform_int(rng, scale.min_receptacles, scale.max_receptacles);
  std::vector<std::string> extra;
  for (std::size_t i = 3; i < kReceptacleKinds.size(); ++i)
    extra.emplace_back(kReceptacleKinds[i].name);
  while (static_cast<int>(kinds.size()) < num_receptacles) {
    // Cabinets and drawers may repeat; surfaces are unique per home.
    const std::string& kind = pick(rng, extra);
    const bool repeatable = kind == "cabinet" || kind == "drawer";
    if (!repeatable && std::find(kinds.begin(), kinds.end(), kind) != kinds.end())
      continue;
    kinds.push_back(kind);
  }
  // At least one open surface is needed to hold the desklamp.
  if (std::none_of(kinds.begin() + 3, kinds.end(), [](const std::string& k) {
        return !receptacle_kind(k).openable;
      })) {
    kinds.back() = "countertop";
  }
  std::sort(kinds.begin(), kinds.end());

  std::map<std::string, int> counts;
  for (const auto& kind : kinds) {
    std::string room;
    if (unseen) {
      room = pick(rng, layout.rooms);
    } else {
      const std::string home = receptacle_kind(kind).home_room;
      room = std::find(layout.rooms.begin(), layout.rooms.end(), home) != layout.rooms.end()
                 ? home
                 : layout.rooms[counts.size() % layout.rooms.size()];
    }
    layout.receptacles.emplace_back(numbered(kind, counts), room);
  }
  return layout;
}

std::string instruction_for(TaskType type, const std::string& target,
                            const std::string& destination) {
  switch (type) {
    case TaskType::Pick: return "put a " + target + " in " + destination + ".";
    case TaskType::Look: return "look at " + target + " under the desklamp.";
    case TaskType::Heat: return "heat some " + target + " and put it in " + destination + ".";
    case TaskType::Cool: return "cool some " + target + " and put it in " + destination + ".";
    case TaskType::Clean: return "clean some " + target + " and put it in " + destination + ".";
    case TaskType::PickTwo: return "find two " + target + " and put them in " + destination + ".";
  }
  throw UnknownTaskType("unknown task type");
}

GeneratedTask build_task(std::uint64_t seed, TaskType type, Difficulty difficulty,
                         int variant, int max_steps) {
  const int type_index = static_cast<int>(type);
  if (type_index < 0 || type_index >= kNumTaskTypes)
    throw UnknownTaskType("task type out of range: " + std::to_string(type_index));

  const std::uint64_t layout_id = layout_of(seed);
  const Layout layout = build_layout(layout_id, difficulty);
  const bool unseen = split_of(seed) == Split::Unseen;
  const Scale& scale = difficulty == Difficulty::Easy ? kEasyScale : kNormalScale;
  Rng rng(derive_seed({0x7a5c, seed, static_cast<std::uint64_t>(type_index),
                       static_cast<std::uint64_t>(difficulty),
                       static_cast<std::uint64_t>(variant)}));

  WorldState world;
  world.rooms = layout.rooms;
  world.difficulty = difficulty;
  world.max_steps = max_steps;
  world.agent_location = layout.rooms.front();
  for (const auto& [id, room] : layout.receptacles) {
    Receptacle r;
    r.kind = kind_of(id);
    r.room = room;
    r.openable = receptacle_kind(r.kind).openable;
    r.open = !r.openable || difficulty == Difficulty::Easy;
    world.receptacles.emplace(id, std::move(r));
  }

  TaskSpec spec;
  spec.task_type = type;
  spec.seed = seed;
  spec.split = unseen ? Split::Unseen : Split::Seen;
  spec.difficulty = difficulty;
  spec.variant = variant;
  spec.appliance_kind = appliance_for(type);

  switch (type) {
    case TaskType::Heat:
    case TaskType::Cool: spec.target_kind = pick(rng, kHeatCoolTargets); break;
    case TaskType::Clean: spec.target_kind = pick(rng, kCleanTargets); break;
    case TaskType::Look: spec.target_kind = pick(rng, kLookTargets); break;
    default: spec.target_kind = pick(rng, kSeenObjectKinds); break;
  }

  std::vector<std::string> surfaces;
  std::vector<std::string> destinations;
  for (const auto& [id, r] : world.receptacles) {
    const bool appliance = r.kind == "fridge" || r.kind == "microwave" || r.kind == "sinkbasin";
    if (!r.openable && !appliance) surfaces.push_back(id);
    if (!appliance && r.kind != "garbagecan") destinations.push_back(id);
  }
  if (destinations.empty()) destinations = surfaces;
  if (type != TaskType::Look) spec.destination_kind = kind_of(pick(rng, destinations));

  std::vector<std::string> all_receptacles;
  for (const auto& [id, r] : world.receptacles) all_receptacles.push_back(id);
  std::vector<std::string> target_homes;
  for (const auto& id : all_receptacles)
    if (kind_of(id) != spec.destination_kind) target_homes.push_back(id);

  std::map<std::string, int> counts;
  auto place = [&](const std::string& kind, const std::string& where, bool fixed) {
    const std::string id = numbered(kind, counts);
    Object o;
    o.kind = kind;
    o.fixed = fixed;
    world.objects.emplace(id, o);
    auto& contents = world.receptacles.at(where).contents;
    contents.push_back(id);
    std::sort(contents.begin(), contents.end());
  };

  place("desklamp", pick(rng, surfaces), true);
  const int num_targets = type == TaskType::PickTwo ? 2 : 1;
  for (int i = 0; i < num_targets; ++i) place(spec.target_kind, pick(rng, target_homes), false);

  const auto& distractor_pool = unseen ? kUnseenObjectKinds : kSeenObjectKinds;
  const int num_objects = uniform_int(rng, scale.min_objects, scale.max_objects);
  while (static_cast<int>(world.objects.size()) < num_objects) {
    const std::string& kind = pick(rng, distractor_pool);
    if (kind == spec.target_kind) continue;
    place(kind, pick(rng, all_receptacles), false);
  }

  spec.instruction = instruction_for(type, spec.target_kind, spec.destination_kind);
  std::ostringstream id;
  id << to_string(type) << "-" << to_string(difficulty) << "-" << seed;
  spec.task_id = id.str();

  for (const auto& room : world.rooms) spec.entities.push_back(room);
  for (const auto& [rid, r] : world.receptacles) spec.entities.push_back(rid);
  for (const auto& [oid, o] : world.objects) spec.entities.push_back(oid);
  std::sort(spec.entities.begin(), spec.entities.end());

  return {std::move(spec), std::move(world)};
}

// --- rendering ---------------------------------------------------------------

std::string join_listing(const std::vector<std::string>& items) {
  if (items.empty()) return "nothing";
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += (i + 1 == items.size()) ? ", and " : ", ";
    out += "a " + items[i];
  }
  return out;
}

std::string describe_location(const Percept& p) {
  if (p.at_room) {
    std::string text = "Looking quickly around you, you see " +
                       join_listing(p.listed_receptacles) + ".";
    if (!p.exits.empty()) {
      text += " From here you can go to";
      for (std::size_t i = 0; i < p.exits.size(); ++i)
        text += (i == 0 ? " the " : " and the ") + p.exits[i];
      text += ".";
    }
    return text;
  }
  if (p.location_closed) return "The " + p.location + " is closed.";
  return "On the " + p.location + ", you see " + join_listing(p.visible_objects) + ".";
}

}  // namespace

// --- names -------------------------------------------------------------------

std::string to_string(TaskType type) {
  switch (type) {
    case TaskType::Pick: return "pick";
    case TaskType::Look: return "look";
    case TaskType::Heat: return "heat";
    case TaskType::Cool: return "cool";
    case TaskType::Clean: return "clean";
    case TaskType::PickTwo: return "pick_two";
  }
  throw UnknownTaskType("task type out of range");
}

std::string to_string(Split split) { return split == Split::Seen ? "seen" : "unseen"; }

std::string to_string(Difficulty difficulty) {
  return difficulty == Difficulty::Easy ? "easy" : "normal";
}

std::string to_string(Verb verb) {
  static const std::array<const char*, kNumVerbs> names = {
      "goto", "open", "close", "take", "put", "heat",
      "cool", "clean", "examine", "inventory", "done"};
  return names.at(static_cast<std::size_t>(verb));
}

TaskType task_type_from_string(const std::string& name) {
  for (int i = 0; i < kNumTaskTypes; ++i) {
    const auto type = static_cast<TaskType>(i);
    if (to_string(type) == name) return type;
  }
  throw UnknownTaskType("unknown task type: " + name);
}

Difficulty difficulty_from_string(const std::string& name) {
  if (name == "easy") return Difficulty::Easy;
  if (name == "normal") return Difficulty::Normal;
  throw std::invalid_argument("unknown difficulty: " + name);
}

Split split_from_string(const std::string& name) {
  if (name == "seen") return Split::Seen;
  if (name == "unseen") return Split::Unseen;
  throw std::invalid_argument("unknown split: " + name);
}

int verb_arity(Verb verb) {
  switch (verb) {
    case Verb::Put: return 2;
    case Verb::Inventory:
    case Verb::Done: return 0;
    default: return 1;
  }
}

std::string kind_of(const std::string& entity) {
  const auto space = entity.rfind(' ');
  return space == std::string::npos ? entity : entity.substr(0, space);
}

std::uint64_t layout_of(std::uint64_t seed) { return seed % kNumLayouts; }

Split split_of(std::uint64_t seed) {
  return layout_of(seed) % 5 == 4 ? Split::Unseen : Split::Seen;
}

bool is_room(const WorldState& state, const std::string& id) {
  return std::find(state.rooms.begin(), state.rooms.end(), id) != state.rooms.end();
}

std::string room_of(const WorldState& state, const std::string& location) {
  if (is_room(state, location)) return location;
  return state.receptacles.at(location).room;
}

// --- generation and reset ----------------------------------------------------

GeneratedTask generate_task(std::uint64_t seed, TaskType task_type,
                            Difficulty difficulty, int max_steps) {
  for (int variant = 0; variant < kMaxGenerationAttempts; ++variant) {
    GeneratedTask task = build_task(seed, task_type, difficulty, variant, max_steps);
    if (goal_check(task.state, task.spec)) continue;
    if (solve(task.state, task.spec, max_steps)) return task;
  }
  throw std::runtime_error("no solvable world for seed " + std::to_string(seed));
}

namespace {

Percept view(const WorldState& state, Percept::Event event,
             std::vector<std::string> event_args) {
  Percept p;
  p.event = event;
  p.event_args = std::move(event_args);
  p.location = state.agent_location;
  p.at_room = is_room(state, state.agent_location);
  const bool normal = state.difficulty == Difficulty::Normal;
  if (p.at_room) {
    if (normal) {
      p.room = state.agent_location;
      for (const auto& [id, r] : state.receptacles)
        if (r.room == state.agent_location) p.listed_receptacles.push_back(id);
      const auto it = std::find(state.rooms.begin(), state.rooms.end(), state.agent_location);
      const auto idx = static_cast<std::size_t>(it - state.rooms.begin());
      if (idx > 0) p.exits.push_back(state.rooms[idx - 1]);
      if (idx + 1 < state.rooms.size()) p.exits.push_back(state.rooms[idx + 1]);
    } else {
      for (const auto& [id, r] : state.receptacles) p.listed_receptacles.push_back(id);
    }
  } else {
    const auto& r = state.receptacles.at(state.agent_location);
    p.location_closed = r.openable && !r.open;
    if (!p.location_closed) p.visible_objects = r.contents;
  }
  return p;
}

// Percept for events whose text does not describe the surroundings.
Percept note(const WorldState& state, Percept::Event event,
             std::vector<std::string> event_args) {
  Percept p;
  p.event = event;
  p.event_args = std::move(event_args);
  p.location = state.agent_location;
  p.at_room = is_room(state, state.agent_location);
  return p;
}

Observation observe(const WorldState& state, const TaskSpec& spec, Percept percept) {
  Observation obs;
  obs.valid = percept.event != Percept::Event::Invalid;
  obs.text = render_observation(percept);
  obs.percept = std::move(percept);
  obs.done_hint = goal_check(state, spec);
  return obs;
}

bool reachable(const WorldState& state, const std::string& target) {
  if (target == state.agent_location) return false;
  if (state.difficulty == Difficulty::Easy) return true;
  const std::string here = room_of(state, state.agent_location);
  if (!is_room(state, target)) return state.receptacles.at(target).room == here;
  if (target == here) return true;
  const auto a = std::find(state.rooms.begin(), state.rooms.end(), here) - state.rooms.begin();
  const auto b = std::find(state.rooms.begin(), state.rooms.end(), target) - state.rooms.begin();
  return a - b == 1 || b - a == 1;
}

bool at_receptacle_of_kind(const WorldState& state, const char* kind) {
  const auto it = state.receptacles.find(state.agent_location);
  return it != state.receptacles.end() && it->second.kind == kind;
}

// Applies a well-formed action; returns nullopt when it has no effect.
std::optional<Percept> apply(WorldState& s, const ParsedAction& a) {
  using Event = Percept::Event;
  if (static_cast<int>(a.args.size()) != verb_arity(a.verb)) return std::nullopt;
  auto has_receptacle = [&](const std::string& id) { return s.receptacles.count(id) > 0; };
  auto has_object = [&](const std::string& id) { return s.objects.count(id) > 0; };

  switch (a.verb) {
    case Verb::GoTo: {
      const auto& target = a.args[0];
      if (!has_receptacle(target) && !is_room(s, target)) return std::nullopt;
      if (!reachable(s, target)) return std::nullopt;
      s.agent_location = target;
      return view(s, Event::Arrive, {target});
    }
    case Verb::Open:
    case Verb::Close: {
      const auto& target = a.args[0];
      if (target != s.agent_location || !has_receptacle(target)) return std::nullopt;
      auto& r = s.receptacles.at(target);
      const bool opening = a.verb == Verb::Open;
      if (!r.openable || r.open == opening) return std::nullopt;
      r.open = opening;
      if (opening) return view(s, Event::Opened, {target});
      return note(s, Event::Closed, {target});
    }
    case Verb::Take: {
      const auto& obj = a.args[0];
      if (s.inventory || !has_object(obj) || !has_receptacle(s.agent_location))
        return std::nullopt;
      auto& r = s.receptacles.at(s.agent_location);
      auto pos = std::find(r.contents.begin(), r.contents.end(), obj);
      if (!r.open || pos == r.contents.end() || s.objects.at(obj).fixed) return std::nullopt;
      r.contents.erase(pos);
      s.inventory = obj;
      return note(s, Event::Took, {obj, s.agent_location});
    }
    case Verb::Put: {
      const auto& obj = a.args[0];
      const auto& target = a.args[1];
      if (s.inventory != obj || target != s.agent_location || !has_receptacle(target))
        return std::nullopt;
      auto& r = s.receptacles.at(target);
      if (!r.open) return std::nullopt;
      r.contents.push_back(obj);
      std::sort(r.contents.begin(), r.contents.end());
      s.inventory.reset();
      return note(s, Event::Placed, {obj, target});
    }
    case Verb::Heat:
    case Verb::Cool:
    case Verb::Clean: {
      const auto& obj = a.args[0];
      if (s.inventory != obj) return std::nullopt;
      const char* appliance = a.verb == Verb::Heat   ? "microwave"
                              : a.verb == Verb::Cool ? "fridge"
                                                     : "sinkbasin";
      if (!at_receptacle_of_kind(s, appliance)) return std::nullopt;
      auto& o = s.objects.at(obj);
      Event event = Event::Cleaned;
      if (a.verb == Verb::Heat) {
        o.thermal = Thermal::Heated;
        event = Event::Heated;
      } else if (a.verb == Verb::Cool) {
        o.thermal = Thermal::Cooled;
        event = Event::Cooled;
      } else {
        o.clean = true;
      }
      return note(s, event, {obj, s.agent_location});
    }
    case Verb::Examine: {
      const auto& obj = a.args[0];
      if (!has_object(obj)) return std::nullopt;
      const bool held = s.inventory == obj;
      bool visible = false;
      std::optional<std::string> lamp;
      if (has_receptacle(s.agent_location)) {
        const auto& r = s.receptacles.at(s.agent_location);
        if (r.open) {
          visible = std::find(r.contents.begin(), r.contents.end(), obj) != r.contents.end();
          for (const auto& c : r.contents)
            if (kind_of(c) == "desklamp") lamp = c;
        }
      }
      if (!held && !visible) return std::nullopt;
      if (held && lamp) {
        s.objects.at(obj).inspected = true;
        return note(s, Event::ExaminedUnderLamp, {obj, *lamp});
      }
      return note(s, Event::Examined, {obj});
    }
    case Verb::Inventory: {
      std::vector<std::string> args;
      if (s.inventory) args.push_back(*s.inventory);
      return note(s, Event::Inventory, std::move(args));
    }
    case Verb::Done:
      s.terminated = true;
      return note(s, Event::DoneDeclared, {});
  }
  return std::nullopt;
}

void check_running(const WorldState& state) {
  if (state.terminated || state.step_count >= state.max_steps)
    throw EpisodeAlreadyTerminated("step called on a finished episode");
}

StepResult invalid_step(const WorldState& state, const TaskSpec& spec) {
  StepResult out;
  out.state = state;
  out.state.step_count += 1;
  Percept p;
  p.event = Percept::Event::Invalid;
  out.observation = observe(out.state, spec, std::move(p));
  out.done = out.observation.done_hint || out.state.step_count >= out.state.max_steps;
  return out;
}

}  // namespace

std::pair<WorldState, Observation> reset(const TaskSpec& spec, int max_steps) {
  GeneratedTask task =
      build_task(spec.seed, spec.task_type, spec.difficulty, spec.variant, max_steps);
  Observation obs = observe(task.state, spec, view(task.state, Percept::Event::Start, {}));
  return {std::move(task.state), std::move(obs)};
}

StepResult step(const WorldState& state, const ParsedAction& action, const TaskSpec& spec) {
  check_running(state);
  WorldState next = state;
  std::optional<Percept> percept = apply(next, action);
  if (!percept) return invalid_step(state, spec);
  next.step_count += 1;
  StepResult out;
  out.observation = observe(next, spec, std::move(*percept));
  out.done = next.terminated || out.observation.done_hint || next.step_count >= next.max_steps;
  out.state = std::move(next);
  return out;
}

StepResult step_unparsed(const WorldState& state, const TaskSpec& spec) {
  check_running(state);
  return invalid_step(state, spec);
}

bool goal_check(const WorldState& state, const TaskSpec& spec) {
  auto satisfies = [&](const std::string& id, const Object& o) {
    if (o.kind != spec.target_kind) return false;
    switch (spec.task_type) {
      case TaskType::Heat: return o.thermal == Thermal::Heated;
      case TaskType::Cool: return o.thermal == Thermal::Cooled;
      case TaskType::Clean: return o.clean;
      default: (void)id; return true;
    }
  };
  if (spec.task_type == TaskType::Look) {
    for (const auto& [id, o] : state.objects)
      if (o.kind == spec.target_kind && o.inspected) return true;
    return false;
  }
  int placed = 0;
  for (const auto& [rid, r] : state.receptacles) {
    if (r.kind != spec.destination_kind) continue;
    for (const auto& oid : r.contents)
      if (satisfies(oid, state.objects.at(oid))) ++placed;
  }
  return placed >= (spec.task_type == TaskType::PickTwo ? 2 : 1);
}

std::string render_observation(const Percept& p) {
  using Event = Percept::Event;
  const auto& a = p.event_args;
  switch (p.event) {
    case Event::Start:
      if (p.room.empty())
        return "You are in the middle of the house. " + describe_location(p);
      return "You are in the " + p.room + ". " + describe_location(p);
    case Event::Arrive:
      if (p.at_room) return "You arrive at the " + a[0] + ". " + describe_location(p);
      return "You arrive at " + a[0] + ". " + describe_location(p);
    case Event::Opened:
      return "You open the " + a[0] + ". " + describe_location(p);
    case Event::Closed: return "You close the " + a[0] + ".";
    case Event::Took: return "You pick up the " + a[0] + " from the " + a[1] + ".";
    case Event::Placed: return "You put the " + a[0] + " in/on the " + a[1] + ".";
    case Event::Heated: return "You heat the " + a[0] + " using the " + a[1] + ".";
    case Event::Cooled: return "You cool the " + a[0] + " using the " + a[1] + ".";
    case Event::Cleaned: return "You clean the " + a[0] + " using the " + a[1] + ".";
    case Event::Examined: return "There's nothing special about " + a[0] + ".";
    case Event::ExaminedUnderLamp:
      return "You turn on the " + a[1] + " and examine the " + a[0] + " under its light.";
    case Event::Inventory:
      if (a.empty()) return "You are not carrying anything.";
      return "You are carrying: a " + a[0] + ".";
    case Event::DoneDeclared: return "You declare the task finished.";
    case Event::Invalid: return kNothingHappens;
  }
  return kNothingHappens;
}

std::string render_action(const ParsedAction& action) {
  const auto& a = action.args;
  auto arg = [&](std::size_t i) { return i < a.size() ? a[i] : std::string(); };
  std::string out;
  switch (action.verb) {
    case Verb::GoTo: out = "go to " + arg(0); break;
    case Verb::Open: out = "open " + arg(0); break;
    case Verb::Close: out = "close " + arg(0); break;
    case Verb::Take: out = "take " + arg(0); break;
    case Verb::Put: out = "put " + arg(0) + " in " + arg(1); break;
    case Verb::Heat: out = "heat " + arg(0); break;
    case Verb::Cool: out = "cool " + arg(0); break;
    case Verb::Clean: out = "clean " + arg(0); break;
    case Verb::Examine: out = "examine " + arg(0); break;
    case Verb::Inventory: return "inventory";
    case Verb::Done: return "done";
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string serialize(const WorldState& state) {
  nlohmann::json j;
  j["rooms"] = state.rooms;
  for (const auto& [id, r] : state.receptacles) {
    j["receptacles"][id] = {{"kind", r.kind},       {"room", r.room},
                            {"openable", r.openable}, {"open", r.open},
                            {"contents", r.contents}};
  }
  static const char* thermal_names[] = {"ambient", "heated", "cooled"};
  for (const auto& [id, o] : state.objects) {
    j["objects"][id] = {{"kind", o.kind},
                        {"thermal", thermal_names[static_cast<int>(o.thermal)]},
                        {"clean", o.clean},
                        {"inspected", o.inspected},
                        {"fixed", o.fixed}};
  }
  j["agent_location"] = state.agent_location;
  j["inventory"] = state.inventory ? nlohmann::json(*state.inventory) : nlohmann::json(nullptr);
  j["step_count"] = state.step_count;
  j["max_steps"] = state.max_steps;
  j["terminated"] = state.terminated;
  j["difficulty"] = to_string(state.difficulty);
  return j.dump();
}

std::optional<std::vector<ParsedAction>> solve(const WorldState& start, const TaskSpec& spec,
                                               int depth_limit) {
  if (goal_check(start, spec)) return std::vector<ParsedAction>{};
  // Everything a move can change; cheaper than the canonical serialization.
  auto key_of = [](const WorldState& s) {
    std::string key = s.agent_location;
    key += '|';
    if (s.inventory) key += *s.inventory;
    for (const auto& [id, r] : s.receptacles) {
      key += r.open ? "|o" : "|c";
      for (const auto& item : r.contents) (key += ',') += item;
    }
    key += '|';
    for (const auto& [id, o] : s.objects) {
      key += static_cast<char>('0' + static_cast<int>(o.thermal));
      key += o.clean ? 'c' : '-';
      key += o.inspected ? 'i' : '-';
    }
    key += s.terminated ? 't' : '-';
    return key;
  };
  struct Node {
    WorldState state;
    int parent;
    ParsedAction action;
    int depth;
  };
  std::vector<Node> nodes;
  std::set<std::string> seen;
  std::deque<int> frontier;
  WorldState root = start;
  root.max_steps = std::numeric_limits<int>::max();
  nodes.push_back({root, -1, {}, 0});
  seen.insert(key_of(root));
  frontier.push_back(0);

  std::vector<std::string> targets;
  for (const auto& [id, o] : start.objects)
    if (o.kind == spec.target_kind) targets.push_back(id);
  std::vector<std::string> places;
  for (const auto& room : start.rooms) places.push_back(room);
  for (const auto& [id, r] : start.receptacles) places.push_back(id);

  while (!frontier.empty()) {
    const int index = frontier.front();
    frontier.pop_front();
    if (nodes[index].depth >= depth_limit) continue;
    const WorldState current = nodes[index].state;

    std::vector<ParsedAction> moves;
    for (const auto& p : places) moves.push_back({Verb::GoTo, {p}});
    moves.push_back({Verb::Open, {current.agent_location}});
    for (const auto& t : targets) moves.push_back({Verb::Take, {t}});
    if (current.inventory) {
      const auto& held = *current.inventory;
      moves.push_back({Verb::Put, {held, current.agent_location}});
      switch (spec.task_type) {
        case TaskType::Heat: moves.push_back({Verb::Heat, {held}}); break;
        case TaskType::Cool: moves.push_back({Verb::Cool, {held}}); break;
        case TaskType::Clean: moves.push_back({Verb::Clean, {held}}); break;
        case TaskType::Look: moves.push_back({Verb::Examine, {held}}); break;
        default: break;
      }
    }

    for (auto& move : moves) {
      WorldState next = current;
      if (!apply(next, move)) continue;
      next.step_count += 1;
      const std::string key = key_of(next);
      if (!seen.insert(key).second) continue;
      nodes.push_back({next, index, move, nodes[index].depth + 1});
      const int child = static_cast<int>(nodes.size()) - 1;
      if (goal_check(next, spec)) {
        std::vector<ParsedAction> plan;
        for (int n = child; nodes[n].parent >= 0; n = nodes[n].parent)
          plan.push_back(nodes[n].action);
        std::reverse(plan.begin(), plan.end());
        return plan;
      }
      frontier.push_back(child);
    }
  }
  return std::nullopt;
}

}  // namespace interplan
