#include "interplan/policy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace interplan {

namespace {

const std::array<const char*, 13> kReceptacleTokens = {
    "fridge", "microwave", "sinkbasin", "countertop", "cabinet", "diningtable", "garbagecan",
    "desk",   "dresser",   "drawer",    "shelf",      "sidetable", "coffeetable"};

const std::array<const char*, 21> kObjectTokens = {
    "apple", "bread", "egg",  "lettuce",  "potato", "tomato", "mug",
    "cup",   "plate", "bowl", "book",     "cd",     "pen",    "pencil",
    "keychain", "watch", "vase", "candle", "soapbar", "spraybottle", "desklamp"};

namespace f {
constexpr int kBias = 0;
constexpr int kTaskType = 1;
constexpr int kHandsEmpty = 7;
constexpr int kHoldingTarget = 8;
constexpr int kHoldingOther = 9;
constexpr int kTargetHere = 10;
constexpr int kAtDestination = 11;
constexpr int kAtAppliance = 12;
constexpr int kAtLamp = 13;
constexpr int kAtRoom = 14;
constexpr int kLocationClosed = 15;
constexpr int kNeedsProcessing = 16;
constexpr int kReadyToPlace = 17;
constexpr int kLookReady = 18;
constexpr int kPlacedOne = 19;
constexpr int kTargetLocationKnown = 20;
constexpr int kLampKnown = 21;
constexpr int kUnvisitedKnown = 22;
constexpr int kRoomHasUnvisited = 23;
constexpr int kLastInvalid = 24;
constexpr int kOtherObjectsHere = 25;
constexpr int kPlaceNow = 26;
constexpr int kExamineNow = 27;
constexpr int kTakeNow = 28;
constexpr int kOpenNow = 29;
constexpr int kCanTake = 30;
constexpr int kCanPut = 31;
constexpr int kCanOpen = 32;
constexpr int kCanClose = 33;
constexpr int kCanExamine = 34;
constexpr int kHoldingAtMicrowave = 35;
constexpr int kHoldingAtFridge = 36;
constexpr int kHoldingAtSink = 37;
constexpr int kProcessAtMicrowave = 38;
constexpr int kProcessAtFridge = 39;
constexpr int kProcessAtSink = 40;
constexpr int kLastVerb = 41;  // none + one per verb
constexpr int kStepBucket = kLastVerb + 1 + kNumVerbs;
constexpr int kVisitedKind = kStepBucket + 6;
constexpr int kBag = kVisitedKind + static_cast<int>(kReceptacleTokens.size());
constexpr int kBagUnknown = kBag + static_cast<int>(kReceptacleTokens.size() + kObjectTokens.size());
constexpr int kEnd = kBagUnknown + 1;
static_assert(kEnd == features::kBase, "base feature layout out of sync");
}  // namespace f

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

void add_unique(std::vector<std::string>& v, const std::string& x) {
  if (!contains(v, x)) v.push_back(x);
}

int step_bucket(int steps) {
  if (steps == 0) return 0;
  if (steps <= 2) return 1;
  if (steps <= 5) return 2;
  if (steps <= 9) return 3;
  if (steps <= 19) return 4;
  return 5;
}

struct View {
  const AgentMemory& m;

  bool holding_target() const { return m.held && kind_of(*m.held) == m.target_kind; }
  bool processing_task() const { return !m.appliance_kind.empty(); }
  bool needs_processing() const {
    return holding_target() && processing_task() && !m.processed.count(*m.held);
  }
  bool ready_to_place() const {
    return holding_target() && m.task_type != TaskType::Look &&
           (!processing_task() || m.processed.count(*m.held));
  }
  bool look_ready() const { return holding_target() && m.task_type == TaskType::Look; }

  const std::vector<std::string>* seen(const std::string& receptacle) const {
    auto it = m.contents.find(receptacle);
    return it == m.contents.end() ? nullptr : &it->second;
  }
  bool target_seen_at(const std::string& receptacle) const {
    if (kind_of(receptacle) == m.destination_kind) return false;
    const auto* items = seen(receptacle);
    if (!items) return false;
    return std::any_of(items->begin(), items->end(),
                       [&](const std::string& o) { return kind_of(o) == m.target_kind; });
  }
  bool lamp_at(const std::string& receptacle) const {
    const auto* items = seen(receptacle);
    if (!items) return false;
    return std::any_of(items->begin(), items->end(),
                       [](const std::string& o) { return kind_of(o) == "desklamp"; });
  }
  bool at_receptacle() const { return !m.at_room; }
  bool visible_here() const { return at_receptacle() && !m.location_closed; }
  std::vector<std::string> here() const {
    if (!visible_here()) return {};
    const auto* items = seen(m.location);
    return items ? *items : std::vector<std::string>{};
  }
  bool target_here() const { return visible_here() && target_seen_at(m.location); }

  bool is_destination(const std::string& r) const { return kind_of(r) == m.destination_kind; }
  bool is_appliance(const std::string& r) const {
    return processing_task() && kind_of(r) == m.appliance_kind;
  }

  std::string room_of_receptacle(const std::string& r) const {
    auto it = m.receptacle_room.find(r);
    return it == m.receptacle_room.end() ? std::string() : it->second;
  }

  bool adjacent(const std::string& a, const std::string& b) const {
    return m.room_edges.count({a, b}) > 0;
  }

  bool reachable(const std::string& place) const {
    if (place == m.location) return false;
    if (m.easy) return true;
    if (contains(m.known_rooms, place)) return place == m.room || adjacent(m.room, place);
    return room_of_receptacle(place) == m.room;
  }

  bool room_unexplored(const std::string& room) const {
    if (!m.visited_rooms.count(room)) return true;
    for (const auto& r : m.known_receptacles)
      if (room_of_receptacle(r) == room && !m.visited.count(r)) return true;
    return false;
  }

  template <typename Pred>
  bool room_has(const std::string& room, Pred pred) const {
    for (const auto& r : m.known_receptacles)
      if (room_of_receptacle(r) == room && pred(r)) return true;
    return false;
  }

  // First hop from the current room toward the nearest room satisfying pred;
  // empty if the current room satisfies it or nothing does.
  template <typename RoomPred>
  std::string first_hop(RoomPred room_pred) const {
    if (m.room.empty() || room_pred(m.room)) return {};
    std::map<std::string, std::string> first;
    std::deque<std::string> frontier{m.room};
    first[m.room] = "";
    while (!frontier.empty()) {
      const std::string cur = frontier.front();
      frontier.pop_front();
      for (const auto& next : m.known_rooms) {
        if (first.count(next) || !adjacent(cur, next)) continue;
        first[next] = cur == m.room ? next : first[cur];
        if (room_pred(next)) return first[next];
        frontier.push_back(next);
      }
    }
    return {};
  }
};

std::vector<int> place_descriptor(const View& v, const std::string& place) {
  using namespace columns;
  std::vector<int> d;
  auto on = [&](int c) { d.push_back(kPlace + c); };
  const AgentMemory& m = v.m;
  if (place == m.location) on(PlaceCurrent);
  if (v.reachable(place)) on(PlaceReachable);
  if (contains(m.known_rooms, place)) {
    on(PlaceRoom);
    auto hop = [&](auto pred) { return v.first_hop(pred) == place; };
    if (hop([&](const std::string& r) {
          return v.room_has(r, [&](const std::string& x) { return v.is_destination(x); });
        }))
      on(PlaceTowardDestination);
    if (v.processing_task() && hop([&](const std::string& r) {
          return v.room_has(r, [&](const std::string& x) { return v.is_appliance(x); });
        }))
      on(PlaceTowardAppliance);
    if (hop([&](const std::string& r) {
          return v.room_has(r, [&](const std::string& x) { return v.target_seen_at(x); });
        }))
      on(PlaceTowardTarget);
    if (hop([&](const std::string& r) {
          return v.room_has(r, [&](const std::string& x) { return v.lamp_at(x); });
        }))
      on(PlaceTowardLamp);
    if (hop([&](const std::string& r) { return v.room_unexplored(r); }))
      on(PlaceTowardUnexplored);
    return d;
  }
  const bool destination = v.is_destination(place);
  const bool appliance = v.is_appliance(place);
  const bool target = v.target_seen_at(place);
  const bool lamp = v.lamp_at(place);
  if (destination) on(PlaceDestination);
  if (appliance) on(PlaceAppliance);
  if (target) on(PlaceTargetSeen);
  if (lamp) on(PlaceLamp);
  if (!m.visited.count(place)) {
    on(PlaceUnvisited);
  } else if (!destination && !appliance && !target && !lamp) {
    on(PlaceVisitedPlain);
  }
  if (m.known_closed.count(place)) on(PlaceClosed);
  return d;
}

std::vector<int> object_descriptor(const View& v, const std::string& obj) {
  using namespace columns;
  std::vector<int> d;
  auto on = [&](int c) { d.push_back(kObject + c); };
  const AgentMemory& m = v.m;
  const std::string kind = kind_of(obj);
  if (kind == m.target_kind) on(ObjTarget);
  if (m.held == obj) on(ObjHeld);
  if (m.held != obj && v.at_receptacle() && v.is_destination(m.location)) on(ObjInDestination);
  if (kind == "desklamp") on(ObjFixed);
  if (m.processed.count(obj)) on(ObjProcessed);
  return d;
}

std::vector<std::string> argument_candidates(const View& v, Verb verb, int slot) {
  const AgentMemory& m = v.m;
  std::vector<std::string> out;
  auto held = [&] {
    if (m.held) out.push_back(*m.held);
  };
  auto current = [&] {
    if (v.at_receptacle()) out.push_back(m.location);
  };
  switch (verb) {
    case Verb::GoTo:
      for (const auto& r : m.known_receptacles)
        if (v.reachable(r)) out.push_back(r);
      for (const auto& r : m.known_rooms)
        if (v.reachable(r)) out.push_back(r);
      break;
    case Verb::Open:
    case Verb::Close: current(); break;
    case Verb::Take: out = v.here(); break;
    case Verb::Put:
      if (slot == 0) held();
      else current();
      break;
    case Verb::Heat:
    case Verb::Cool:
    case Verb::Clean: held(); break;
    case Verb::Examine:
      held();
      for (const auto& o : v.here()) out.push_back(o);
      break;
    case Verb::Inventory:
    case Verb::Done: break;
  }
  return out;
}

bool is_openable_kind(const std::string& kind) {
  return kind == "fridge" || kind == "microwave" || kind == "cabinet" || kind == "drawer";
}

bool is_place_verb(Verb verb, int slot) {
  return verb == Verb::GoTo || verb == Verb::Open || verb == Verb::Close ||
         (verb == Verb::Put && slot == 1);
}

Eigen::VectorXd base_features(const AgentMemory& m) {
  const View v{m};
  Eigen::VectorXd x = Eigen::VectorXd::Zero(features::kTotal);
  auto set = [&](int i, bool on) {
    if (on) x[i] = 1.0;
  };
  x[f::kBias] = 1.0;
  x[f::kTaskType + static_cast<int>(m.task_type)] = 1.0;
  const bool empty = !m.held;
  set(f::kHandsEmpty, empty);
  set(f::kHoldingTarget, v.holding_target());
  set(f::kHoldingOther, m.held && !v.holding_target());
  set(f::kTargetHere, v.target_here());
  const bool at_dest = v.at_receptacle() && v.is_destination(m.location);
  const bool at_appliance = v.at_receptacle() && v.is_appliance(m.location);
  const bool at_lamp = v.visible_here() && v.lamp_at(m.location);
  set(f::kAtDestination, at_dest);
  set(f::kAtAppliance, at_appliance);
  set(f::kAtLamp, at_lamp);
  set(f::kAtRoom, m.at_room);
  set(f::kLocationClosed, v.at_receptacle() && m.location_closed);
  set(f::kNeedsProcessing, v.needs_processing());
  set(f::kReadyToPlace, v.ready_to_place());
  set(f::kLookReady, v.look_ready());
  set(f::kPlacedOne, m.placed_targets > 0);

  bool target_known = false, lamp_known = false, unvisited = false, room_unvisited = false;
  for (const auto& r : m.known_receptacles) {
    if (r != m.location && v.target_seen_at(r)) target_known = true;
    if (v.lamp_at(r)) lamp_known = true;
    if (!m.visited.count(r)) {
      unvisited = true;
      if (m.easy || v.room_of_receptacle(r) == m.room) room_unvisited = true;
    }
  }
  set(f::kTargetLocationKnown, target_known);
  set(f::kLampKnown, lamp_known);
  set(f::kUnvisitedKnown, unvisited);
  set(f::kRoomHasUnvisited, room_unvisited);
  set(f::kLastInvalid, !m.last_valid);
  const auto here = v.here();
  set(f::kOtherObjectsHere, std::any_of(here.begin(), here.end(), [&](const std::string& o) {
        return kind_of(o) != m.target_kind;
      }));
  set(f::kPlaceNow, v.ready_to_place() && at_dest);
  set(f::kExamineNow, v.look_ready() && at_lamp);
  set(f::kTakeNow, empty && v.target_here());
  set(f::kOpenNow, empty && v.at_receptacle() && m.location_closed);

  const bool openable_here = v.at_receptacle() && is_openable_kind(kind_of(m.location));
  set(f::kCanTake, empty && !here.empty());
  set(f::kCanPut, !empty && v.visible_here());
  set(f::kCanOpen, openable_here && m.location_closed);
  set(f::kCanClose, openable_here && !m.location_closed);
  set(f::kCanExamine, !empty || !here.empty());
  const std::string here_kind = v.at_receptacle() ? kind_of(m.location) : std::string();
  set(f::kHoldingAtMicrowave, !empty && here_kind == "microwave");
  set(f::kHoldingAtFridge, !empty && here_kind == "fridge");
  set(f::kHoldingAtSink, !empty && here_kind == "sinkbasin");
  set(f::kProcessAtMicrowave, v.needs_processing() && here_kind == "microwave");
  set(f::kProcessAtFridge, v.needs_processing() && here_kind == "fridge");
  set(f::kProcessAtSink, v.needs_processing() && here_kind == "sinkbasin");

  x[f::kLastVerb + (m.last_verb ? 1 + static_cast<int>(*m.last_verb) : 0)] = 1.0;
  x[f::kStepBucket + step_bucket(m.steps)] = 1.0;
  for (std::size_t k = 0; k < kReceptacleTokens.size(); ++k) {
    for (const auto& r : m.visited) {
      if (kind_of(r) == kReceptacleTokens[k]) {
        x[f::kVisitedKind + static_cast<int>(k)] = 1.0;
        break;
      }
    }
  }
  for (const auto& token : m.last_tokens) {
    int index = f::kBagUnknown;
    for (std::size_t k = 0; k < kReceptacleTokens.size(); ++k)
      if (token == kReceptacleTokens[k]) index = f::kBag + static_cast<int>(k);
    for (std::size_t k = 0; k < kObjectTokens.size(); ++k)
      if (token == kObjectTokens[k])
        index = f::kBag + static_cast<int>(kReceptacleTokens.size() + k);
    if (contains(m.known_rooms, token)) continue;
    x[index] = 1.0;
  }
  return x;
}

Stage thought_stage(const Eigen::VectorXd& base) {
  Stage s;
  s.features = base;
  for (int i = 0; i < kNumThoughts; ++i) {
    s.descriptors.push_back({columns::kThought + i});
    s.candidate_ids.push_back("thought " + std::to_string(i));
  }
  return s;
}

Stage verb_stage(const Eigen::VectorXd& base, int thought) {
  Stage s;
  s.features = base;
  s.features[features::kThoughtBlock + thought] = 1.0;
  for (int i = 0; i < kNumVerbs; ++i) {
    s.descriptors.push_back({columns::kVerb + i});
    s.candidate_ids.push_back(to_string(static_cast<Verb>(i)));
  }
  return s;
}

// Empty stage (no candidates) when the slot has nothing in scope.
Stage argument_stage(const AgentMemory& m, const Eigen::VectorXd& base, Verb verb, int slot) {
  const View v{m};
  Stage s;
  s.features = base;
  s.features[features::kVerbBlock + static_cast<int>(verb)] = 1.0;
  s.features[features::kSlotBlock + slot] = 1.0;
  s.candidate_ids = argument_candidates(v, verb, slot);
  const bool place = is_place_verb(verb, slot);
  for (const auto& id : s.candidate_ids)
    s.descriptors.push_back(place ? place_descriptor(v, id) : object_descriptor(v, id));
  return s;
}

double log_softmax_at(const Eigen::VectorXd& logits, int index) {
  const double peak = logits.maxCoeff();
  const double lse = peak + std::log((logits.array() - peak).exp().sum());
  return logits[index] - lse;
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double peak = logits.maxCoeff();
  const double lse = peak + std::log((logits.array() - peak).exp().sum());
  return logits.array() - lse;
}

int choose(const ChoiceDistribution& dist, Rng& rng, SampleMode mode) {
  const auto n = static_cast<int>(dist.probabilities.size());
  if (mode == SampleMode::Greedy) {
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (dist.logits[i] > dist.logits[best]) best = i;
    return best;
  }
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (int i = 0; i < n; ++i) {
    cumulative += dist.probabilities[i];
    if (u < cumulative) return i;
  }
  return n - 1;
}

// sum_c weight_c * psi_c as a dense column vector.
Eigen::VectorXd mix_descriptors(const Stage& stage, const Eigen::VectorXd& weight, int cols) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(cols);
  for (std::size_t c = 0; c < stage.descriptors.size(); ++c)
    for (int col : stage.descriptors[c]) g[col] += weight[static_cast<Eigen::Index>(c)];
  return g;
}

void check_shape(const PolicyParams& params) {
  if (params.feature_dim() != features::kTotal || params.choice_vocab() != columns::kTotal)
    throw std::invalid_argument("policy parameters have the wrong shape");
}

std::string process_word(const AgentMemory& m) {
  switch (m.task_type) {
    case TaskType::Heat: return "heat";
    case TaskType::Cool: return "cool";
    case TaskType::Clean: return "clean";
    default: return "handle";
  }
}

}  // namespace

PolicyParams PolicyParams::zeros() {
  return {Eigen::MatrixXd::Zero(features::kTotal, columns::kTotal)};
}

AgentMemory AgentMemory::start(const TaskSpec& spec, const Observation& initial) {
  AgentMemory m;
  m.task_type = spec.task_type;
  m.target_kind = spec.target_kind;
  m.destination_kind = spec.destination_kind;
  m.appliance_kind = spec.appliance_kind;
  m.easy = initial.percept.room.empty();
  m.update(std::nullopt, initial);
  m.steps = 0;
  m.last_verb.reset();
  m.last_valid = true;
  return m;
}

void AgentMemory::update(const std::optional<ParsedAction>& action,
                         const Observation& observation) {
  using Event = Percept::Event;
  const Percept& p = observation.percept;
  last_verb = action ? std::optional<Verb>(action->verb) : std::nullopt;
  last_valid = observation.valid;
  ++steps;

  last_tokens.clear();
  auto token = [&](const std::string& id) { last_tokens.push_back(kind_of(id)); };
  for (const auto& id : p.event_args) token(id);
  for (const auto& id : p.listed_receptacles) token(id);
  for (const auto& id : p.visible_objects) token(id);

  const auto& a = p.event_args;
  switch (p.event) {
    case Event::Start:
    case Event::Arrive:
    case Event::Opened: {
      location = p.location;
      at_room = p.at_room;
      if (at_room) {
        if (!p.room.empty()) {
          room = p.room;
          add_unique(known_rooms, room);
          visited_rooms.insert(room);
        }
        for (const auto& r : p.listed_receptacles) {
          add_unique(known_receptacles, r);
          if (!p.room.empty()) receptacle_room[r] = p.room;
        }
        for (const auto& exit : p.exits) {
          add_unique(known_rooms, exit);
          room_edges.insert({room, exit});
          room_edges.insert({exit, room});
        }
      } else {
        add_unique(known_receptacles, location);
        auto it = receptacle_room.find(location);
        if (it != receptacle_room.end()) room = it->second;
        location_closed = p.location_closed;
        if (location_closed) {
          known_closed.insert(location);
        } else {
          known_closed.erase(location);
          visited.insert(location);
          contents[location] = p.visible_objects;
        }
      }
      break;
    }
    case Event::Closed:
      known_closed.insert(location);
      location_closed = true;
      break;
    case Event::Took: {
      held = a[0];
      auto& items = contents[a[1]];
      items.erase(std::remove(items.begin(), items.end(), a[0]), items.end());
      break;
    }
    case Event::Placed: {
      held.reset();
      auto& items = contents[a[1]];
      items.push_back(a[0]);
      std::sort(items.begin(), items.end());
      if (kind_of(a[0]) == target_kind && kind_of(a[1]) == destination_kind) ++placed_targets;
      break;
    }
    case Event::Heated:
    case Event::Cooled:
    case Event::Cleaned: {
      const Event wanted = task_type == TaskType::Heat   ? Event::Heated
                           : task_type == TaskType::Cool ? Event::Cooled
                                                         : Event::Cleaned;
      if (p.event == wanted && !appliance_kind.empty()) processed.insert(a[0]);
      break;
    }
    case Event::Inventory:
      if (a.empty()) held.reset();
      else held = a[0];
      break;
    case Event::Examined:
    case Event::ExaminedUnderLamp:
    case Event::DoneDeclared:
    case Event::Invalid: break;
  }
}

AgentMemory memory_of(const Trajectory& trajectory) {
  AgentMemory m = AgentMemory::start(trajectory.spec, trajectory.initial_observation);
  for (const auto& turn : trajectory.turns) m.update(turn.response.parsed, turn.observation);
  return m;
}

Trajectory prefix(const Trajectory& trajectory, std::size_t t) {
  Trajectory out;
  out.spec = trajectory.spec;
  out.initial_observation = trajectory.initial_observation;
  out.max_steps = trajectory.max_steps;
  out.turns.assign(trajectory.turns.begin(),
                   trajectory.turns.begin() + static_cast<std::ptrdiff_t>(t));
  for (const auto& turn : out.turns)
    if (!turn.observation.valid) ++out.invalid_count;
  return out;
}

Eigen::VectorXd featurize(const Trajectory& trajectory, const TaskSpec& spec) {
  Trajectory copy = trajectory;
  copy.spec = spec;
  return base_features(memory_of(copy));
}

ChoiceDistribution distribution(const PolicyParams& params, const Stage& stage) {
  const Eigen::VectorXd column_scores = params.weights.transpose() * stage.features;
  ChoiceDistribution dist;
  const auto n = static_cast<Eigen::Index>(stage.descriptors.size());
  dist.logits = Eigen::VectorXd::Zero(n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (int col : stage.descriptors[static_cast<std::size_t>(c)]) dist.logits[c] += column_scores[col];
  dist.probabilities = log_softmax(dist.logits).array().exp();
  dist.candidate_ids = stage.candidate_ids;
  return dist;
}

std::vector<Stage> stages_for(const AgentMemory& memory, const ChoiceRecord& record) {
  if (record.thought < 0 || record.thought >= kNumThoughts)
    throw ChoiceOutOfVocabulary("thought id out of range");
  if (record.verb < 0 || record.verb >= kNumVerbs)
    throw ChoiceOutOfVocabulary("verb id out of range");
  const Eigen::VectorXd base = base_features(memory);
  std::vector<Stage> stages;
  stages.push_back(thought_stage(base));
  stages.back().chosen = record.thought;
  stages.push_back(verb_stage(base, record.thought));
  stages.back().chosen = record.verb;
  const auto verb = static_cast<Verb>(record.verb);
  std::size_t used = 0;
  for (int slot = 0; slot < verb_arity(verb); ++slot) {
    Stage s = argument_stage(memory, base, verb, slot);
    if (s.candidate_ids.empty()) break;
    if (used >= record.args.size()) throw ChoiceOutOfVocabulary("missing recorded argument");
    auto it = std::find(s.candidate_ids.begin(), s.candidate_ids.end(), record.args[used]);
    if (it == s.candidate_ids.end())
      throw ChoiceOutOfVocabulary("argument not in scope: " + record.args[used]);
    s.chosen = static_cast<int>(it - s.candidate_ids.begin());
    ++used;
    stages.push_back(std::move(s));
  }
  if (used != record.args.size()) throw ChoiceOutOfVocabulary("unexpected recorded argument");
  return stages;
}

std::optional<Stage> next_stage(const AgentMemory& memory, const ChoiceRecord& partial) {
  const Eigen::VectorXd base = base_features(memory);
  if (partial.thought < 0) return thought_stage(base);
  if (partial.thought >= kNumThoughts) throw ChoiceOutOfVocabulary("thought id out of range");
  if (partial.verb < 0) return verb_stage(base, partial.thought);
  if (partial.verb >= kNumVerbs) throw ChoiceOutOfVocabulary("verb id out of range");
  const auto verb = static_cast<Verb>(partial.verb);
  const int slot = static_cast<int>(partial.args.size());
  if (slot >= verb_arity(verb)) return std::nullopt;
  Stage s = argument_stage(memory, base, verb, slot);
  if (s.candidate_ids.empty()) return std::nullopt;
  return s;
}

std::vector<std::vector<Stage>> trajectory_stages(const Trajectory& trajectory) {
  std::vector<std::vector<Stage>> out;
  AgentMemory m = AgentMemory::start(trajectory.spec, trajectory.initial_observation);
  for (const auto& turn : trajectory.turns) {
    if (!turn.response.choices) throw ChoiceOutOfVocabulary("response has no recorded choices");
    out.push_back(stages_for(m, *turn.response.choices));
    m.update(turn.response.parsed, turn.observation);
  }
  return out;
}

std::string thought_text(int thought, const AgentMemory& m) {
  const std::string target = m.target_kind;
  const std::string dest = m.destination_kind.empty() ? "desklamp" : m.destination_kind;
  const std::string appliance = m.appliance_kind.empty() ? "right appliance" : m.appliance_kind;
  const std::string where = m.location;
  switch (thought) {
    case 0: return "I need to find a " + target + " first.";
    case 1: return "The " + target + " may be somewhere I have not checked yet.";
    case 2: return "I should check the " + where + " for a " + target + ".";
    case 3: return "I have the " + target + "; now I should go to the " + dest + ".";
    case 4: return "I need to " + process_word(m) + " the " + target + " with the " + appliance + ".";
    case 5: return "The " + where + " is closed, so I should open it.";
    case 6: return "I see a " + target + " here, so I should take it.";
    case 7: return "Now I can put the " + target + " in the " + dest + ".";
    case 8: return "I should look at the " + target + " under the desklamp.";
    case 9: return "Let me check what I am carrying.";
    case 10: return "That did not work, so I should try something else.";
    case 11: return "I should move to another room to keep searching.";
    case 12: return "One " + target + " is in place; I need to find the second one.";
    case 13: return "I think the task is complete now.";
    case 14: return "I am not holding anything useful yet.";
    case 15: return "Let me recall where the " + dest + " is.";
    default: throw ChoiceOutOfVocabulary("thought id out of range");
  }
}

StepResponse sample_response(const PolicyParams& params, const Trajectory& trajectory,
                             const TaskSpec& spec, Rng& rng, SampleMode mode) {
  check_shape(params);
  Trajectory conditioned = trajectory;
  conditioned.spec = spec;
  const AgentMemory m = memory_of(conditioned);
  const Eigen::VectorXd base = base_features(m);

  StepResponse out;
  ChoiceRecord record;
  auto draw = [&](const Stage& stage) {
    const ChoiceDistribution dist = distribution(params, stage);
    const int index = choose(dist, rng, mode);
    out.token_log_probs.push_back(log_softmax_at(dist.logits, index));
    return index;
  };

  record.thought = draw(thought_stage(base));
  record.verb = draw(verb_stage(base, record.thought));
  const auto verb = static_cast<Verb>(record.verb);
  ParsedAction action{verb, {}};
  for (int slot = 0; slot < verb_arity(verb); ++slot) {
    const Stage s = argument_stage(m, base, verb, slot);
    if (s.candidate_ids.empty()) break;
    const int index = draw(s);
    record.args.push_back(s.candidate_ids[static_cast<std::size_t>(index)]);
  }
  action.args = record.args;

  out.thought = thought_text(record.thought, m);
  out.action_text = render_action(action);
  try {
    out.parsed = parse_action(out.action_text, spec);
  } catch (const GrammarError&) {
    out.parsed.reset();
  }
  out.total_log_prob = 0.0;
  for (double lp : out.token_log_probs) out.total_log_prob += lp;
  out.choices = std::move(record);
  return out;
}

double stages_log_prob(const PolicyParams& params, const std::vector<Stage>& stages) {
  double total = 0.0;
  for (const auto& stage : stages)
    total += log_softmax_at(distribution(params, stage).logits, stage.chosen);
  return total;
}

void add_grad_log_prob(const PolicyParams& params, const std::vector<Stage>& stages,
                       double scale, Eigen::MatrixXd& gradient) {
  const int cols = params.choice_vocab();
  for (const auto& stage : stages) {
    const ChoiceDistribution dist = distribution(params, stage);
    Eigen::VectorXd g = -mix_descriptors(stage, dist.probabilities, cols);
    for (int col : stage.descriptors[static_cast<std::size_t>(stage.chosen)]) g[col] += 1.0;
    gradient.noalias() += scale * stage.features * g.transpose();
  }
}

double stages_kl(const PolicyParams& params_p, const PolicyParams& params_q,
                 const std::vector<Stage>& stages) {
  double total = 0.0;
  for (const auto& stage : stages) {
    const Eigen::VectorXd lp = log_softmax(distribution(params_p, stage).logits);
    const Eigen::VectorXd lq = log_softmax(distribution(params_q, stage).logits);
    total += (lp.array().exp() * (lp - lq).array()).sum();
  }
  return total;
}

void add_grad_kl(const PolicyParams& params_p, const PolicyParams& params_q,
                 const std::vector<Stage>& stages, double scale, Eigen::MatrixXd& gradient) {
  const int cols = params_p.choice_vocab();
  for (const auto& stage : stages) {
    const Eigen::VectorXd lp = log_softmax(distribution(params_p, stage).logits);
    const Eigen::VectorXd lq = log_softmax(distribution(params_q, stage).logits);
    const Eigen::ArrayXd p = lp.array().exp();
    const double kl = (p * (lp - lq).array()).sum();
    const Eigen::VectorXd weight = (p * ((lp - lq).array() - kl)).matrix();
    gradient.noalias() += scale * stage.features * mix_descriptors(stage, weight, cols).transpose();
  }
}

namespace {

std::vector<Stage> response_stages(const Trajectory& trajectory, const StepResponse& response) {
  if (!response.choices) throw ChoiceOutOfVocabulary("response has no recorded choices");
  return stages_for(memory_of(trajectory), *response.choices);
}

}  // namespace

double log_prob(const PolicyParams& params, const Trajectory& trajectory,
                const StepResponse& response) {
  check_shape(params);
  return stages_log_prob(params, response_stages(trajectory, response));
}

Eigen::MatrixXd grad_log_prob(const PolicyParams& params, const Trajectory& trajectory,
                              const StepResponse& response) {
  check_shape(params);
  Eigen::MatrixXd gradient = Eigen::MatrixXd::Zero(params.feature_dim(), params.choice_vocab());
  add_grad_log_prob(params, response_stages(trajectory, response), 1.0, gradient);
  return gradient;
}

double kl_step(const PolicyParams& params_p, const PolicyParams& params_q,
               const Trajectory& trajectory, const StepResponse& response) {
  check_shape(params_p);
  check_shape(params_q);
  return stages_kl(params_p, params_q, response_stages(trajectory, response));
}

void save_checkpoint(const std::string& path, const PolicyParams& params, long step_index) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << "interplan-policy 1\n"
      << "feature_dim " << params.feature_dim() << "\n"
      << "choice_vocab " << params.choice_vocab() << "\n"
      << "step_index " << step_index << "\n";
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < params.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.weights.cols(); ++c)
      out << (c ? " " : "") << params.weights(r, c);
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

PolicyParams load_checkpoint(const std::string& path, long* step_index) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  std::string magic, key;
  int version = 0, rows = 0, cols = 0;
  long step = 0;
  in >> magic >> version;
  if (magic != "interplan-policy" || version != 1)
    throw std::runtime_error("not a policy checkpoint: " + path);
  in >> key >> rows;
  if (key != "feature_dim") throw std::runtime_error("bad checkpoint header");
  in >> key >> cols;
  if (key != "choice_vocab") throw std::runtime_error("bad checkpoint header");
  in >> key >> step;
  if (key != "step_index") throw std::runtime_error("bad checkpoint header");
  PolicyParams params{Eigen::MatrixXd::Zero(rows, cols)};
  std::string token;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!(in >> token)) throw std::runtime_error("truncated checkpoint: " + path);
      params.weights(r, c) = std::stod(token);
    }
  }
  if (step_index) *step_index = step;
  return params;
}

}  // namespace interplan
