#ifndef INTERPLAN_POLICY_HPP_
#define INTERPLAN_POLICY_HPP_

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "interplan/env.hpp"
#include "interplan/random.hpp"
#include "interplan/react.hpp"

namespace interplan {

class ChoiceOutOfVocabulary : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

inline constexpr int kNumThoughts = 16;

// Column blocks of the weight matrix. Thought and verb columns are one-hot
// choices; argument candidates activate one or more descriptor columns.
namespace columns {
inline constexpr int kThought = 0;
inline constexpr int kVerb = kThought + kNumThoughts;
inline constexpr int kPlace = kVerb + kNumVerbs;
enum Place {
  PlaceRoom,
  PlaceCurrent,
  PlaceDestination,
  PlaceAppliance,
  PlaceTargetSeen,
  PlaceLamp,
  PlaceUnvisited,
  PlaceVisitedPlain,
  PlaceClosed,
  PlaceReachable,
  PlaceTowardDestination,
  PlaceTowardAppliance,
  PlaceTowardTarget,
  PlaceTowardLamp,
  PlaceTowardUnexplored,
  PlaceColumns
};
inline constexpr int kObject = kPlace + PlaceColumns;
enum ObjectColumn { ObjTarget, ObjHeld, ObjInDestination, ObjFixed, ObjProcessed, ObjColumns };
inline constexpr int kTotal = kObject + ObjColumns;
}  // namespace columns

// Feature layout: observation features, then the conditioning blocks filled
// in by later choices of the same step.
namespace features {
inline constexpr int kBase = 107;
inline constexpr int kThoughtBlock = kBase;
inline constexpr int kVerbBlock = kThoughtBlock + kNumThoughts;
inline constexpr int kSlotBlock = kVerbBlock + kNumVerbs;
inline constexpr int kTotal = kSlotBlock + 2;
}  // namespace features

struct PolicyParams {
  Eigen::MatrixXd weights;  // feature_dim x choice_vocab

  static PolicyParams zeros();
  int feature_dim() const { return static_cast<int>(weights.rows()); }
  int choice_vocab() const { return static_cast<int>(weights.cols()); }
  bool all_finite() const { return weights.allFinite(); }
};

struct ChoiceDistribution {
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities;
  std::vector<std::string> candidate_ids;
};

// What the agent has gathered from its own history: the instruction, its
// actions and the observations they produced.
struct AgentMemory {
  TaskType task_type = TaskType::Pick;
  std::string target_kind;
  std::string destination_kind;
  std::string appliance_kind;

  std::string location;
  bool at_room = true;
  std::string room;  // current room when known
  bool location_closed = false;
  std::optional<std::string> held;
  std::set<std::string> processed;
  int placed_targets = 0;

  std::vector<std::string> known_receptacles;  // first-seen order
  std::vector<std::string> known_rooms;
  std::map<std::string, std::string> receptacle_room;
  std::set<std::pair<std::string, std::string>> room_edges;
  std::set<std::string> visited;
  std::set<std::string> visited_rooms;
  std::set<std::string> known_closed;
  std::map<std::string, std::vector<std::string>> contents;  // last seen

  std::optional<Verb> last_verb;
  bool last_valid = true;
  int steps = 0;
  bool easy = true;
  std::vector<std::string> last_tokens;  // entity kinds in the last observation

  static AgentMemory start(const TaskSpec& spec, const Observation& initial);
  void update(const std::optional<ParsedAction>& action, const Observation& observation);
};

AgentMemory memory_of(const Trajectory& trajectory);

// One categorical decision inside a step.
struct Stage {
  Eigen::VectorXd features;
  std::vector<std::vector<int>> descriptors;  // active columns per candidate
  std::vector<std::string> candidate_ids;
  int chosen = -1;
};

ChoiceDistribution distribution(const PolicyParams& params, const Stage& stage);

// Stages of a recorded response, rebuilt from the memory at that step.
std::vector<Stage> stages_for(const AgentMemory& memory, const ChoiceRecord& record);

// Stage of the next choice after a partial record (thought, then verb, then
// arguments in order); empty once the record is complete.
std::optional<Stage> next_stage(const AgentMemory& memory, const ChoiceRecord& partial);

// Stages of every turn of a trajectory, each conditioned only on its prefix.
std::vector<std::vector<Stage>> trajectory_stages(const Trajectory& trajectory);

Eigen::VectorXd featurize(const Trajectory& trajectory, const TaskSpec& spec);

enum class SampleMode { Sample, Greedy };

StepResponse sample_response(const PolicyParams& params, const Trajectory& trajectory,
                             const TaskSpec& spec, Rng& rng,
                             SampleMode mode = SampleMode::Sample);

// Log-probability of `response` as the next step after `trajectory`.
double log_prob(const PolicyParams& params, const Trajectory& trajectory,
                const StepResponse& response);
Eigen::MatrixXd grad_log_prob(const PolicyParams& params, const Trajectory& trajectory,
                              const StepResponse& response);
double kl_step(const PolicyParams& params_p, const PolicyParams& params_q,
               const Trajectory& trajectory, const StepResponse& response);

// Same quantities on prebuilt stages.
double stages_log_prob(const PolicyParams& params, const std::vector<Stage>& stages);
void add_grad_log_prob(const PolicyParams& params, const std::vector<Stage>& stages,
                       double scale, Eigen::MatrixXd& gradient);
double stages_kl(const PolicyParams& params_p, const PolicyParams& params_q,
                 const std::vector<Stage>& stages);
void add_grad_kl(const PolicyParams& params_p, const PolicyParams& params_q,
                 const std::vector<Stage>& stages, double scale, Eigen::MatrixXd& gradient);

// Prefix of `trajectory` with its first `t` turns.
Trajectory prefix(const Trajectory& trajectory, std::size_t t);

std::string thought_text(int thought, const AgentMemory& memory);

void save_checkpoint(const std::string& path, const PolicyParams& params, long step_index);
PolicyParams load_checkpoint(const std::string& path, long* step_index = nullptr);

}  // namespace interplan

#endif  // INTERPLAN_POLICY_HPP_
