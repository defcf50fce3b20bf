#pragma once

// Double-DQN phase selection.  One agent drives one intersection; when every
// intersection shares the same layout (same phase count, same lane counts)
// a single agent can be shared across all of them, which is how the grid
// scenarios are trained.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "driftsim/controllers.hpp"
#include "driftsim/network.hpp"
#include "driftsim/qnetwork.hpp"
#include "driftsim/replay.hpp"

namespace driftsim {

/// Hyperparameters.  Defaults are the ones used by every built-in scenario.
struct AgentConfig {
  std::vector<int> hidden{64, 64};
  double gamma = 0.95;
  double learning_rate = 1e-3;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  long epsilon_decay_steps = 20000;  // linear anneal over this many actions
  std::size_t replay_capacity = 50000;
  std::size_t batch_size = 64;
  long target_sync_period = 500;  // gradient steps between target refreshes
  double observation_scale = 0.05;
  int updates_per_decision = 1;
  bool share_across_intersections = true;

  void validate() const;
};

/// Which lanes feed an intersection's observation vector and in what order.
struct ObservationLayout {
  IntersectionId intersection = kInvalidId;
  int n_phases = 0;
  std::vector<LaneId> incoming;  // sorted by id
  std::vector<LaneId> outgoing;  // sorted by id

  static ObservationLayout of(const Network& net, IntersectionId id);

  int dimension() const {
    return n_phases +
           2 * static_cast<int>(incoming.size() + outgoing.size());
  }

  /// True when another layout produces observation vectors of identical
  /// shape and meaning, so one network can serve both intersections.
  bool same_template(const ObservationLayout& other) const {
    return n_phases == other.n_phases &&
           incoming.size() == other.incoming.size() &&
           outgoing.size() == other.outgoing.size();
  }
};

/// Observation: one-hot of the active phase, then (moving, stopped) vehicle
/// counts for each incoming lane in id order, then the same for outgoing
/// lanes.  Raw counts; any scaling is applied by the consumer.
std::vector<double> encode_state(const Network& net,
                                 const ObservationLayout& layout,
                                 PhaseId active_phase,
                                 std::span<const int> moving_vehicles,
                                 std::span<const int> stopped_vehicles);

// ---- Reward shapes (all "higher is better", hence the negations) ----

/// Negated total absolute net flow imbalance: -sum_i |phase_flow[i]|.
double reward_flow(std::span<const double> phase_flow_sums);
/// Negated total absolute pressure: -sum_i |phase_pressure[i]|.
double reward_pressure(std::span<const double> phase_pressures);
/// Negated stopped-vehicle-seconds accrued since the previous decision.
double reward_waiting_time(double stopped_vehicle_seconds);
/// Negated mean queue length over the given lanes.
double reward_queue(std::span<const double> lane_queues);

/// Epsilon-greedy action choice.  With probability epsilon picks uniformly
/// among the permitted actions, otherwise the permitted action with the
/// highest Q-value (lowest index wins ties).  `exclude`, when set, removes
/// one action from consideration.
int select_action(const QNetwork& net, std::span<const double> observation,
                  double epsilon, std::mt19937_64& rng,
                  std::optional<int> exclude = std::nullopt);

/// As above but restricted to an explicit candidate set (ascending indices).
int select_action_among(const QNetwork& net,
                        std::span<const double> observation, double epsilon,
                        std::mt19937_64& rng,
                        std::span<const int> candidates);

/// One Double-DQN gradient step over a minibatch: targets use the online
/// network's argmax and the target network's value.  Returns the mean loss
/// 0.5 * residual^2 over the batch.  Throws if the loss is not finite.
double ddqn_update(QNetwork& online, const QNetwork& target,
                   std::span<const Experience* const> batch,
                   const AgentConfig& cfg, AdamOptimizer& optimizer);

/// Replay-based Double-DQN agent for one observation template.
class DdqnAgent {
 public:
  DdqnAgent(int observation_dim, int n_actions, AgentConfig cfg,
            std::uint64_t seed);

  int observation_dim() const { return observation_dim_; }
  int n_actions() const { return n_actions_; }
  const AgentConfig& config() const { return cfg_; }

  /// Current exploration rate under the linear anneal.
  double epsilon() const;
  long actions_taken() const { return actions_taken_; }
  long gradient_steps() const { return gradient_steps_; }

  /// Choose an action for a raw (unscaled) observation.  When `explore` is
  /// false the policy is greedy and the anneal clock does not advance.
  int act(std::span<const double> observation, bool explore,
          std::span<const int> candidates);

  void remember(Experience e) { replay_.push(std::move(e)); }
  std::size_t replay_size() const { return replay_.size(); }

  /// One training step if the buffer holds at least a batch; returns the
  /// batch loss, or nothing if training was skipped.
  std::optional<double> train_step();

  void sync_target() { target_ = online_; }

  const QNetwork& online() const { return online_; }
  const QNetwork& target() const { return target_; }

  /// Greedy Q-values for a raw observation (scaling applied internally).
  std::vector<double> q_values(std::span<const double> observation) const;

  std::string to_json_string() const;
  static DdqnAgent from_json_string(const std::string& text);

 private:
  int observation_dim_;
  int n_actions_;
  AgentConfig cfg_;
  QNetwork online_;
  QNetwork target_;
  AdamOptimizer optimizer_;
  ReplayBuffer replay_;
  std::mt19937_64 rng_;
  long actions_taken_ = 0;
  long gradient_steps_ = 0;

  std::vector<double> scaled(std::span<const double> observation) const;
};

/// Which scalar the learned controller optimises.
enum class RewardKind {
  Flow,            // net counterfactual flow imbalance (library use)
  Pressure,        // rl-mp: saturation-weighted pressure
  SupplyPressure,  // rl-bp: supply-capped pressure
  WaitingTime,     // rl-wt: stopped-vehicle time
  Queue,           // rl-q: mean lane queue
};

const char* reward_kind_name(RewardKind kind);

/// Per-episode training statistics for one controller instance.
struct RlEpisodeStats {
  double reward_sum = 0.0;
  long decisions = 0;
  double loss_sum = 0.0;
  long gradient_steps = 0;

  double mean_reward() const {
    return decisions > 0 ? reward_sum / static_cast<double>(decisions) : 0.0;
  }
  double mean_loss() const {
    return gradient_steps > 0 ? loss_sum / static_cast<double>(gradient_steps)
                              : 0.0;
  }
};

/// Signal controller backed by Double-DQN agents.  In training mode it
/// records transitions and performs gradient steps at every decision; in
/// evaluation mode it acts greedily and never touches the replay buffer.
class RlController : public Controller {
 public:
  RlController(const Network& net, RewardKind kind, AgentConfig cfg,
               bool training, std::uint64_t seed);

  std::string name() const override;
  void begin_episode(std::uint64_t seed) override;
  ControllerDecision decide(const DecisionContext& ctx, IntersectionId node,
                            PhaseId current,
                            std::optional<PhaseId> exclude) override;
  void end_episode(const DecisionContext& ctx) override;
  double last_reward() const override;

  bool training() const { return training_; }
  void set_training(bool training) { training_ = training; }
  RewardKind reward_kind() const { return kind_; }
  const RlEpisodeStats& episode_stats() const { return stats_; }

  /// The distinct agents (one per observation template when sharing).
  std::size_t agent_count() const { return agents_.size(); }
  DdqnAgent& agent(std::size_t i) { return *agents_.at(i); }
  const DdqnAgent& agent(std::size_t i) const { return *agents_.at(i); }

  /// Serialise every agent plus the topology fingerprint of the network the
  /// controller was built for.
  std::string checkpoint_json(const Network& net) const;
  /// Restore agents from a checkpoint.  Refuses (throws std::runtime_error)
  /// when the stored fingerprint does not match the current network.
  void load_checkpoint_json(const Network& net, const std::string& text);

 private:
  struct Slot {
    ObservationLayout layout;
    std::size_t agent_index = 0;
    std::vector<double> last_observation;
    int last_action = -1;
    double last_reward = 0.0;
    bool has_pending = false;
  };

  double compute_reward(const DecisionContext& ctx, const Slot& slot) const;
  Slot& slot_for(IntersectionId node);

  RewardKind kind_;
  AgentConfig cfg_;
  bool training_;
  std::vector<std::shared_ptr<DdqnAgent>> agents_;
  std::vector<Slot> slots_;             // indexed by intersection id
  RlEpisodeStats stats_;
};

RewardKind reward_kind_for_controller(const std::string& controller_name);

}  // namespace driftsim
