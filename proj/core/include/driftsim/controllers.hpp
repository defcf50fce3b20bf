#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "driftsim/flow.hpp"
#include "driftsim/network.hpp"
#include "driftsim/signal.hpp"

namespace driftsim {

/// A clock-driven signal plan: greens in cyclic order, each followed by the
/// amber (yellow + all-red) dictated by the timing rules.
struct FixedTimePlan {
  struct Entry {
    PhaseId phase = kInvalidId;
    double green = 0.0;  ///< s
  };
  std::vector<Entry> entries;

  double cycle(const SignalTimingRules& rules) const;
  /// Throws std::invalid_argument when empty or when a green violates
  /// [min_green, max_green] or the decision cadence.
  void validate(const SignalTimingRules& rules) const;
};

/// Where a plan stands at a wall-clock instant.
struct PlanPosition {
  SignalInterval interval = SignalInterval::Green;
  PhaseId active = kInvalidId;   ///< green phase, or the one that just ended
  PhaseId pending = kInvalidId;  ///< upcoming phase while in amber
  double into = 0.0;             ///< s into the current interval
};

PlanPosition plan_position(const FixedTimePlan& plan, const SignalTimingRules& rules,
                           double clock);

/// Pure fixed-time policy: the phase the plan wants at (clock + offset) mod
/// cycle.  During plan amber the upcoming phase is requested, which makes the
/// signal machine insert the amber exactly where the plan has it.
ControllerDecision fixed_time_decide(const FixedTimePlan& plan, const SignalTimingRules& rules,
                                     double offset, double clock, PhaseId current);

/// Green splits proportional to the demand each phase must serve, rounded to
/// the decision cadence and clamped to [min_green, max_green].
FixedTimePlan proportional_plan(const Network& net, const DemandSpec& demand,
                                const SignalTimingRules& rules, double total_green = 60.0);

/// Corridor progression offsets: intersection k's plan lags the cumulative
/// free-flow travel time from the west end of its row, so a platoon released
/// at one green start meets green downstream.
std::vector<double> green_wave_offsets(const Network& net, const FixedTimePlan& plan,
                                       const SignalTimingRules& rules);

/// Long-run arrival rate per lane, fed by the engine as vehicles join
/// queues.  Used to predict short-horizon arrivals.
class ArrivalRateTracker {
 public:
  explicit ArrivalRateTracker(std::size_t n_lanes) : cumulative_(n_lanes, 0.0) {}
  void record(LaneId lane, double pce) { cumulative_[lane] += pce; }
  void advance(double dt) { elapsed_ += dt; }
  double rate(LaneId lane) const {
    return elapsed_ > 0 ? cumulative_[lane] / elapsed_ : 0.0;
  }
  double predicted(LaneId lane, double horizon) const { return rate(lane) * horizon; }

 private:
  std::vector<double> cumulative_;
  double elapsed_ = 0.0;
};

/// Per-phase scores, aligned with Intersection::phases order.
/// Max-pressure: sum over movements of saturation-weighted queue imbalance.
std::vector<double> phase_scores_max_pressure(const Network& net, const NetworkState& state,
                                              IntersectionId node);
/// Back-pressure: the same imbalance weighted by the feasible flow
/// min(saturation, Greenshields supply at the downstream density).
std::vector<double> phase_scores_back_pressure(const Network& net, const NetworkState& state,
                                               IntersectionId node);
/// Queue-efficiency: PCE the phase could discharge over the next decision
/// interval, given current queues and predicted arrivals.
std::vector<double> phase_scores_doras(const Network& net, const NetworkState& state,
                                       IntersectionId node, const ArrivalRateTracker& tracker,
                                       double horizon);

/// Feasible flow of a movement right now: zero when nothing is queued,
/// otherwise saturation capped by the downstream supply.  Used for
/// flow-based rewards.
double counterfactual_movement_flow(const Network& net, const NetworkState& state, MovementId id);

/// Picks the best-scoring candidate phase.  Candidates are all phases of the
/// intersection, or just {current, successor} when it runs a fixed sequence.
/// Ties prefer the current phase, then the lowest phase id; `exclude` drops
/// one phase from consideration (used for forced max-green switches).
PhaseId pick_phase(const Network& net, const Intersection& node, std::span<const double> scores,
                   PhaseId current, std::optional<PhaseId> exclude);

ControllerDecision max_pressure_decide(const Network& net, const NetworkState& state,
                                       IntersectionId node, PhaseId current,
                                       std::optional<PhaseId> exclude = std::nullopt);
ControllerDecision back_pressure_decide(const Network& net, const NetworkState& state,
                                        IntersectionId node, PhaseId current,
                                        std::optional<PhaseId> exclude = std::nullopt);
ControllerDecision doras_q_decide(const Network& net, const NetworkState& state,
                                  IntersectionId node, const ArrivalRateTracker& tracker,
                                  const SignalTimingRules& rules, PhaseId current,
                                  std::optional<PhaseId> exclude = std::nullopt);

/// Everything a controller may look at when polled.
struct DecisionContext {
  const Network& net;
  const NetworkState& state;
  const ArrivalRateTracker* tracker = nullptr;
  const SignalTimingRules* rules = nullptr;
  double clock = 0.0;
  /// Stopped vehicle-seconds accrued per intersection since its previous
  /// decision; consumed by waiting-time rewards.
  std::span<const double> stopped_seconds_since_decision;
  /// Vehicle counts (not PCE) per lane, for learned-policy observations.
  std::span<const int> moving_vehicles;
  std::span<const int> stopped_vehicles;
};

/// Signal policy driving one or more intersections.  Decisions are requested
/// at the decision cadence while green; `exclude` is set when max-green
/// forces the controller away from the current phase.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual void begin_episode(std::uint64_t /*seed*/) {}
  virtual ControllerDecision decide(const DecisionContext& ctx, IntersectionId node,
                                    PhaseId current, std::optional<PhaseId> exclude) = 0;
  virtual void end_episode(const DecisionContext& /*ctx*/) {}
  /// Initial signal state (fixed-time starts mid-plan per its offset).
  virtual SignalState initial_state(const Network& net, IntersectionId node) const;
  /// Most recent per-decision reward, for metrics; NaN when not learning.
  virtual double last_reward() const { return std::nan(""); }
};

class FixedTimeController : public Controller {
 public:
  FixedTimeController(const Network& net, const DemandSpec& demand,
                      const SignalTimingRules& rules, double total_green = 60.0);
  std::string name() const override { return "fixed"; }
  ControllerDecision decide(const DecisionContext& ctx, IntersectionId node, PhaseId current,
                            std::optional<PhaseId> exclude) override;
  SignalState initial_state(const Network& net, IntersectionId node) const override;
  const FixedTimePlan& plan() const { return plan_; }
  const std::vector<double>& offsets() const { return offsets_; }

 private:
  FixedTimePlan plan_;  // identical template at every intersection, shifted per offset
  SignalTimingRules rules_;
  std::vector<double> offsets_;
};

class DorasQController : public Controller {
 public:
  std::string name() const override { return "doras-q"; }
  ControllerDecision decide(const DecisionContext& ctx, IntersectionId node, PhaseId current,
                            std::optional<PhaseId> exclude) override;
};

class MaxPressureController : public Controller {
 public:
  std::string name() const override { return "max-pressure"; }
  ControllerDecision decide(const DecisionContext& ctx, IntersectionId node, PhaseId current,
                            std::optional<PhaseId> exclude) override;
};

class BackPressureController : public Controller {
 public:
  std::string name() const override { return "back-pressure"; }
  ControllerDecision decide(const DecisionContext& ctx, IntersectionId node, PhaseId current,
                            std::optional<PhaseId> exclude) override;
};

}  // namespace driftsim
