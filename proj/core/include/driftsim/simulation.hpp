#pragma once

// The discrete-time closed loop.  Per-vehicle bookkeeping rides on top of
// the fluid per-lane queues; the two views are reconciled to 1e-9 every
// step, which is the engine's main self-check.
//
// Step order: (1) draw Poisson arrivals and release them onto entry lanes
// while storage allows (the remainder waits outside the network); (2) move
// free-flow vehicles whose stop-line ETA elapsed into the queues (exit
// lanes absorb); (3) poll the controller at decision boundaries and advance
// every signal through the timing machine; (4) accrue per-movement
// discharge budgets; (5) pop queue heads FIFO while budget and downstream
// storage cover their PCE; (6) fluid queue bookkeeping, stopped-time
// accrual, arrival-rate tracking, invariant checks; (7) metrics row.

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "driftsim/controllers.hpp"
#include "driftsim/flow.hpp"
#include "driftsim/lyapunov.hpp"
#include "driftsim/network.hpp"
#include "driftsim/signal.hpp"
#include "driftsim/vehicle.hpp"

namespace driftsim {

struct EpisodeConfig {
  double dt = 1.0;          ///< s
  double horizon = 3600.0;  ///< s
  double warmup = 300.0;    ///< vehicles spawned earlier are excluded
  DemandSpec demand{};
  SignalTimingRules rules{};
  std::uint64_t seed = 1;
  bool record_steps = false;  ///< keep full per-step records for CSV export

  void validate() const;
};

/// One row of the per-step record (kept only when record_steps is set).
struct StepRecord {
  double time = 0.0;                  ///< clock at the end of the step
  std::vector<double> lane_queue;     ///< PCE per lane
  std::vector<PhaseId> active_phase;  ///< per intersection
  double l_linear = 0.0;
  double l_quadratic = 0.0;
  double delta = 0.0;  ///< flow-based linear drift realised this step
  double reward = 0.0; ///< controller's last reward; NaN when not learned
};

struct AverageDelay {
  double value = 0.0;  ///< s per vehicle
  long counted = 0;    ///< exited vehicles spawned after warmup
  bool undefined = false;
};

/// Mean stopped time over exited vehicles spawned at or after `warmup`.
AverageDelay compute_avg_delay(std::span<const Vehicle> vehicles,
                               double warmup);

struct MetricsReport {
  std::string controller;
  std::uint64_t seed = 0;
  double dt = 1.0;
  double horizon = 0.0;
  double warmup = 0.0;

  double avg_vehicle_delay = 0.0;  ///< s/vehicle, post-warmup exited vehicles
  bool delay_undefined = false;
  long vehicles_drawn = 0;     ///< sampled from the demand process
  long vehicles_released = 0;  ///< actually entered the network
  long vehicles_counted = 0;   ///< contributed to avg_vehicle_delay
  long throughput = 0;         ///< vehicles exited

  std::vector<double> mean_queue;  ///< per lane, post-warmup time average
  std::vector<double> max_queue;   ///< per lane, post-warmup maximum

  std::vector<double> total_queue_series;    ///< in-network PCE per step
  std::vector<double> pending_pce_series;    ///< backlog outside entries
  std::vector<StabilityWindow> stability_windows;
  StabilityEstimate stability{};

  std::vector<StepRecord> steps;  ///< empty unless record_steps
};

/// Per-step CSV (documented columns: time, queue_<lane>..., phase_<node>...,
/// l_linear, l_quadratic, delta, reward).  Requires record_steps.
std::string step_csv(const Network& net, const MetricsReport& report);

/// Key: value summary block, byte-stable for reproducibility checks.
std::string summary_text(const MetricsReport& report);

/// A completed signal interval, for auditing green/amber durations.
struct IntervalRecord {
  IntersectionId node = kInvalidId;
  PhaseId phase = kInvalidId;
  SignalInterval interval = SignalInterval::Green;
  long steps = 0;  ///< duration in whole steps of dt
};

class Simulation {
 public:
  Simulation(const Network& net, const EpisodeConfig& cfg,
             Controller& controller);

  void step();
  MetricsReport run();  ///< steps to the horizon and finalises the report

  double clock() const { return clock_; }
  long step_index() const { return step_index_; }
  const Network& network() const { return net_; }
  const NetworkState& state() const { return state_; }
  const std::vector<SignalState>& signals() const { return signals_; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  long pending_count() const { return pending_count_; }
  double pending_pce() const { return pending_pce_; }
  long exited_count() const { return exited_count_; }
  const std::vector<IntervalRecord>& interval_log() const {
    return intervals_;
  }

  /// Cross-checks the discrete and fluid views; throws std::logic_error
  /// with a description on any violation.  Runs automatically every step.
  void check_invariants() const;

 private:
  void spawn_and_release();
  void advance_moving();
  void poll_signals();
  void accrue_budgets();
  void discharge();
  void bookkeeping();
  void record_metrics();
  DecisionContext make_context() const;
  void note_interval(IntersectionId node, const SignalState& before,
                     const SignalState& after);

  const Network& net_;
  EpisodeConfig cfg_;
  Controller& controller_;

  NetworkState state_;
  std::vector<SignalState> signals_;
  std::mt19937_64 rng_;
  double clock_ = 0.0;
  long step_index_ = 0;

  std::vector<Vehicle> vehicles_;  // every released vehicle, id = index
  std::vector<std::deque<std::uint32_t>> queue_;   // vehicle ids per lane
  std::vector<std::deque<std::uint32_t>> moving_;  // vehicle ids per lane
  std::vector<std::deque<Vehicle>> pending_;       // drawn, not yet released
  std::vector<LaneId> entry_lanes_;

  std::vector<double> budget_;          // per movement, PCE
  std::vector<PhaseId> movement_phase_; // owning phase per movement
  std::vector<int> moving_count_;       // vehicles per lane
  std::vector<int> stopped_count_;
  std::vector<double> stopped_accum_;   // veh-s per intersection since decide
  ArrivalRateTracker tracker_;

  long drawn_count_ = 0;
  long released_count_ = 0;
  long exited_count_ = 0;
  long pending_count_ = 0;
  double pending_pce_ = 0.0;

  // scratch, reset per step
  FlowRates flows_;
  std::vector<double> stopline_arrivals_;  // PCE per lane this step
  std::vector<double> queue_start_scratch_;
  bool ran_ = false;

  // stability windows at decision_interval granularity
  long steps_per_window_ = 1;
  double window_max_out_ = 0.0;
  double window_max_arrival_ = 0.0;
  std::vector<StabilityWindow> windows_;

  // metrics accumulators
  std::vector<double> queue_time_sum_;
  std::vector<double> queue_max_;
  long metric_steps_ = 0;
  std::vector<double> total_queue_series_;
  std::vector<double> pending_pce_series_;
  std::vector<StepRecord> records_;

  // signal interval audit
  std::vector<IntervalRecord> intervals_;
  std::vector<long> interval_steps_;  // steps spent in the current interval
};

/// Convenience wrapper: fresh simulation, controller episode hooks, run.
MetricsReport run_episode(const Network& net, const EpisodeConfig& cfg,
                          Controller& controller);

}  // namespace driftsim
