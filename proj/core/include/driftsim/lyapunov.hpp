#pragma once

#include <span>
#include <vector>

#include "driftsim/flow.hpp"
#include "driftsim/network.hpp"

namespace driftsim {

/// Sum of all lane queues (PCE).  The workhorse for throughput-style drift
/// arguments: its one-step change is inflow minus outflow.
double lyapunov_linear(const NetworkState& state);

/// Sum of squared lane queues over two (PCE^2).  Penalizes imbalance; its
/// drift exposes queue differences across movements.
double lyapunov_quadratic(const NetworkState& state);

/// Quadratic value normalized per lane by 8x the lane's best outgoing
/// saturation flow, which scales it to expected waiting time.  Reporting
/// only; controllers never consume it.
double lyapunov_waiting_weighted(const Network& net, const NetworkState& state);

/// One-step drift of the linear value under the given flows:
/// sum over lanes of (inflow + arrivals - outflow) * dt.
double drift_linear(const Network& net, const FlowRates& flows, double dt = 1.0);

/// One-step drift of the quadratic value under the given flows, expanded per
/// lane as delta^2/2 + queue*delta with delta = (in + arrivals - out) * dt.
/// Exact (matches the simulated change) when no queue clamps to zero.
double drift_quadratic(const NetworkState& state, const FlowRates& flows, double dt = 1.0);

/// Queue imbalance of one movement: upstream backlog minus downstream
/// backlog; movements onto exit lanes see downstream 0.
double movement_pressure(const Network& net, const NetworkState& state, MovementId id);

/// Flow-weighted pressure of a phase: sum over its movements of
/// movement_pressure * z_ab, with z_ab taken from `flows`.
double phase_pressure(const Network& net, const NetworkState& state, PhaseId id,
                      const FlowRates& flows);

/// How the drift estimate treats next-step queues.
enum class DriftEstimate {
  CurrentQueue,   ///< approximate next-step queues by current ones
  OneStepAhead,   ///< roll the phase's own flows forward first
};

/// Expected change of the quadratic value attributable to serving a phase.
/// With DriftEstimate::CurrentQueue this is exactly -phase_pressure: the
/// best phase to serve is the one with maximum pressure.  OneStepAhead
/// matches the simulated change of lyapunov_quadratic to first order in dt.
double phase_drift_value(const Network& net, const NetworkState& state, PhaseId id,
                         const FlowRates& flows, DriftEstimate mode = DriftEstimate::CurrentQueue,
                         double dt = 1.0);

/// Per-step Lyapunov summary, as written to the metrics stream.
struct DriftReport {
  double l_linear = 0.0;
  double l_quadratic = 0.0;
  double l_waiting = 0.0;
  double delta = 0.0;  ///< realized one-step drift of the quadratic value
  std::vector<double> per_phase_drift;  ///< indexed by PhaseId, CurrentQueue mode
};

DriftReport make_drift_report(const Network& net, const NetworkState& state,
                              const FlowRates& flows, double dt = 1.0);

/// Snapshot closing one control interval of the queue trace, the granularity
/// at which stability is judged.  `total_queue` and `l_value` (sum of squared
/// queues) are taken at the snapshot instant; the flow maxima are the largest
/// single-lane per-step amounts observed during the `steps` steps leading up
/// to it.  A trace normally starts with a steps == 0 seed snapshot.
struct StabilityWindow {
  double total_queue = 0.0;
  double l_value = 0.0;
  double max_lane_outflow = 0.0;
  double max_lane_inflow = 0.0;
  double max_arrival = 0.0;
  int steps = 0;
};

/// B = zout_max^2 + (zin_max + a_max)^2, the additive drift bound implied by
/// the observed flow extremes.
double stability_bound_B(double zout_max, double zin_max, double a_max);

struct StabilityEstimate {
  double B = 0.0;
  double epsilon = 0.0;         ///< inf over steps of (B - mean drift) / total queue
  double queue_bound = 0.0;     ///< B / epsilon; +inf when epsilon == 0
  double measured_time_avg_queue = 0.0;
  bool strongly_stable = false; ///< false also for degenerate (empty-queue) traces
};

/// Fits the drift condition  delta <= B - epsilon * total_queue  to a trace.
/// The conditional expected drift at a step is estimated by the mean per-step
/// change of l_value across the control interval containing it (the phase is
/// held fixed inside an interval, so its steps are identically-controlled
/// draws); epsilon is the infimum of (B - drift) / total_queue over steps
/// with nonzero queue, floored at 0.  Throws std::invalid_argument on an
/// empty trace; an all-empty-queue trace yields epsilon = 0 with
/// strongly_stable = false (degenerate, not unstable).
StabilityEstimate stability_estimate(std::span<const StabilityWindow> trace);

}  // namespace driftsim
