#include "driftsim/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace driftsim {

double lyapunov_linear(const NetworkState& state) {
  double sum = 0;
  for (double q : state.queue) sum += q;
  return sum;
}

double lyapunov_quadratic(const NetworkState& state) {
  double sum = 0;
  for (double q : state.queue) sum += q * q;
  return 0.5 * sum;
}

double lyapunov_waiting_weighted(const Network& net, const NetworkState& state) {
  double sum = 0;
  for (const Lane& l : net.lanes()) {
    if (l.is_exit) continue;  // exit lanes never queue
    double lambda = 0;
    for (const TurnChoice& c : net.outgoing_choices(l.id)) {
      lambda = std::max(lambda, net.movement(c.movement).saturation_flow);
    }
    double q = state.queue[l.id];
    sum += q * q / (8.0 * lambda);
  }
  return sum;
}

double drift_linear(const Network& net, const FlowRates& flows, double dt) {
  double sum = 0;
  for (const Lane& l : net.lanes()) {
    sum += (flows.lane_in[l.id] + flows.lane_arrivals[l.id] - flows.lane_out[l.id]) * dt;
  }
  return sum;
}

double drift_quadratic(const NetworkState& state, const FlowRates& flows, double dt) {
  double sum = 0;
  for (std::size_t i = 0; i < state.queue.size(); ++i) {
    double delta = (flows.lane_in[i] + flows.lane_arrivals[i] - flows.lane_out[i]) * dt;
    sum += 0.5 * delta * delta + state.queue[i] * delta;
  }
  return sum;
}

double movement_pressure(const Network& net, const NetworkState& state, MovementId id) {
  const Movement& m = net.movement(id);
  double upstream = state.queue[m.from_lane];
  double downstream = net.lane(m.to_lane).is_exit ? 0.0 : state.queue[m.to_lane];
  return upstream - downstream;
}

double phase_pressure(const Network& net, const NetworkState& state, PhaseId id,
                      const FlowRates& flows) {
  double sum = 0;
  for (MovementId m : net.phase(id).movements) {
    sum += movement_pressure(net, state, m) * flows.movement_flow[m];
  }
  return sum;
}

double phase_drift_value(const Network& net, const NetworkState& state, PhaseId id,
                         const FlowRates& flows, DriftEstimate mode, double dt) {
  const Phase& phase = net.phase(id);
  // Queues after serving the phase (only needed for the one-step-ahead mode;
  // the approximation keeps current queues, making the value -phase_pressure).
  std::vector<double> next;
  if (mode == DriftEstimate::OneStepAhead) {
    next = state.queue;
    for (MovementId mid : phase.movements) {
      const Movement& m = net.movement(mid);
      double moved = flows.movement_flow[mid] * dt;
      next[m.from_lane] -= moved;
      if (!net.lane(m.to_lane).is_exit) next[m.to_lane] += moved;
    }
  }
  auto queue_of = [&](LaneId lane) {
    if (net.lane(lane).is_exit) return 0.0;
    return mode == DriftEstimate::OneStepAhead ? next[lane] : state.queue[lane];
  };
  double value = 0;
  for (MovementId mid : phase.movements) {
    const Movement& m = net.movement(mid);
    value += flows.movement_flow[mid] * (queue_of(m.to_lane) - queue_of(m.from_lane));
  }
  return value;
}

DriftReport make_drift_report(const Network& net, const NetworkState& state,
                              const FlowRates& flows, double dt) {
  DriftReport r;
  r.l_linear = lyapunov_linear(state);
  r.l_quadratic = lyapunov_quadratic(state);
  r.l_waiting = lyapunov_waiting_weighted(net, state);
  r.delta = drift_quadratic(state, flows, dt);
  r.per_phase_drift.reserve(net.phase_count());
  for (PhaseId p = 0; p < net.phase_count(); ++p) {
    r.per_phase_drift.push_back(
        phase_drift_value(net, state, p, flows, DriftEstimate::CurrentQueue, dt));
  }
  return r;
}

double stability_bound_B(double zout_max, double zin_max, double a_max) {
  return zout_max * zout_max + (zin_max + a_max) * (zin_max + a_max);
}

StabilityEstimate stability_estimate(std::span<const StabilityWindow> trace) {
  if (trace.empty()) {
    throw std::invalid_argument("stability_estimate: empty trace");
  }
  double zout = 0, zin = 0, amax = 0, queue_sum = 0;
  for (const StabilityWindow& w : trace) {
    zout = std::max(zout, w.max_lane_outflow);
    zin = std::max(zin, w.max_lane_inflow);
    amax = std::max(amax, w.max_arrival);
    queue_sum += w.total_queue;
  }
  StabilityEstimate est;
  est.B = stability_bound_B(zout, zin, amax);
  est.measured_time_avg_queue = queue_sum / static_cast<double>(trace.size());

  double epsilon = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t k = 0; k + 1 < trace.size(); ++k) {
    double total = trace[k].total_queue;
    if (total <= 0) continue;  // the drift condition is vacuous at zero queue
    int steps = trace[k + 1].steps;
    if (steps <= 0) continue;
    // Mean per-step drift over the interval, the single-trajectory stand-in
    // for the conditional expectation in the drift condition.
    double delta = (trace[k + 1].l_value - trace[k].l_value) / steps;
    epsilon = std::min(epsilon, (est.B - delta) / total);
    any = true;
  }
  est.epsilon = any ? std::max(epsilon, 0.0) : 0.0;
  est.strongly_stable = est.epsilon > 0;
  est.queue_bound =
      est.strongly_stable ? est.B / est.epsilon : std::numeric_limits<double>::infinity();
  return est;
}

}  // namespace driftsim
