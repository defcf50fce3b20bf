#include "driftsim/signal.hpp"

#include <cmath>
#include <stdexcept>

namespace driftsim {

namespace {

constexpr double kEps = 1e-9;

bool is_multiple(double value, double dt) {
  double steps = value / dt;
  return std::abs(steps - std::round(steps)) < kEps;
}

}  // namespace

void SignalTimingRules::validate(double dt) const {
  if (dt <= 0) throw std::invalid_argument("SignalTimingRules: dt must be positive");
  if (min_green <= 0 || max_green < min_green) {
    throw std::invalid_argument("SignalTimingRules: need 0 < min_green <= max_green");
  }
  if (yellow <= 0 || all_red < 0) {
    throw std::invalid_argument("SignalTimingRules: need yellow > 0 and all_red >= 0");
  }
  if (decision_interval <= 0) {
    throw std::invalid_argument("SignalTimingRules: decision_interval must be positive");
  }
  if (yellow_discharge_fraction < 0 || yellow_discharge_fraction > 1) {
    throw std::invalid_argument("SignalTimingRules: yellow_discharge_fraction must be in [0,1]");
  }
  for (double v : {min_green, max_green, yellow, all_red, decision_interval}) {
    if (!is_multiple(v, dt)) {
      throw std::invalid_argument(
          "SignalTimingRules: signal durations must be integer multiples of dt");
    }
  }
}

bool wants_decision(const SignalState& s, const SignalTimingRules& rules) {
  if (s.interval != SignalInterval::Green) return false;
  if (s.elapsed + kEps < rules.min_green) return false;
  double since = s.elapsed - rules.min_green;
  double cycles = since / rules.decision_interval;
  return std::abs(cycles - std::round(cycles)) < kEps;
}

bool must_switch(const SignalState& s, const SignalTimingRules& rules) {
  return s.interval == SignalInterval::Green && s.elapsed + kEps >= rules.max_green;
}

double discharge_fraction(const SignalState& s, const SignalTimingRules& rules) {
  switch (s.interval) {
    case SignalInterval::Green:
      return 1.0;
    case SignalInterval::Yellow:
      return rules.yellow_discharge_fraction;
    case SignalInterval::AllRed:
      return 0.0;
  }
  return 0.0;
}

SignalState apply_timing(const SignalState& s, const std::optional<ControllerDecision>& decision,
                         const SignalTimingRules& rules, double dt) {
  SignalState next = s;

  if (next.interval == SignalInterval::Green && decision.has_value()) {
    bool wants_switch =
        decision->switch_to.has_value() && *decision->switch_to != next.active_phase;
    bool allowed = next.elapsed + kEps >= rules.min_green;
    if (wants_switch && allowed) {
      next.interval = SignalInterval::Yellow;
      next.pending_phase = *decision->switch_to;
      next.elapsed = 0.0;
    }
  }
  if (next.interval == SignalInterval::Green && next.elapsed + kEps >= rules.max_green) {
    throw std::logic_error("apply_timing: green held past max_green without a switch");
  }

  next.elapsed += dt;

  // Amber intervals complete on exact boundaries (rules are validated to be
  // step multiples); cascade so a zero-length all-red is skipped cleanly.
  while (true) {
    if (next.interval == SignalInterval::Yellow && next.elapsed + kEps >= rules.yellow) {
      next.elapsed -= rules.yellow;
      next.interval = SignalInterval::AllRed;
      continue;
    }
    if (next.interval == SignalInterval::AllRed && next.elapsed + kEps >= rules.all_red) {
      next.elapsed -= rules.all_red;
      next.interval = SignalInterval::Green;
      next.active_phase = next.pending_phase;
      next.pending_phase = kInvalidId;
      continue;
    }
    break;
  }
  return next;
}

}  // namespace driftsim
