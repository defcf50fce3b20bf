#pragma once

#include <optional>

#include "driftsim/network.hpp"

namespace driftsim {

/// Timing constraints every controller operates under.  Ambers are fixed:
/// every green ends with `yellow` seconds of yellow and `all_red` seconds of
/// all-red clearance before the next green starts.
struct SignalTimingRules {
  double min_green = 5.0;
  double max_green = 50.0;
  double yellow = 3.0;
  double all_red = 2.0;
  double decision_interval = 5.0;
  double yellow_discharge_fraction = 0.0;  ///< share of green discharge allowed in yellow

  /// Throws std::invalid_argument unless durations are positive, ordered and
  /// integer multiples of dt (so interval boundaries land exactly on steps).
  void validate(double dt) const;
};

enum class SignalInterval : std::uint8_t { Green, Yellow, AllRed };

/// Signal head of one intersection: exactly one phase is ever active, and a
/// switch always passes through Yellow and AllRed.
struct SignalState {
  PhaseId active_phase = kInvalidId;
  SignalInterval interval = SignalInterval::Green;
  double elapsed = 0.0;                 ///< s spent in the current interval
  PhaseId pending_phase = kInvalidId;   ///< switch target while in amber
};

/// What a controller wants done with the signal; empty optional = keep.
struct ControllerDecision {
  std::optional<PhaseId> switch_to;
  static ControllerDecision keep() { return {}; }
  static ControllerDecision change(PhaseId p) { return {p}; }
};

/// True when the controller should be polled before stepping this state:
/// green has run at least min_green and sits on the decision cadence.
bool wants_decision(const SignalState& s, const SignalTimingRules& rules);

/// True when the active green has reached max_green and must end this step.
bool must_switch(const SignalState& s, const SignalTimingRules& rules);

/// Share of the saturation discharge the active phase's movements get this
/// step: 1 in green, the configured fraction in yellow, 0 in all-red.
double discharge_fraction(const SignalState& s, const SignalTimingRules& rules);

/// Advances the signal by one step.  A switch decision takes effect at the
/// start of the step (the step runs as yellow); switches before min_green
/// are denied and the decision degrades to keep.  Keeping a green that has
/// already reached max_green throws std::logic_error — callers must obtain a
/// forced switch from the controller first (see must_switch).
SignalState apply_timing(const SignalState& s, const std::optional<ControllerDecision>& decision,
                         const SignalTimingRules& rules, double dt);

}  // namespace driftsim
