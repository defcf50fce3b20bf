#include "driftsim/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "driftsim/lyapunov.hpp"

namespace driftsim {

double FixedTimePlan::cycle(const SignalTimingRules& rules) const {
  double amber = rules.yellow + rules.all_red;
  double total = 0;
  for (const Entry& e : entries) total += e.green + amber;
  return total;
}

void FixedTimePlan::validate(const SignalTimingRules& rules) const {
  if (entries.empty()) {
    throw std::invalid_argument("FixedTimePlan: empty plan");
  }
  for (const Entry& e : entries) {
    if (e.green < rules.min_green - 1e-9 || e.green > rules.max_green + 1e-9) {
      throw std::invalid_argument("FixedTimePlan: green of " + std::to_string(e.green) +
                                  " s violates [min_green, max_green]");
    }
    double cadence = e.green / rules.decision_interval;
    if (std::abs(cadence - std::round(cadence)) > 1e-9) {
      throw std::invalid_argument(
          "FixedTimePlan: greens must be multiples of the decision interval");
    }
  }
}

PlanPosition plan_position(const FixedTimePlan& plan, const SignalTimingRules& rules,
                           double clock) {
  double cycle = plan.cycle(rules);
  double t = std::fmod(clock, cycle);
  if (t < 0) t += cycle;

  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const auto& e = plan.entries[i];
    PhaseId next = plan.entries[(i + 1) % plan.entries.size()].phase;
    if (t < e.green) {
      return {SignalInterval::Green, e.phase, kInvalidId, t};
    }
    t -= e.green;
    if (t < rules.yellow) {
      return {SignalInterval::Yellow, e.phase, next, t};
    }
    t -= rules.yellow;
    if (t < rules.all_red) {
      return {SignalInterval::AllRed, e.phase, next, t};
    }
    t -= rules.all_red;
  }
  // Unreachable for a validated plan; keep the compiler satisfied.
  return {SignalInterval::Green, plan.entries.front().phase, kInvalidId, 0.0};
}

ControllerDecision fixed_time_decide(const FixedTimePlan& plan, const SignalTimingRules& rules,
                                     double offset, double clock, PhaseId current) {
  PlanPosition pos = plan_position(plan, rules, clock + offset);
  PhaseId target = pos.interval == SignalInterval::Green ? pos.active : pos.pending;
  if (target == current) return ControllerDecision::keep();
  return ControllerDecision::change(target);
}

FixedTimePlan proportional_plan(const Network& net, const DemandSpec& demand,
                                const SignalTimingRules& rules, double total_green) {
  demand.validate();
  const LaneGeometry& g = net.geometry();
  const double base = g.saturation_flow;
  double through_share = 1.0 - g.left_share;  // through lanes also carry right turns

  // Service pressure of each phase in the template order
  // (major-through, major-left, minor-through, minor-left): demand over the
  // saturation flow serving it.
  double loads[4] = {
      demand.major_rate_vph * through_share / (base * g.major_through_lanes),
      demand.major_rate_vph * g.left_share / base,
      demand.minor_rate_vph * through_share / base,
      demand.minor_rate_vph * g.left_share / base,
  };
  double load_sum = loads[0] + loads[1] + loads[2] + loads[3];
  if (load_sum <= 0) {
    // No demand at all: split evenly so the plan stays valid.
    loads[0] = loads[1] = loads[2] = loads[3] = 1.0;
    load_sum = 4.0;
  }

  const Intersection& node = net.intersection(0);
  FixedTimePlan plan;
  for (std::size_t i = 0; i < node.phases.size(); ++i) {
    double want = total_green * loads[i % 4] / load_sum;
    double rounded = std::round(want / rules.decision_interval) * rules.decision_interval;
    rounded = std::clamp(rounded, rules.min_green, rules.max_green);
    plan.entries.push_back({node.phases[i], rounded});
  }
  plan.validate(rules);
  return plan;
}

std::vector<double> green_wave_offsets(const Network& net, const FixedTimePlan& plan,
                                       const SignalTimingRules& rules) {
  double cycle = plan.cycle(rules);
  double hop = net.geometry().link_length / net.geometry().free_flow_speed;
  std::vector<double> offsets;
  offsets.reserve(net.intersection_count());
  for (const Intersection& node : net.intersections()) {
    int col = static_cast<int>(node.id) % net.grid_cols();
    // Shift the plan *later* with eastward distance: decide() adds the
    // offset to the clock, so lagging means subtracting the travel time.
    double travel = std::fmod(hop * col, cycle);
    offsets.push_back(travel == 0 ? 0.0 : cycle - travel);
  }
  return offsets;
}

namespace {

double supply_limited_flow(const Network& net, const NetworkState& state, const Movement& m) {
  const Lane& to = net.lane(m.to_lane);
  double supply = downstream_supply(state.density(net, m.to_lane), to.free_flow_speed,
                                    to.jam_density);
  return std::min(m.saturation_flow, supply);
}

}  // namespace

std::vector<double> phase_scores_max_pressure(const Network& net, const NetworkState& state,
                                              IntersectionId node) {
  const Intersection& x = net.intersection(node);
  std::vector<double> scores;
  scores.reserve(x.phases.size());
  for (PhaseId p : x.phases) {
    double s = 0;
    for (MovementId mid : net.phase(p).movements) {
      s += movement_pressure(net, state, mid) * net.movement(mid).saturation_flow;
    }
    scores.push_back(s);
  }
  return scores;
}

std::vector<double> phase_scores_back_pressure(const Network& net, const NetworkState& state,
                                               IntersectionId node) {
  const Intersection& x = net.intersection(node);
  std::vector<double> scores;
  scores.reserve(x.phases.size());
  for (PhaseId p : x.phases) {
    double s = 0;
    for (MovementId mid : net.phase(p).movements) {
      s += movement_pressure(net, state, mid) * supply_limited_flow(net, state, net.movement(mid));
    }
    scores.push_back(s);
  }
  return scores;
}

std::vector<double> phase_scores_doras(const Network& net, const NetworkState& state,
                                       IntersectionId node, const ArrivalRateTracker& tracker,
                                       double horizon) {
  const Intersection& x = net.intersection(node);
  std::vector<double> scores;
  scores.reserve(x.phases.size());
  for (PhaseId p : x.phases) {
    double s = 0;
    for (MovementId mid : net.phase(p).movements) {
      const Movement& m = net.movement(mid);
      // The lane's backlog and predicted arrivals, attributed to this
      // movement by its turning share.
      double share = net.turning_probability(mid);
      double waiting = state.queue[m.from_lane] * share;
      double incoming = tracker.predicted(m.from_lane, horizon) * share;
      s += std::min(waiting + incoming, m.saturation_flow * horizon);
    }
    scores.push_back(s);
  }
  return scores;
}

double counterfactual_movement_flow(const Network& net, const NetworkState& state,
                                    MovementId id) {
  const Movement& m = net.movement(id);
  if (state.queue[m.from_lane] <= 0) return 0.0;
  return supply_limited_flow(net, state, m);
}

PhaseId pick_phase([[maybe_unused]] const Network& net, const Intersection& node,
                   std::span<const double> scores, PhaseId current,
                   std::optional<PhaseId> exclude) {
  if (scores.size() != node.phases.size()) {
    throw std::invalid_argument("pick_phase: scores do not match the intersection's phases");
  }
  std::vector<std::size_t> candidates;
  if (node.fixed_sequence) {
    auto it = std::find(node.phases.begin(), node.phases.end(), current);
    if (it == node.phases.end()) {
      throw std::invalid_argument("pick_phase: current phase not at this intersection");
    }
    std::size_t cur = static_cast<std::size_t>(it - node.phases.begin());
    candidates = {cur, (cur + 1) % node.phases.size()};
  } else {
    candidates.resize(node.phases.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i] = i;
  }

  PhaseId best = kInvalidId;
  double best_score = -std::numeric_limits<double>::infinity();
  bool best_is_current = false;
  for (std::size_t i : candidates) {
    PhaseId p = node.phases[i];
    if (exclude && p == *exclude) continue;
    double s = scores[i];
    bool better = s > best_score;
    // Tie handling: the current phase wins a tie; otherwise the lowest id
    // (the iteration order) stands.
    if (!better && s == best_score && p == current && !best_is_current) better = true;
    if (better) {
      best = p;
      best_score = s;
      best_is_current = (p == current);
    }
  }
  if (best == kInvalidId) {
    throw std::logic_error("pick_phase: no candidate phase available");
  }
  return best;
}

namespace {

ControllerDecision to_decision(PhaseId best, PhaseId current) {
  if (best == current) return ControllerDecision::keep();
  return ControllerDecision::change(best);
}

}  // namespace

ControllerDecision max_pressure_decide(const Network& net, const NetworkState& state,
                                       IntersectionId node, PhaseId current,
                                       std::optional<PhaseId> exclude) {
  const Intersection& x = net.intersection(node);
  auto scores = phase_scores_max_pressure(net, state, node);
  return to_decision(pick_phase(net, x, scores, current, exclude), current);
}

ControllerDecision back_pressure_decide(const Network& net, const NetworkState& state,
                                        IntersectionId node, PhaseId current,
                                        std::optional<PhaseId> exclude) {
  const Intersection& x = net.intersection(node);
  auto scores = phase_scores_back_pressure(net, state, node);
  return to_decision(pick_phase(net, x, scores, current, exclude), current);
}

ControllerDecision doras_q_decide(const Network& net, const NetworkState& state,
                                  IntersectionId node, const ArrivalRateTracker& tracker,
                                  const SignalTimingRules& rules, PhaseId current,
                                  std::optional<PhaseId> exclude) {
  const Intersection& x = net.intersection(node);
  auto scores = phase_scores_doras(net, state, node, tracker, rules.decision_interval);
  return to_decision(pick_phase(net, x, scores, current, exclude), current);
}

SignalState Controller::initial_state(const Network& net, IntersectionId node) const {
  SignalState s;
  s.active_phase = net.intersection(node).phases.front();
  s.interval = SignalInterval::Green;
  s.elapsed = 0.0;
  return s;
}

FixedTimeController::FixedTimeController(const Network& net, const DemandSpec& demand,
                                         const SignalTimingRules& rules, double total_green)
    : plan_(proportional_plan(net, demand, rules, total_green)),
      rules_(rules),
      offsets_(green_wave_offsets(net, plan_, rules)) {}

ControllerDecision FixedTimeController::decide(const DecisionContext& ctx, IntersectionId node,
                                               PhaseId current,
                                               std::optional<PhaseId> exclude) {
  // The plan never wants to outstay max_green (validated), so the forced
  // switch and the plan's own switch coincide; exclude needs no handling.
  (void)exclude;
  double offset = offsets_.at(node);
  // Every intersection runs the same template; shift the plan's phase ids to
  // this intersection's block.
  const Intersection& x = ctx.net.intersection(node);
  FixedTimePlan local = plan_;
  for (std::size_t i = 0; i < local.entries.size(); ++i) {
    local.entries[i].phase = x.phases[i % x.phases.size()];
  }
  return fixed_time_decide(local, *ctx.rules, offset, ctx.clock, current);
}

SignalState FixedTimeController::initial_state(const Network& net, IntersectionId node) const {
  const Intersection& x = net.intersection(node);
  FixedTimePlan local = plan_;
  for (std::size_t i = 0; i < local.entries.size(); ++i) {
    local.entries[i].phase = x.phases[i % x.phases.size()];
  }
  PlanPosition pos = plan_position(local, rules_, offsets_.at(node));
  SignalState s;
  s.interval = pos.interval;
  s.active_phase = pos.active;
  s.pending_phase = pos.pending;
  s.elapsed = pos.into;
  return s;
}

ControllerDecision DorasQController::decide(const DecisionContext& ctx, IntersectionId node,
                                            PhaseId current, std::optional<PhaseId> exclude) {
  if (!ctx.tracker || !ctx.rules) {
    throw std::logic_error("DorasQController: decision context lacks tracker or rules");
  }
  return doras_q_decide(ctx.net, ctx.state, node, *ctx.tracker, *ctx.rules, current, exclude);
}

ControllerDecision MaxPressureController::decide(const DecisionContext& ctx, IntersectionId node,
                                                 PhaseId current,
                                                 std::optional<PhaseId> exclude) {
  return max_pressure_decide(ctx.net, ctx.state, node, current, exclude);
}

ControllerDecision BackPressureController::decide(const DecisionContext& ctx, IntersectionId node,
                                                  PhaseId current,
                                                  std::optional<PhaseId> exclude) {
  return back_pressure_decide(ctx.net, ctx.state, node, current, exclude);
}

}  // namespace driftsim
