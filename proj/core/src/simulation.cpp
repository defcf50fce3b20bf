#include "driftsim/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace driftsim {

namespace {

constexpr double kEps = 1e-9;

// Budgets never need to hold more than the cost of the most expensive
// vehicle; anything beyond that would let a long green "bank" discharge.
const double kMaxVehiclePce = pce_of(VehicleKind::Truck);

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void EpisodeConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("EpisodeConfig: dt must be positive");
  }
  if (warmup < 0.0 || !(horizon > warmup)) {
    throw std::invalid_argument(
        "EpisodeConfig: require horizon > warmup >= 0");
  }
  rules.validate(dt);
  demand.validate();
}

AverageDelay compute_avg_delay(std::span<const Vehicle> vehicles,
                               double warmup) {
  AverageDelay out;
  double sum = 0.0;
  for (const Vehicle& v : vehicles) {
    if (v.position != VehiclePosition::Exited) continue;
    if (v.spawn_time < warmup - kEps) continue;
    sum += v.stopped_time;
    ++out.counted;
  }
  if (out.counted == 0) {
    out.undefined = true;
    out.value = 0.0;
  } else {
    out.value = sum / static_cast<double>(out.counted);
  }
  return out;
}

Simulation::Simulation(const Network& net, const EpisodeConfig& cfg,
                       Controller& controller)
    : net_(net),
      cfg_(cfg),
      controller_(controller),
      state_(NetworkState::zeros(net)),
      rng_(cfg.seed),
      tracker_(net.lane_count()),
      flows_(FlowRates::zeros(net)) {
  cfg_.validate();

  signals_.reserve(net_.intersection_count());
  for (const Intersection& x : net_.intersections()) {
    signals_.push_back(controller_.initial_state(net_, x.id));
  }

  queue_.resize(net_.lane_count());
  moving_.resize(net_.lane_count());
  pending_.resize(net_.lane_count());
  for (const Lane& lane : net_.lanes()) {
    if (lane.is_entry) entry_lanes_.push_back(lane.id);
  }

  budget_.assign(net_.movement_count(), 0.0);
  movement_phase_.assign(net_.movement_count(), kInvalidId);
  for (const Phase& p : net_.phases()) {
    for (MovementId m : p.movements) movement_phase_[m] = p.id;
  }

  moving_count_.assign(net_.lane_count(), 0);
  stopped_count_.assign(net_.lane_count(), 0);
  stopped_accum_.assign(net_.intersection_count(), 0.0);
  stopline_arrivals_.assign(net_.lane_count(), 0.0);

  steps_per_window_ =
      std::lround(cfg_.rules.decision_interval / cfg_.dt);
  if (steps_per_window_ < 1) steps_per_window_ = 1;
  windows_.push_back(StabilityWindow{});  // clean start at t = 0

  queue_time_sum_.assign(net_.lane_count(), 0.0);
  queue_max_.assign(net_.lane_count(), 0.0);
  interval_steps_.assign(net_.intersection_count(), 0);
}

DecisionContext Simulation::make_context() const {
  return DecisionContext{net_,
                         state_,
                         &tracker_,
                         &cfg_.rules,
                         clock_,
                         std::span<const double>(stopped_accum_),
                         std::span<const int>(moving_count_),
                         std::span<const int>(stopped_count_)};
}

void Simulation::spawn_and_release() {
  for (LaneId lane : entry_lanes_) {
    const double rate = entry_lane_rate(net_, cfg_.demand, lane);
    std::vector<Vehicle> fresh = generate_arrivals(
        net_, lane, rate, cfg_.demand.truck_share, clock_, cfg_.dt, rng_);
    for (Vehicle& v : fresh) {
      pending_pce_ += v.pce;
      ++pending_count_;
      ++drawn_count_;
      pending_[lane].push_back(std::move(v));
    }
    const Lane& l = net_.lane(lane);
    while (!pending_[lane].empty()) {
      const double pce = pending_[lane].front().pce;
      if (state_.queue[lane] + state_.moving[lane] + pce >
          l.capacity() + kEps) {
        break;  // storage full; the head blocks the rest (FIFO)
      }
      Vehicle v = std::move(pending_[lane].front());
      pending_[lane].pop_front();
      v.id = static_cast<std::uint32_t>(vehicles_.size());
      v.lane = lane;
      v.position = VehiclePosition::MovingOn;
      v.stopline_eta = clock_ + l.free_flow_time();
      moving_[lane].push_back(v.id);
      state_.moving[lane] += pce;
      ++moving_count_[lane];
      vehicles_.push_back(std::move(v));
      ++released_count_;
      --pending_count_;
      pending_pce_ -= pce;
    }
  }
}

void Simulation::advance_moving() {
  const double t_end = clock_ + cfg_.dt;
  for (const Lane& lane : net_.lanes()) {
    auto& mv = moving_[lane.id];
    while (!mv.empty()) {
      Vehicle& v = vehicles_[mv.front()];
      if (v.stopline_eta > t_end + kEps) break;
      mv.pop_front();
      state_.moving[lane.id] -= v.pce;
      --moving_count_[lane.id];
      if (lane.is_exit) {
        v.position = VehiclePosition::Exited;
        v.exit_time = std::max(v.stopline_eta, clock_);
        ++exited_count_;
      } else {
        v.position = VehiclePosition::QueuedOn;
        queue_[lane.id].push_back(v.id);
        ++stopped_count_[lane.id];
        stopline_arrivals_[lane.id] += v.pce;
        state_.queue[lane.id] += v.pce;
      }
    }
  }
}

void Simulation::note_interval(IntersectionId node, const SignalState& before,
                               const SignalState& after) {
  const bool changed = before.interval != after.interval ||
                       before.active_phase != after.active_phase;
  if (changed) {
    intervals_.push_back(IntervalRecord{node, before.active_phase,
                                        before.interval,
                                        interval_steps_[node]});
    interval_steps_[node] = 1;  // this step belongs to the new interval
  } else {
    ++interval_steps_[node];
  }
}

void Simulation::poll_signals() {
  for (const Intersection& x : net_.intersections()) {
    const SignalState before = signals_[x.id];
    std::optional<ControllerDecision> decision;
    if (before.interval == SignalInterval::Green) {
      if (must_switch(before, cfg_.rules)) {
        decision = controller_.decide(make_context(), x.id,
                                      before.active_phase,
                                      before.active_phase);
        stopped_accum_[x.id] = 0.0;
      } else if (wants_decision(before, cfg_.rules)) {
        decision = controller_.decide(make_context(), x.id,
                                      before.active_phase, std::nullopt);
        stopped_accum_[x.id] = 0.0;
      }
    }
    const SignalState after =
        apply_timing(before, decision, cfg_.rules, cfg_.dt);
    note_interval(x.id, before, after);
    signals_[x.id] = after;
  }
}

void Simulation::accrue_budgets() {
  for (const Movement& m : net_.movements()) {
    const SignalState& s = signals_[m.intersection];
    if (movement_phase_[m.id] != s.active_phase) {
      budget_[m.id] = 0.0;  // right-of-way lost: no carry across red
      continue;
    }
    const double frac = discharge_fraction(s, cfg_.rules);
    if (frac <= 0.0) continue;  // amber: budget freezes, nothing accrues
    const Lane& to = net_.lane(m.to_lane);
    const double supply = downstream_supply(
        state_.density(net_, m.to_lane), to.free_flow_speed, to.jam_density);
    const double rate = std::min(m.saturation_flow, supply);
    budget_[m.id] =
        std::min(budget_[m.id] + rate * frac * cfg_.dt, kMaxVehiclePce);
  }
}

void Simulation::discharge() {
  for (const Lane& lane : net_.lanes()) {
    if (lane.is_exit) continue;
    auto& q = queue_[lane.id];
    while (!q.empty()) {
      Vehicle& v = vehicles_[q.front()];
      const std::optional<MovementId> next = v.next_movement();
      if (!next.has_value()) {
        throw std::logic_error(
            "simulation: vehicle exhausted its route mid-network (lane " +
            std::to_string(lane.id) + ")");
      }
      const Movement& m = net_.movement(*next);
      if (m.from_lane != lane.id) {
        throw std::logic_error(
            "simulation: queued vehicle's route does not continue from its "
            "lane");
      }
      if (budget_[m.id] + kEps < v.pce) break;
      const Lane& to = net_.lane(m.to_lane);
      if (state_.queue[to.id] + state_.moving[to.id] + v.pce >
          to.capacity() + kEps) {
        break;  // no downstream storage: spillback holds the queue
      }
      q.pop_front();
      --stopped_count_[lane.id];
      state_.queue[lane.id] -= v.pce;
      budget_[m.id] -= v.pce;
      flows_.movement_flow[m.id] += v.pce / cfg_.dt;
      flows_.lane_out[lane.id] += v.pce / cfg_.dt;
      ++v.route_pos;
      v.lane = to.id;
      v.position = VehiclePosition::MovingOn;
      v.stopline_eta = clock_ + cfg_.dt + to.free_flow_time();
      moving_[to.id].push_back(v.id);
      ++moving_count_[to.id];
      state_.moving[to.id] += v.pce;
    }
  }
}

void Simulation::bookkeeping() {
  // Fluid cross-check: the live queue must equal the one-step fluid update
  // applied to the start-of-step queue.
  for (const Lane& lane : net_.lanes()) {
    const double expected = queue_update(
        queue_start_scratch_[lane.id], 0.0,
        flows_.lane_out[lane.id] * cfg_.dt, stopline_arrivals_[lane.id],
        lane.capacity());
    if (std::abs(expected - state_.queue[lane.id]) > kEps) {
      throw std::logic_error(
          "simulation: fluid queue update disagrees with vehicle bookkeeping "
          "on lane " +
          std::to_string(lane.id));
    }
    flows_.lane_arrivals[lane.id] =
        stopline_arrivals_[lane.id] / cfg_.dt;
  }

  // Stopped time accrues for queued vehicles and for vehicles still waiting
  // to enter; both count toward the entry intersection's waiting total.
  for (const Lane& lane : net_.lanes()) {
    const auto& q = queue_[lane.id];
    if (!q.empty()) {
      for (std::uint32_t vid : q) vehicles_[vid].stopped_time += cfg_.dt;
      stopped_accum_[lane.to_intersection] +=
          cfg_.dt * static_cast<double>(q.size());
    }
    auto& p = pending_[lane.id];
    if (!p.empty()) {
      for (Vehicle& v : p) v.stopped_time += cfg_.dt;
      stopped_accum_[lane.to_intersection] +=
          cfg_.dt * static_cast<double>(p.size());
    }
  }

  for (const Lane& lane : net_.lanes()) {
    if (stopline_arrivals_[lane.id] > 0.0) {
      tracker_.record(lane.id, stopline_arrivals_[lane.id]);
    }
  }
  tracker_.advance(cfg_.dt);

  double step_max_out = 0.0;
  double step_max_arr = 0.0;
  for (const Lane& lane : net_.lanes()) {
    // Per-step amounts (PCE moved in this step), matching the per-step drift.
    step_max_out = std::max(step_max_out, flows_.lane_out[lane.id] * cfg_.dt);
    step_max_arr = std::max(step_max_arr, stopline_arrivals_[lane.id]);
  }
  window_max_out_ = std::max(window_max_out_, step_max_out);
  window_max_arrival_ = std::max(window_max_arrival_, step_max_arr);
  if ((step_index_ + 1) % steps_per_window_ == 0) {
    StabilityWindow w;
    w.total_queue = state_.total_queue();
    double l2 = 0.0;
    for (double q : state_.queue) l2 += q * q;
    w.l_value = l2;
    w.max_lane_outflow = window_max_out_;
    w.max_lane_inflow = 0.0;  // transfers are folded into arrivals
    w.max_arrival = window_max_arrival_;
    w.steps = static_cast<int>(steps_per_window_);
    windows_.push_back(w);
    window_max_out_ = 0.0;
    window_max_arrival_ = 0.0;
  }

  check_invariants();
}

void Simulation::check_invariants() const {
  if (drawn_count_ != released_count_ + pending_count_) {
    throw std::logic_error("simulation: drawn != released + pending");
  }
  long in_network = 0;
  for (const Lane& lane : net_.lanes()) {
    in_network += moving_count_[lane.id] +
                  static_cast<long>(queue_[lane.id].size());
    if (static_cast<std::size_t>(stopped_count_[lane.id]) !=
        queue_[lane.id].size()) {
      throw std::logic_error("simulation: stopped-count cache out of sync");
    }
    double queued_pce = 0.0;
    for (std::uint32_t vid : queue_[lane.id]) {
      queued_pce += vehicles_[vid].pce;
    }
    if (std::abs(queued_pce - state_.queue[lane.id]) > kEps) {
      throw std::logic_error(
          "simulation: fluid/discrete queue mismatch on lane " +
          std::to_string(lane.id));
    }
    double moving_pce = 0.0;
    for (std::uint32_t vid : moving_[lane.id]) {
      moving_pce += vehicles_[vid].pce;
    }
    if (std::abs(moving_pce - state_.moving[lane.id]) > kEps) {
      throw std::logic_error(
          "simulation: fluid/discrete moving mismatch on lane " +
          std::to_string(lane.id));
    }
    if (state_.queue[lane.id] < -kEps ||
        state_.queue[lane.id] > net_.lane(lane.id).capacity() + kEps) {
      throw std::logic_error("simulation: queue outside [0, capacity]");
    }
  }
  if (released_count_ != exited_count_ + in_network) {
    throw std::logic_error("simulation: released != exited + in-network");
  }
  for (double b : budget_) {
    if (b < -kEps || b > kMaxVehiclePce + kEps) {
      throw std::logic_error("simulation: discharge budget out of range");
    }
  }
}

void Simulation::record_metrics() {
  const double t_end = clock_ + cfg_.dt;
  total_queue_series_.push_back(state_.total_queue());
  pending_pce_series_.push_back(pending_pce_);
  if (t_end > cfg_.warmup + kEps) {
    ++metric_steps_;
    for (const Lane& lane : net_.lanes()) {
      queue_time_sum_[lane.id] += state_.queue[lane.id];
      queue_max_[lane.id] =
          std::max(queue_max_[lane.id], state_.queue[lane.id]);
    }
  }
  if (cfg_.record_steps) {
    StepRecord r;
    r.time = t_end;
    r.lane_queue = state_.queue;
    r.active_phase.reserve(signals_.size());
    for (const SignalState& s : signals_) r.active_phase.push_back(s.active_phase);
    r.l_linear = lyapunov_linear(state_);
    r.l_quadratic = lyapunov_quadratic(state_);
    r.delta = drift_linear(net_, flows_, cfg_.dt);
    r.reward = controller_.last_reward();
    records_.push_back(std::move(r));
  }
}

void Simulation::step() {
  std::fill(flows_.movement_flow.begin(), flows_.movement_flow.end(), 0.0);
  std::fill(flows_.lane_out.begin(), flows_.lane_out.end(), 0.0);
  std::fill(flows_.lane_in.begin(), flows_.lane_in.end(), 0.0);
  std::fill(flows_.lane_arrivals.begin(), flows_.lane_arrivals.end(), 0.0);
  std::fill(stopline_arrivals_.begin(), stopline_arrivals_.end(), 0.0);
  queue_start_scratch_ = state_.queue;

  spawn_and_release();
  advance_moving();
  poll_signals();
  accrue_budgets();
  discharge();
  bookkeeping();
  record_metrics();

  ++step_index_;
  clock_ = static_cast<double>(step_index_) * cfg_.dt;
  state_.time = clock_;
}

MetricsReport Simulation::run() {
  if (ran_) {
    throw std::logic_error("Simulation::run: episode already executed");
  }
  ran_ = true;
  while (clock_ + kEps < cfg_.horizon) step();
  controller_.end_episode(make_context());

  MetricsReport rep;
  rep.controller = controller_.name();
  rep.seed = cfg_.seed;
  rep.dt = cfg_.dt;
  rep.horizon = cfg_.horizon;
  rep.warmup = cfg_.warmup;

  const AverageDelay delay = compute_avg_delay(vehicles_, cfg_.warmup);
  rep.avg_vehicle_delay = delay.value;
  rep.delay_undefined = delay.undefined;
  rep.vehicles_counted = delay.counted;
  rep.vehicles_drawn = drawn_count_;
  rep.vehicles_released = released_count_;
  rep.throughput = exited_count_;

  rep.mean_queue.resize(net_.lane_count(), 0.0);
  rep.max_queue = queue_max_;
  if (metric_steps_ > 0) {
    for (std::size_t i = 0; i < queue_time_sum_.size(); ++i) {
      rep.mean_queue[i] =
          queue_time_sum_[i] / static_cast<double>(metric_steps_);
    }
  }
  rep.total_queue_series = std::move(total_queue_series_);
  rep.pending_pce_series = std::move(pending_pce_series_);
  rep.stability_windows = windows_;
  rep.stability = stability_estimate(windows_);
  rep.steps = std::move(records_);
  return rep;
}

MetricsReport run_episode(const Network& net, const EpisodeConfig& cfg,
                          Controller& controller) {
  controller.begin_episode(cfg.seed);
  Simulation sim(net, cfg, controller);
  return sim.run();
}

std::string step_csv(const Network& net, const MetricsReport& report) {
  std::ostringstream out;
  out << "time";
  for (const Lane& lane : net.lanes()) out << ",queue_" << lane.id;
  for (const Intersection& x : net.intersections()) out << ",phase_" << x.id;
  out << ",l_linear,l_quadratic,delta,reward\n";
  for (const StepRecord& r : report.steps) {
    out << fmt_double(r.time);
    for (double q : r.lane_queue) out << ',' << fmt_double(q);
    for (PhaseId p : r.active_phase) out << ',' << p;
    out << ',' << fmt_double(r.l_linear) << ',' << fmt_double(r.l_quadratic)
        << ',' << fmt_double(r.delta) << ',';
    if (std::isfinite(r.reward)) out << fmt_double(r.reward);
    out << '\n';
  }
  return out.str();
}

std::string summary_text(const MetricsReport& report) {
  std::ostringstream out;
  out << "controller: " << report.controller << '\n';
  out << "seed: " << report.seed << '\n';
  out << "dt: " << fmt_double(report.dt) << '\n';
  out << "horizon: " << fmt_double(report.horizon) << '\n';
  out << "warmup: " << fmt_double(report.warmup) << '\n';
  out << "vehicles_drawn: " << report.vehicles_drawn << '\n';
  out << "vehicles_released: " << report.vehicles_released << '\n';
  out << "throughput: " << report.throughput << '\n';
  out << "vehicles_counted: " << report.vehicles_counted << '\n';
  out << "avg_vehicle_delay: " << fmt_double(report.avg_vehicle_delay)
      << '\n';
  out << "delay_undefined: " << (report.delay_undefined ? 1 : 0) << '\n';
  out << "stability_B: " << fmt_double(report.stability.B) << '\n';
  out << "stability_epsilon: " << fmt_double(report.stability.epsilon)
      << '\n';
  out << "stability_queue_bound: " << fmt_double(report.stability.queue_bound)
      << '\n';
  out << "stability_avg_queue: "
      << fmt_double(report.stability.measured_time_avg_queue) << '\n';
  out << "strongly_stable: " << (report.stability.strongly_stable ? 1 : 0)
      << '\n';
  return out.str();
}

}  // namespace driftsim
