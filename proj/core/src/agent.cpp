#include "driftsim/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "driftsim/flow.hpp"
#include "driftsim/lyapunov.hpp"

namespace driftsim {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix-style stirring so per-agent streams decorrelate.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

nlohmann::json config_to_json(const AgentConfig& cfg) {
  nlohmann::json j;
  j["hidden"] = cfg.hidden;
  j["gamma"] = cfg.gamma;
  j["learning_rate"] = cfg.learning_rate;
  j["epsilon_start"] = cfg.epsilon_start;
  j["epsilon_end"] = cfg.epsilon_end;
  j["epsilon_decay_steps"] = cfg.epsilon_decay_steps;
  j["replay_capacity"] = cfg.replay_capacity;
  j["batch_size"] = cfg.batch_size;
  j["target_sync_period"] = cfg.target_sync_period;
  j["observation_scale"] = cfg.observation_scale;
  j["updates_per_decision"] = cfg.updates_per_decision;
  j["share_across_intersections"] = cfg.share_across_intersections;
  return j;
}

AgentConfig config_from_json(const nlohmann::json& j) {
  AgentConfig cfg;
  cfg.hidden = j.at("hidden").get<std::vector<int>>();
  cfg.gamma = j.at("gamma").get<double>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.epsilon_start = j.at("epsilon_start").get<double>();
  cfg.epsilon_end = j.at("epsilon_end").get<double>();
  cfg.epsilon_decay_steps = j.at("epsilon_decay_steps").get<long>();
  cfg.replay_capacity = j.at("replay_capacity").get<std::size_t>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.target_sync_period = j.at("target_sync_period").get<long>();
  cfg.observation_scale = j.at("observation_scale").get<double>();
  cfg.updates_per_decision = j.at("updates_per_decision").get<int>();
  cfg.share_across_intersections =
      j.at("share_across_intersections").get<bool>();
  cfg.validate();
  return cfg;
}

}  // namespace

void AgentConfig::validate() const {
  if (hidden.empty()) {
    throw std::invalid_argument("AgentConfig: at least one hidden layer");
  }
  for (int h : hidden) {
    if (h <= 0) {
      throw std::invalid_argument("AgentConfig: hidden width must be positive");
    }
  }
  if (gamma < 0.0 || gamma >= 1.0) {
    throw std::invalid_argument("AgentConfig: gamma must lie in [0, 1)");
  }
  if (learning_rate <= 0.0) {
    throw std::invalid_argument("AgentConfig: learning rate must be positive");
  }
  if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0 ||
      epsilon_end > 1.0) {
    throw std::invalid_argument("AgentConfig: epsilon must lie in [0, 1]");
  }
  if (epsilon_decay_steps <= 0) {
    throw std::invalid_argument(
        "AgentConfig: epsilon decay steps must be positive");
  }
  if (replay_capacity == 0 || batch_size == 0 || batch_size > replay_capacity) {
    throw std::invalid_argument(
        "AgentConfig: replay capacity must hold at least one batch");
  }
  if (target_sync_period <= 0) {
    throw std::invalid_argument(
        "AgentConfig: target sync period must be positive");
  }
  if (observation_scale <= 0.0) {
    throw std::invalid_argument(
        "AgentConfig: observation scale must be positive");
  }
  if (updates_per_decision < 0) {
    throw std::invalid_argument(
        "AgentConfig: updates per decision must be >= 0");
  }
}

ObservationLayout ObservationLayout::of(const Network& net, IntersectionId id) {
  const Intersection& x = net.intersection(id);
  ObservationLayout layout;
  layout.intersection = id;
  layout.n_phases = static_cast<int>(x.phases.size());
  layout.incoming = x.incoming;  // already sorted by id
  layout.outgoing = x.outgoing;
  return layout;
}

std::vector<double> encode_state(const Network& net,
                                 const ObservationLayout& layout,
                                 PhaseId active_phase,
                                 std::span<const int> moving_vehicles,
                                 std::span<const int> stopped_vehicles) {
  if (moving_vehicles.size() < net.lane_count() ||
      stopped_vehicles.size() < net.lane_count()) {
    throw std::invalid_argument(
        "encode_state: per-lane count spans shorter than the lane table");
  }
  const Intersection& x = net.intersection(layout.intersection);
  std::vector<double> obs;
  obs.reserve(static_cast<std::size_t>(layout.dimension()));

  bool found = false;
  for (PhaseId p : x.phases) {
    if (p == active_phase) {
      obs.push_back(1.0);
      found = true;
    } else {
      obs.push_back(0.0);
    }
  }
  if (!found) {
    throw std::invalid_argument(
        "encode_state: active phase does not belong to the intersection");
  }
  auto emit = [&](const std::vector<LaneId>& lanes) {
    for (LaneId lane : lanes) {
      obs.push_back(static_cast<double>(moving_vehicles[lane]));
      obs.push_back(static_cast<double>(stopped_vehicles[lane]));
    }
  };
  emit(layout.incoming);
  emit(layout.outgoing);
  return obs;
}

double reward_flow(std::span<const double> phase_flow_sums) {
  double total = 0.0;
  for (double f : phase_flow_sums) total += std::abs(f);
  return -total;
}

double reward_pressure(std::span<const double> phase_pressures) {
  double total = 0.0;
  for (double p : phase_pressures) total += std::abs(p);
  return -total;
}

double reward_waiting_time(double stopped_vehicle_seconds) {
  return -stopped_vehicle_seconds;
}

double reward_queue(std::span<const double> lane_queues) {
  if (lane_queues.empty()) return 0.0;
  double total = 0.0;
  for (double q : lane_queues) total += q;
  return -total / static_cast<double>(lane_queues.size());
}

int select_action_among(const QNetwork& net,
                        std::span<const double> observation, double epsilon,
                        std::mt19937_64& rng,
                        std::span<const int> candidates) {
  if (candidates.empty()) {
    throw std::logic_error("select_action: empty candidate set");
  }
  for (int a : candidates) {
    if (a < 0 || a >= net.outputs()) {
      throw std::invalid_argument("select_action: candidate out of range");
    }
  }
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      return candidates[pick(rng)];
    }
  }
  const std::vector<double> q = net.forward(observation);
  int best = candidates.front();
  double best_q = q[static_cast<std::size_t>(best)];
  for (int a : candidates) {
    const double qa = q[static_cast<std::size_t>(a)];
    if (qa > best_q) {  // strict: ties keep the lowest index seen first
      best_q = qa;
      best = a;
    }
  }
  return best;
}

int select_action(const QNetwork& net, std::span<const double> observation,
                  double epsilon, std::mt19937_64& rng,
                  std::optional<int> exclude) {
  if (epsilon < 0.0 || epsilon > 1.0) {
    throw std::invalid_argument("select_action: epsilon must lie in [0, 1]");
  }
  std::vector<int> candidates;
  candidates.reserve(static_cast<std::size_t>(net.outputs()));
  for (int a = 0; a < net.outputs(); ++a) {
    if (exclude.has_value() && *exclude == a) continue;
    candidates.push_back(a);
  }
  return select_action_among(net, observation, epsilon, rng, candidates);
}

double ddqn_update(QNetwork& online, const QNetwork& target,
                   std::span<const Experience* const> batch,
                   const AgentConfig& cfg, AdamOptimizer& optimizer) {
  if (batch.empty()) {
    throw std::invalid_argument("ddqn_update: empty batch");
  }
  const double scale = cfg.observation_scale;
  auto scaled = [scale](const std::vector<double>& v) {
    std::vector<double> out(v);
    for (double& x : out) x *= scale;
    return out;
  };

  Gradients grad = Gradients::zeros_like(online);
  double loss_sum = 0.0;
  for (const Experience* e : batch) {
    double y = e->reward;
    if (!e->terminal) {
      const std::vector<double> next = scaled(e->next_state);
      const std::vector<double> q_online = online.forward(next);
      int best = 0;
      for (int a = 1; a < static_cast<int>(q_online.size()); ++a) {
        if (q_online[static_cast<std::size_t>(a)] >
            q_online[static_cast<std::size_t>(best)]) {
          best = a;
        }
      }
      const std::vector<double> q_target = target.forward(next);
      y += cfg.gamma * q_target[static_cast<std::size_t>(best)];
    }
    double residual = 0.0;
    Gradients g = backprop_gradient(online, scaled(e->state), e->action, y,
                                    &residual);
    grad.add(g);
    loss_sum += 0.5 * residual * residual;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  grad.scale(inv);
  const double loss = loss_sum * inv;
  if (!std::isfinite(loss)) {
    throw std::runtime_error(
        "ddqn_update: non-finite loss; training diverged");
  }
  optimizer.step(online, grad, cfg.learning_rate);
  for (std::size_t i = 0; i < online.parameter_count(); ++i) {
    if (!std::isfinite(online.parameter(i))) {
      throw std::runtime_error(
          "ddqn_update: non-finite parameter after step; training diverged");
    }
  }
  return loss;
}

DdqnAgent::DdqnAgent(int observation_dim, int n_actions, AgentConfig cfg,
                     std::uint64_t seed)
    : observation_dim_(observation_dim),
      n_actions_(n_actions),
      cfg_(std::move(cfg)),
      replay_(1),
      rng_(seed) {
  cfg_.validate();
  if (observation_dim_ <= 0 || n_actions_ <= 0) {
    throw std::invalid_argument("DdqnAgent: dimensions must be positive");
  }
  replay_ = ReplayBuffer(cfg_.replay_capacity);
  online_ = QNetwork::make(observation_dim_, cfg_.hidden, n_actions_, rng_);
  target_ = online_;
}

double DdqnAgent::epsilon() const {
  const double frac = std::min(
      1.0, static_cast<double>(actions_taken_) /
               static_cast<double>(cfg_.epsilon_decay_steps));
  return cfg_.epsilon_start + (cfg_.epsilon_end - cfg_.epsilon_start) * frac;
}

std::vector<double> DdqnAgent::scaled(
    std::span<const double> observation) const {
  if (static_cast<int>(observation.size()) != observation_dim_) {
    throw std::invalid_argument(
        "DdqnAgent: observation length does not match the agent's layout");
  }
  std::vector<double> out(observation.begin(), observation.end());
  for (double& x : out) x *= cfg_.observation_scale;
  return out;
}

int DdqnAgent::act(std::span<const double> observation, bool explore,
                   std::span<const int> candidates) {
  const std::vector<double> obs = scaled(observation);
  const double eps = explore ? epsilon() : 0.0;
  if (explore) ++actions_taken_;
  return select_action_among(online_, obs, eps, rng_, candidates);
}

std::optional<double> DdqnAgent::train_step() {
  if (replay_.size() < cfg_.batch_size) return std::nullopt;
  const std::vector<const Experience*> batch =
      replay_.sample(cfg_.batch_size, rng_);
  const double loss = ddqn_update(online_, target_, batch, cfg_, optimizer_);
  ++gradient_steps_;
  if (gradient_steps_ % cfg_.target_sync_period == 0) sync_target();
  return loss;
}

std::vector<double> DdqnAgent::q_values(
    std::span<const double> observation) const {
  return online_.forward(scaled(observation));
}

std::string DdqnAgent::to_json_string() const {
  nlohmann::json j;
  j["observation_dim"] = observation_dim_;
  j["n_actions"] = n_actions_;
  j["config"] = config_to_json(cfg_);
  j["online"] = nlohmann::json::parse(online_.to_json_string());
  j["target"] = nlohmann::json::parse(target_.to_json_string());
  j["actions_taken"] = actions_taken_;
  j["gradient_steps"] = gradient_steps_;
  std::ostringstream rng_state;
  rng_state << rng_;
  j["rng"] = rng_state.str();
  return j.dump();
}

DdqnAgent DdqnAgent::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  const int obs_dim = j.at("observation_dim").get<int>();
  const int n_actions = j.at("n_actions").get<int>();
  AgentConfig cfg = config_from_json(j.at("config"));
  DdqnAgent agent(obs_dim, n_actions, cfg, 0);
  agent.online_ = QNetwork::from_json_string(j.at("online").dump());
  agent.target_ = QNetwork::from_json_string(j.at("target").dump());
  if (agent.online_.inputs() != obs_dim ||
      agent.online_.outputs() != n_actions ||
      !agent.online_.same_shape(agent.target_)) {
    throw std::runtime_error(
        "DdqnAgent::from_json_string: network shape mismatch");
  }
  agent.actions_taken_ = j.at("actions_taken").get<long>();
  agent.gradient_steps_ = j.at("gradient_steps").get<long>();
  std::istringstream rng_state(j.at("rng").get<std::string>());
  rng_state >> agent.rng_;
  if (rng_state.fail()) {
    throw std::runtime_error("DdqnAgent::from_json_string: bad rng state");
  }
  return agent;
}

const char* reward_kind_name(RewardKind kind) {
  switch (kind) {
    case RewardKind::Flow:
      return "rl-flow";
    case RewardKind::Pressure:
      return "rl-mp";
    case RewardKind::SupplyPressure:
      return "rl-bp";
    case RewardKind::WaitingTime:
      return "rl-wt";
    case RewardKind::Queue:
      return "rl-q";
  }
  throw std::logic_error("reward_kind_name: unknown kind");
}

RewardKind reward_kind_for_controller(const std::string& controller_name) {
  if (controller_name == "rl-wt") return RewardKind::WaitingTime;
  if (controller_name == "rl-q") return RewardKind::Queue;
  if (controller_name == "rl-mp") return RewardKind::Pressure;
  if (controller_name == "rl-bp") return RewardKind::SupplyPressure;
  throw std::invalid_argument("not a learned controller name: " +
                              controller_name);
}

RlController::RlController(const Network& net, RewardKind kind,
                           AgentConfig cfg, bool training, std::uint64_t seed)
    : kind_(kind), cfg_(std::move(cfg)), training_(training) {
  cfg_.validate();
  slots_.resize(net.intersection_count());
  std::vector<ObservationLayout> representatives;
  for (const Intersection& x : net.intersections()) {
    Slot& slot = slots_[x.id];
    slot.layout = ObservationLayout::of(net, x.id);

    std::size_t agent_index = representatives.size();
    if (cfg_.share_across_intersections) {
      for (std::size_t i = 0; i < representatives.size(); ++i) {
        if (representatives[i].same_template(slot.layout)) {
          agent_index = i;
          break;
        }
      }
    }
    if (agent_index == representatives.size()) {
      representatives.push_back(slot.layout);
      agents_.push_back(std::make_shared<DdqnAgent>(
          slot.layout.dimension(), slot.layout.n_phases, cfg_,
          mix_seed(seed, agents_.size())));
    }
    slot.agent_index = agent_index;
  }
}

std::string RlController::name() const { return reward_kind_name(kind_); }

void RlController::begin_episode(std::uint64_t /*seed*/) {
  stats_ = RlEpisodeStats{};
  for (Slot& slot : slots_) {
    slot.last_observation.clear();
    slot.last_action = -1;
    slot.last_reward = 0.0;
    slot.has_pending = false;
  }
}

double RlController::compute_reward(const DecisionContext& ctx,
                                    const Slot& slot) const {
  const Network& net = ctx.net;
  const Intersection& x = net.intersection(slot.layout.intersection);
  switch (kind_) {
    case RewardKind::Flow: {
      std::vector<double> phase_flows;
      phase_flows.reserve(x.phases.size());
      for (PhaseId p : x.phases) {
        double sum = 0.0;
        for (const Movement* m : net.phase_movements(p)) {
          sum += counterfactual_movement_flow(net, ctx.state, m->id);
        }
        phase_flows.push_back(sum);
      }
      return reward_flow(phase_flows);
    }
    case RewardKind::Pressure: {
      const std::vector<double> scores =
          phase_scores_max_pressure(net, ctx.state, x.id);
      return reward_pressure(scores);
    }
    case RewardKind::SupplyPressure: {
      const std::vector<double> scores =
          phase_scores_back_pressure(net, ctx.state, x.id);
      return reward_pressure(scores);
    }
    case RewardKind::WaitingTime: {
      if (ctx.stopped_seconds_since_decision.size() <=
          slot.layout.intersection) {
        throw std::logic_error(
            "RlController: waiting-time reward needs per-intersection "
            "stopped-time accounting from the engine");
      }
      return reward_waiting_time(
          ctx.stopped_seconds_since_decision[slot.layout.intersection]);
    }
    case RewardKind::Queue: {
      std::vector<double> queues;
      queues.reserve(x.incoming.size());
      for (LaneId lane : x.incoming) queues.push_back(ctx.state.queue[lane]);
      return reward_queue(queues);
    }
  }
  throw std::logic_error("RlController: unknown reward kind");
}

RlController::Slot& RlController::slot_for(IntersectionId node) {
  if (node >= slots_.size()) {
    throw std::out_of_range("RlController: unknown intersection");
  }
  return slots_[node];
}

ControllerDecision RlController::decide(const DecisionContext& ctx,
                                        IntersectionId node, PhaseId current,
                                        std::optional<PhaseId> exclude) {
  Slot& slot = slot_for(node);
  const Intersection& x = ctx.net.intersection(node);
  DdqnAgent& agent = *agents_[slot.agent_index];

  std::vector<double> obs =
      encode_state(ctx.net, slot.layout, current, ctx.moving_vehicles,
                   ctx.stopped_vehicles);

  if (slot.has_pending) {
    const double r = compute_reward(ctx, slot);
    slot.last_reward = r;
    stats_.reward_sum += r;
    ++stats_.decisions;
    if (training_) {
      agent.remember(Experience{slot.last_observation, slot.last_action, r,
                                obs, false});
      for (int k = 0; k < cfg_.updates_per_decision; ++k) {
        if (auto loss = agent.train_step()) {
          stats_.loss_sum += *loss;
          ++stats_.gradient_steps;
        }
      }
    }
  }

  // Candidate actions: every phase, minus the machine's exclusion, narrowed
  // to {current, successor} when the intersection runs a fixed sequence.
  const int n = slot.layout.n_phases;
  int current_index = -1;
  for (int i = 0; i < n; ++i) {
    if (x.phases[static_cast<std::size_t>(i)] == current) current_index = i;
  }
  if (current_index < 0) {
    throw std::logic_error("RlController: current phase not at intersection");
  }
  std::vector<int> candidates;
  for (int i = 0; i < n; ++i) {
    if (x.fixed_sequence && i != current_index &&
        i != (current_index + 1) % n) {
      continue;
    }
    if (exclude.has_value() &&
        x.phases[static_cast<std::size_t>(i)] == *exclude) {
      continue;
    }
    candidates.push_back(i);
  }
  if (candidates.empty()) {
    throw std::logic_error("RlController: no admissible phase to pick");
  }

  const int action = agent.act(obs, training_, candidates);
  slot.last_observation = std::move(obs);
  slot.last_action = action;
  slot.has_pending = true;

  const PhaseId chosen = x.phases[static_cast<std::size_t>(action)];
  if (chosen == current) return ControllerDecision::keep();
  return ControllerDecision::change(chosen);
}

void RlController::end_episode(const DecisionContext& ctx) {
  for (Slot& slot : slots_) {
    if (!slot.has_pending) continue;
    const double r = compute_reward(ctx, slot);
    slot.last_reward = r;
    stats_.reward_sum += r;
    ++stats_.decisions;
    if (training_) {
      DdqnAgent& agent = *agents_[slot.agent_index];
      // Terminal transition: the successor state is irrelevant to the
      // target but keeps the record well-formed.
      agent.remember(Experience{slot.last_observation, slot.last_action, r,
                                slot.last_observation, true});
      for (int k = 0; k < cfg_.updates_per_decision; ++k) {
        if (auto loss = agent.train_step()) {
          stats_.loss_sum += *loss;
          ++stats_.gradient_steps;
        }
      }
    }
    slot.has_pending = false;
  }
}

double RlController::last_reward() const {
  if (stats_.decisions == 0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double sum = 0.0;
  for (const Slot& slot : slots_) sum += slot.last_reward;
  return sum;
}

std::string RlController::checkpoint_json(const Network& net) const {
  nlohmann::json j;
  j["format"] = "driftsim-agent-v1";
  j["topology_fingerprint"] = net.fingerprint();
  j["reward"] = reward_kind_name(kind_);
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& agent : agents_) {
    agents.push_back(nlohmann::json::parse(agent->to_json_string()));
  }
  j["agents"] = std::move(agents);
  nlohmann::json mapping = nlohmann::json::array();
  for (const Slot& slot : slots_) mapping.push_back(slot.agent_index);
  j["slot_agents"] = std::move(mapping);
  return j.dump();
}

void RlController::load_checkpoint_json(const Network& net,
                                        const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("format").get<std::string>() != "driftsim-agent-v1") {
    throw std::runtime_error("checkpoint: unknown format tag");
  }
  const auto stored = j.at("topology_fingerprint").get<std::uint64_t>();
  if (stored != net.fingerprint()) {
    throw std::runtime_error(
        "checkpoint: topology fingerprint mismatch; refusing to load");
  }
  const auto& stored_agents = j.at("agents");
  const auto mapping = j.at("slot_agents").get<std::vector<std::size_t>>();
  if (mapping.size() != slots_.size()) {
    throw std::runtime_error("checkpoint: intersection count mismatch");
  }
  std::vector<std::shared_ptr<DdqnAgent>> loaded;
  loaded.reserve(stored_agents.size());
  for (const auto& a : stored_agents) {
    loaded.push_back(
        std::make_shared<DdqnAgent>(DdqnAgent::from_json_string(a.dump())));
  }
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const std::size_t idx = mapping[s];
    if (idx >= loaded.size()) {
      throw std::runtime_error("checkpoint: slot mapping out of range");
    }
    if (loaded[idx]->observation_dim() != slots_[s].layout.dimension() ||
        loaded[idx]->n_actions() != slots_[s].layout.n_phases) {
      throw std::runtime_error(
          "checkpoint: agent shape does not fit the intersection layout");
    }
    slots_[s].agent_index = idx;
  }
  agents_ = std::move(loaded);
}

}  // namespace driftsim
