#include "driftsim/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace driftsim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) {
  throw std::runtime_error("scenario: " + message);
}

void require_keys(const json& obj, const char* section,
                  std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) {
    fail(std::string(section) + " must be an object");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      fail("unknown key \"" + it.key() + "\" in " + section);
    }
  }
}

template <typename T>
T get_field(const json& obj, const char* key, const char* section) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail("bad value for \"" + std::string(key) + "\" in " + section + ": " +
         e.what());
  }
}

template <typename T>
void maybe(const json& obj, const char* key, const char* section, T& out) {
  if (obj.contains(key)) out = get_field<T>(obj, key, section);
}

const std::vector<std::string>& controller_names() {
  static const std::vector<std::string> names = {
      "fixed",  "doras-q", "max-pressure", "back-pressure",
      "rl-wt",  "rl-q",    "rl-mp",        "rl-bp"};
  return names;
}

}  // namespace

bool is_controller_name(const std::string& name) {
  for (const std::string& n : controller_names()) {
    if (n == name) return true;
  }
  return false;
}

bool is_learned_controller_name(const std::string& name) {
  return is_controller_name(name) && name.rfind("rl-", 0) == 0;
}

DemandSpec demand_by_name(const std::string& level, double truck_share) {
  if (level == "low") return DemandSpec::preset(DemandLevel::Low, truck_share);
  if (level == "medium") {
    return DemandSpec::preset(DemandLevel::Medium, truck_share);
  }
  if (level == "high") {
    return DemandSpec::preset(DemandLevel::High, truck_share);
  }
  throw std::invalid_argument("unknown demand level: " + level);
}

Network topology_by_name(const std::string& name,
                         const LaneGeometry& geometry) {
  const auto bad = [&]() -> Network {
    throw std::invalid_argument(
        "unknown topology name: " + name +
        " (expected arterial-<n> or grid-<r>x<c>)");
  };
  if (name.rfind("arterial-", 0) == 0) {
    try {
      const int n = std::stoi(name.substr(9));
      return build_arterial(n, geometry);
    } catch (const std::invalid_argument&) {
      return bad();
    }
  }
  if (name.rfind("grid-", 0) == 0) {
    const std::string dims = name.substr(5);
    const std::size_t x = dims.find('x');
    if (x == std::string::npos) return bad();
    try {
      const int rows = std::stoi(dims.substr(0, x));
      const int cols = std::stoi(dims.substr(x + 1));
      return build_grid(rows, cols, geometry);
    } catch (const std::invalid_argument&) {
      return bad();
    }
  }
  return bad();
}

void Scenario::validate() const {
  if (topology == Topology::Arterial) {
    if (arterial_intersections < 1) {
      fail("topology: arterial needs at least 1 intersection");
    }
  } else {
    if (grid_rows < 1 || grid_cols < 1) {
      fail("topology: grid needs at least 1x1");
    }
  }
  geometry.validate();
  demand.validate();
  if (!is_controller_name(controller)) {
    fail("unknown controller name \"" + controller + "\"");
  }
  if (!(dt > 0.0)) fail("dt must be positive");
  rules.validate(dt);
  agent.validate();
  if (warmup < 0.0 || !(horizon > warmup)) {
    fail("require horizon > warmup >= 0");
  }
  if (!(fixed_time_total_green > 0.0)) {
    fail("fixed_time: total_green must be positive");
  }
  static const double kShares[] = {0.0, 0.10, 0.25, 0.40};
  bool share_ok = false;
  for (double s : kShares) {
    if (std::abs(demand.truck_share - s) < 1e-12) share_ok = true;
  }
  if (!share_ok) {
    fail("truck_share must be one of 0, 0.10, 0.25, 0.40");
  }
}

Network Scenario::build_network() const {
  if (topology == Topology::Arterial) {
    return build_arterial(arterial_intersections, geometry);
  }
  return build_grid(grid_rows, grid_cols, geometry);
}

EpisodeConfig Scenario::episode_config() const {
  EpisodeConfig cfg;
  cfg.dt = dt;
  cfg.horizon = horizon;
  cfg.warmup = warmup;
  cfg.demand = demand;
  cfg.rules = rules;
  cfg.seed = seed;
  cfg.record_steps = record_steps;
  return cfg;
}

std::vector<std::uint64_t> Scenario::seed_list() const {
  if (!seeds.empty()) return seeds;
  return {seed};
}

Scenario Scenario::from_json_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("parse error: ") + e.what());
  }
  require_keys(doc, "the top level",
               {"topology", "geometry", "demand", "controller", "timing",
                "agent", "fixed_time", "horizon", "warmup", "dt", "seed",
                "seeds", "record_steps"});

  Scenario sc;

  if (!doc.contains("topology")) fail("missing required section \"topology\"");
  {
    const json& t = doc.at("topology");
    const std::string kind = get_field<std::string>(t, "kind", "topology");
    if (kind == "arterial") {
      require_keys(t, "topology", {"kind", "intersections"});
      sc.topology = Topology::Arterial;
      sc.arterial_intersections =
          get_field<int>(t, "intersections", "topology");
    } else if (kind == "grid") {
      require_keys(t, "topology", {"kind", "rows", "cols"});
      sc.topology = Topology::Grid;
      sc.grid_rows = get_field<int>(t, "rows", "topology");
      sc.grid_cols = get_field<int>(t, "cols", "topology");
    } else {
      fail("topology kind must be \"arterial\" or \"grid\", got \"" + kind +
           "\"");
    }
  }

  if (doc.contains("geometry")) {
    const json& g = doc.at("geometry");
    require_keys(g, "geometry",
                 {"link_length", "free_flow_speed", "jam_density",
                  "saturation_flow", "major_through_lanes", "left_share",
                  "right_share", "fixed_sequence"});
    maybe(g, "link_length", "geometry", sc.geometry.link_length);
    maybe(g, "free_flow_speed", "geometry", sc.geometry.free_flow_speed);
    maybe(g, "jam_density", "geometry", sc.geometry.jam_density);
    maybe(g, "saturation_flow", "geometry", sc.geometry.saturation_flow);
    maybe(g, "major_through_lanes", "geometry",
          sc.geometry.major_through_lanes);
    maybe(g, "left_share", "geometry", sc.geometry.left_share);
    maybe(g, "right_share", "geometry", sc.geometry.right_share);
    maybe(g, "fixed_sequence", "geometry", sc.geometry.fixed_sequence);
  }

  if (!doc.contains("demand")) fail("missing required section \"demand\"");
  {
    const json& d = doc.at("demand");
    require_keys(d, "demand",
                 {"level", "major_rate_vph", "minor_rate_vph", "truck_share"});
    double truck_share = 0.0;
    maybe(d, "truck_share", "demand", truck_share);
    if (d.contains("level")) {
      if (d.contains("major_rate_vph") || d.contains("minor_rate_vph")) {
        fail("demand: give either \"level\" or explicit rates, not both");
      }
      const std::string level = get_field<std::string>(d, "level", "demand");
      try {
        sc.demand = demand_by_name(level, truck_share);
      } catch (const std::invalid_argument& e) {
        fail(e.what());
      }
      sc.demand_label = level;
    } else {
      if (!d.contains("major_rate_vph") || !d.contains("minor_rate_vph")) {
        fail("demand: need \"level\" or both \"major_rate_vph\" and "
             "\"minor_rate_vph\"");
      }
      sc.demand.major_rate_vph =
          get_field<double>(d, "major_rate_vph", "demand");
      sc.demand.minor_rate_vph =
          get_field<double>(d, "minor_rate_vph", "demand");
      sc.demand.truck_share = truck_share;
      sc.demand_label.clear();
    }
  }

  if (!doc.contains("controller")) {
    fail("missing required key \"controller\"");
  }
  sc.controller = get_field<std::string>(doc, "controller", "the top level");

  if (doc.contains("timing")) {
    const json& t = doc.at("timing");
    require_keys(t, "timing",
                 {"min_green", "max_green", "yellow", "all_red",
                  "decision_interval", "yellow_discharge_fraction"});
    maybe(t, "min_green", "timing", sc.rules.min_green);
    maybe(t, "max_green", "timing", sc.rules.max_green);
    maybe(t, "yellow", "timing", sc.rules.yellow);
    maybe(t, "all_red", "timing", sc.rules.all_red);
    maybe(t, "decision_interval", "timing", sc.rules.decision_interval);
    maybe(t, "yellow_discharge_fraction", "timing",
          sc.rules.yellow_discharge_fraction);
  }

  if (doc.contains("agent")) {
    const json& a = doc.at("agent");
    require_keys(a, "agent",
                 {"hidden", "gamma", "learning_rate", "epsilon_start",
                  "epsilon_end", "epsilon_decay_steps", "replay_capacity",
                  "batch_size", "target_sync_period", "observation_scale",
                  "updates_per_decision", "share_across_intersections",
                  "checkpoint"});
    maybe(a, "hidden", "agent", sc.agent.hidden);
    maybe(a, "gamma", "agent", sc.agent.gamma);
    maybe(a, "learning_rate", "agent", sc.agent.learning_rate);
    maybe(a, "epsilon_start", "agent", sc.agent.epsilon_start);
    maybe(a, "epsilon_end", "agent", sc.agent.epsilon_end);
    maybe(a, "epsilon_decay_steps", "agent", sc.agent.epsilon_decay_steps);
    maybe(a, "replay_capacity", "agent", sc.agent.replay_capacity);
    maybe(a, "batch_size", "agent", sc.agent.batch_size);
    maybe(a, "target_sync_period", "agent", sc.agent.target_sync_period);
    maybe(a, "observation_scale", "agent", sc.agent.observation_scale);
    maybe(a, "updates_per_decision", "agent", sc.agent.updates_per_decision);
    maybe(a, "share_across_intersections", "agent",
          sc.agent.share_across_intersections);
    maybe(a, "checkpoint", "agent", sc.checkpoint_path);
  }

  if (doc.contains("fixed_time")) {
    const json& f = doc.at("fixed_time");
    require_keys(f, "fixed_time", {"total_green"});
    maybe(f, "total_green", "fixed_time", sc.fixed_time_total_green);
  }

  maybe(doc, "horizon", "the top level", sc.horizon);
  maybe(doc, "warmup", "the top level", sc.warmup);
  maybe(doc, "dt", "the top level", sc.dt);
  maybe(doc, "seed", "the top level", sc.seed);
  maybe(doc, "seeds", "the top level", sc.seeds);
  maybe(doc, "record_steps", "the top level", sc.record_steps);

  sc.validate();
  return sc;
}

Scenario Scenario::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot read file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json_string(buffer.str());
}

std::string Scenario::to_json_string() const {
  json doc;
  if (topology == Topology::Arterial) {
    doc["topology"] = {{"kind", "arterial"},
                       {"intersections", arterial_intersections}};
  } else {
    doc["topology"] = {
        {"kind", "grid"}, {"rows", grid_rows}, {"cols", grid_cols}};
  }
  doc["geometry"] = {{"link_length", geometry.link_length},
                     {"free_flow_speed", geometry.free_flow_speed},
                     {"jam_density", geometry.jam_density},
                     {"saturation_flow", geometry.saturation_flow},
                     {"major_through_lanes", geometry.major_through_lanes},
                     {"left_share", geometry.left_share},
                     {"right_share", geometry.right_share},
                     {"fixed_sequence", geometry.fixed_sequence}};
  if (!demand_label.empty()) {
    doc["demand"] = {{"level", demand_label},
                     {"truck_share", demand.truck_share}};
  } else {
    doc["demand"] = {{"major_rate_vph", demand.major_rate_vph},
                     {"minor_rate_vph", demand.minor_rate_vph},
                     {"truck_share", demand.truck_share}};
  }
  doc["controller"] = controller;
  doc["timing"] = {
      {"min_green", rules.min_green},
      {"max_green", rules.max_green},
      {"yellow", rules.yellow},
      {"all_red", rules.all_red},
      {"decision_interval", rules.decision_interval},
      {"yellow_discharge_fraction", rules.yellow_discharge_fraction}};
  json a = {{"hidden", agent.hidden},
            {"gamma", agent.gamma},
            {"learning_rate", agent.learning_rate},
            {"epsilon_start", agent.epsilon_start},
            {"epsilon_end", agent.epsilon_end},
            {"epsilon_decay_steps", agent.epsilon_decay_steps},
            {"replay_capacity", agent.replay_capacity},
            {"batch_size", agent.batch_size},
            {"target_sync_period", agent.target_sync_period},
            {"observation_scale", agent.observation_scale},
            {"updates_per_decision", agent.updates_per_decision},
            {"share_across_intersections", agent.share_across_intersections}};
  if (!checkpoint_path.empty()) a["checkpoint"] = checkpoint_path;
  doc["agent"] = std::move(a);
  doc["fixed_time"] = {{"total_green", fixed_time_total_green}};
  doc["horizon"] = horizon;
  doc["warmup"] = warmup;
  doc["dt"] = dt;
  doc["seed"] = seed;
  if (!seeds.empty()) doc["seeds"] = seeds;
  doc["record_steps"] = record_steps;
  return doc.dump(2);
}

}  // namespace driftsim
