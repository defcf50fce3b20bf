#pragma once

// Scenario files: a small JSON dialect with strict validation.  Every key
// is checked against the schema; anything unrecognised is an error that
// names the offending key, so typos fail loudly instead of silently
// running a default.
//
// Schema (all sections optional unless noted):
//   topology   (required)  {"kind":"arterial","intersections":N}
//                          {"kind":"grid","rows":R,"cols":C}
//   geometry   overrides for LaneGeometry fields
//   demand     (required)  {"level":"low|medium|high"} or
//                          {"major_rate_vph":X,"minor_rate_vph":Y};
//                          either form takes "truck_share" (0, .10, .25, .40)
//   controller (required)  "fixed"|"doras-q"|"max-pressure"|"back-pressure"|
//                          "rl-wt"|"rl-q"|"rl-mp"|"rl-bp"
//   timing     overrides for SignalTimingRules fields
//   agent      overrides for AgentConfig fields + "checkpoint" path
//   fixed_time {"total_green":G}
//   horizon, warmup, dt, seed, seeds (list), record_steps   scalars

#include <cstdint>
#include <string>
#include <vector>

#include "driftsim/agent.hpp"
#include "driftsim/flow.hpp"
#include "driftsim/network.hpp"
#include "driftsim/signal.hpp"
#include "driftsim/simulation.hpp"

namespace driftsim {

struct Scenario {
  enum class Topology { Arterial, Grid };

  Topology topology = Topology::Arterial;
  int arterial_intersections = 4;
  int grid_rows = 3;
  int grid_cols = 3;
  LaneGeometry geometry{};
  DemandSpec demand{};
  std::string demand_label;  ///< "low"/"medium"/"high" when set by level
  std::string controller = "fixed";
  SignalTimingRules rules{};
  AgentConfig agent{};
  std::string checkpoint_path;         ///< optional, learned controllers
  double fixed_time_total_green = 60.0;
  double horizon = 3600.0;
  double warmup = 300.0;
  double dt = 1.0;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  ///< optional; overrides `seed` when set
  bool record_steps = false;

  void validate() const;
  Network build_network() const;
  EpisodeConfig episode_config() const;
  std::vector<std::uint64_t> seed_list() const;

  std::string to_json_string() const;  ///< canonical, round-trips exactly
  static Scenario from_json_string(const std::string& text);
  static Scenario from_file(const std::string& path);
};

/// The fixed set of controller names a scenario may select.
bool is_controller_name(const std::string& name);
bool is_learned_controller_name(const std::string& name);

/// "low" / "medium" / "high" → preset rates; throws on anything else.
DemandSpec demand_by_name(const std::string& level, double truck_share = 0.0);

/// "arterial-4" or "grid-3x3" → built network.
Network topology_by_name(const std::string& name,
                         const LaneGeometry& geometry = {});

}  // namespace driftsim
