#pragma once

// Experiment harness: controller construction from scenario names, training
// orchestration, the benchmark matrix (controllers × demand × topology ×
// truck share × seeds) and stability probes.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "driftsim/scenario.hpp"

namespace driftsim {

/// Decorrelated per-episode / per-cell seed stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Build the controller a scenario names.  For learned controllers,
/// `rl_training` selects training vs greedy evaluation; a checkpoint path in
/// the scenario is loaded (evaluation) after construction.
std::unique_ptr<Controller> make_controller(const Network& net,
                                            const Scenario& sc,
                                            bool rl_training);

/// Same, from explicit parts (used by the matrix runner).
std::unique_ptr<Controller> make_controller_parts(
    const Network& net, const std::string& name, const DemandSpec& demand,
    const SignalTimingRules& rules, const AgentConfig& agent,
    double fixed_time_total_green, bool rl_training, std::uint64_t seed);

struct TrainingEpisode {
  int episode = 0;
  double mean_reward = 0.0;
  double mean_loss = 0.0;
  long decisions = 0;
  double epsilon = 0.0;
  double avg_delay = 0.0;
};

struct TrainingLog {
  std::vector<TrainingEpisode> episodes;
  std::string csv() const;
};

struct LearningCurve {
  double first_decile_mean = 0.0;
  double final_decile_mean = 0.0;
  bool improved() const { return final_decile_mean > first_decile_mean; }
};
LearningCurve learning_curve(const TrainingLog& log);

/// Run training episodes with per-episode derived seeds.  The controller
/// must be in training mode; its networks persist across episodes.
TrainingLog train_agent(const Network& net, const EpisodeConfig& base,
                        RlController& controller, int episodes,
                        std::uint64_t seed_base);
TrainingLog train_agent(const Network& net, const Scenario& sc,
                        RlController& controller, int episodes);

struct ResultCell {
  std::string controller;
  std::string topology;
  std::string demand;
  double truck_share = 0.0;
  double mean_delay = 0.0;
  double stddev_delay = 0.0;
  long seeds = 0;
};

struct ResultTable {
  std::vector<ResultCell> cells;

  std::string to_csv() const;  ///< byte-stable; round-trips exactly
  static ResultTable from_csv(const std::string& text);
  /// Aligned text: one row per controller, one column per
  /// (topology, demand, truck share) combination.
  std::string formatted() const;
  const ResultCell* find(const std::string& controller,
                         const std::string& topology,
                         const std::string& demand, double truck_share) const;
};

struct MatrixSpec {
  std::vector<std::string> topologies{"arterial-4", "grid-3x3"};
  std::vector<std::string> demands{"low", "medium", "high"};
  std::vector<double> truck_shares{0.0};
  std::vector<std::string> controllers{"fixed", "doras-q", "max-pressure",
                                       "back-pressure"};
  int seeds = 5;
  std::uint64_t base_seed = 1;
  double horizon = 3600.0;
  double warmup = 300.0;
  double dt = 1.0;
  LaneGeometry geometry{};
  SignalTimingRules rules{};
  AgentConfig agent{};
  double fixed_time_total_green = 60.0;
  int rl_training_episodes = 60;  ///< per-cell pre-training for learned rows
  int jobs = 1;

  void validate() const;
};

/// One episode per (cell, seed); every cell shares the same seed set
/// base_seed + 0..seeds-1.  Deterministic for any job count.
ResultTable run_matrix(const MatrixSpec& spec);

/// True when the segment means over the final third of the series increase
/// strictly — the oversaturation signature.
bool oversaturation_growth(std::span<const double> series, int segments = 4);

struct StabilityRun {
  MetricsReport report;
  bool growth_flagged = false;  ///< pending-inclusive backlog keeps growing
};

StabilityRun run_stability(const Network& net, const EpisodeConfig& cfg,
                           Controller& controller);
std::string stability_text(const StabilityRun& run);

}  // namespace driftsim
