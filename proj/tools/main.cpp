// driftsim command line: simulate | train | matrix | stability.
//
// Log verbosity comes from the DRIFTSIM_LOG environment variable
// ("quiet" default, "info", "debug"); progress goes to stderr so stdout
// stays machine-readable.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "driftsim/experiment.hpp"
#include "driftsim/scenario.hpp"
#include "driftsim/simulation.hpp"

namespace {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("DRIFTSIM_LOG");
  if (env == nullptr) return LogLevel::Quiet;
  const std::string v(env);
  if (v == "debug") return LogLevel::Debug;
  if (v == "info") return LogLevel::Info;
  return LogLevel::Quiet;
}

void log_info(const std::string& message) {
  if (log_level() >= LogLevel::Info) {
    std::cerr << "[driftsim] " << message << '\n';
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file " + path);
  out << content;
}

constexpr const char* kStepCsvDoc =
    "Per-step CSV columns: time; queue_<lane-id> (PCE backlog per lane); "
    "phase_<intersection-id> (active phase id); l_linear (sum of queues); "
    "l_quadratic (half sum of squared queues); delta (flow-based linear "
    "drift realised that step); reward (last controller reward, learned "
    "controllers only).";

constexpr const char* kResultCsvDoc =
    "Result CSV columns: controller, topology, demand, truck_share, "
    "mean_delay (s/vehicle over seeds), stddev_delay (sample), seeds.";

constexpr const char* kTrainCsvDoc =
    "Training log CSV columns: episode, mean_reward (per decision), "
    "mean_loss, decisions, epsilon (end of episode), avg_delay "
    "(s/vehicle, greedy metric of that training episode).";

int cmd_simulate(const std::string& scenario_path,
                 std::optional<std::uint64_t> seed,
                 const std::string& out_path) {
  driftsim::Scenario sc = driftsim::Scenario::from_file(scenario_path);
  if (seed.has_value()) {
    sc.seed = *seed;
    sc.seeds.clear();
  }
  if (!out_path.empty()) sc.record_steps = true;
  const driftsim::Network net = sc.build_network();
  log_info("network: " + std::to_string(net.intersection_count()) +
           " intersections, " + std::to_string(net.lane_count()) + " lanes");
  std::unique_ptr<driftsim::Controller> controller =
      driftsim::make_controller(net, sc, /*rl_training=*/false);
  const driftsim::EpisodeConfig cfg = sc.episode_config();
  const driftsim::MetricsReport report =
      driftsim::run_episode(net, cfg, *controller);
  if (!out_path.empty()) {
    write_file(out_path, driftsim::step_csv(net, report));
    log_info("wrote per-step CSV to " + out_path);
  }
  std::cout << driftsim::summary_text(report);
  return 0;
}

int cmd_train(const std::string& scenario_path, int episodes,
              const std::string& checkpoint_path,
              const std::string& log_path,
              std::optional<std::uint64_t> seed) {
  driftsim::Scenario sc = driftsim::Scenario::from_file(scenario_path);
  if (seed.has_value()) sc.seed = *seed;
  if (!driftsim::is_learned_controller_name(sc.controller)) {
    throw std::runtime_error("train: scenario controller \"" + sc.controller +
                             "\" is not a learned controller");
  }
  sc.checkpoint_path.clear();  // always train from scratch
  const driftsim::Network net = sc.build_network();
  auto controller = driftsim::make_controller(net, sc, /*rl_training=*/true);
  auto* rl = static_cast<driftsim::RlController*>(controller.get());
  log_info("training " + sc.controller + " for " + std::to_string(episodes) +
           " episodes");
  const driftsim::TrainingLog log =
      driftsim::train_agent(net, sc, *rl, episodes);
  const std::string csv = log.csv();
  if (log_path.empty()) {
    std::cout << csv;
  } else {
    write_file(log_path, csv);
    log_info("wrote training log to " + log_path);
  }
  if (!checkpoint_path.empty()) {
    write_file(checkpoint_path, rl->checkpoint_json(net));
    log_info("wrote checkpoint to " + checkpoint_path);
  }
  const driftsim::LearningCurve curve = driftsim::learning_curve(log);
  std::cerr << "first-decile mean reward: " << curve.first_decile_mean
            << ", final-decile mean reward: " << curve.final_decile_mean
            << '\n';
  return 0;
}

int cmd_matrix(const driftsim::MatrixSpec& spec, const std::string& out_path) {
  const driftsim::ResultTable table = driftsim::run_matrix(spec);
  if (!out_path.empty()) {
    write_file(out_path, table.to_csv());
    log_info("wrote result CSV to " + out_path);
  }
  std::cout << table.formatted();
  return 0;
}

int cmd_stability(const std::string& scenario_path,
                  std::optional<std::uint64_t> seed) {
  driftsim::Scenario sc = driftsim::Scenario::from_file(scenario_path);
  if (seed.has_value()) {
    sc.seed = *seed;
    sc.seeds.clear();
  }
  const driftsim::Network net = sc.build_network();
  auto controller = driftsim::make_controller(net, sc, /*rl_training=*/false);
  const driftsim::StabilityRun run =
      driftsim::run_stability(net, sc.episode_config(), *controller);
  std::cout << driftsim::stability_text(run);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      std::string("driftsim: queue-network traffic signal simulator.\n") +
      kStepCsvDoc + "\n" + kResultCsvDoc + "\n" + kTrainCsvDoc};
  app.require_subcommand(1);
  app.fallthrough();  // lets --seed appear after the subcommand name

  std::optional<std::uint64_t> global_seed;
  app.add_option("--seed", global_seed,
                 "Override the scenario/base seed for any subcommand");

  // simulate
  std::string sim_scenario;
  std::string sim_out;
  CLI::App* simulate = app.add_subcommand(
      "simulate", std::string("Run one episode and print a summary. ") +
                      kStepCsvDoc);
  simulate->add_option("scenario", sim_scenario, "Scenario JSON file")
      ->required();
  simulate->add_option("--out", sim_out, "Write the per-step CSV here");

  // train
  std::string train_scenario;
  int train_episodes = 50;
  std::string train_checkpoint;
  std::string train_log;
  CLI::App* train = app.add_subcommand(
      "train", std::string("Train a learned controller. ") + kTrainCsvDoc);
  train->add_option("scenario", train_scenario, "Scenario JSON file")
      ->required();
  train->add_option("--episodes", train_episodes, "Training episodes")
      ->check(CLI::PositiveNumber);
  train->add_option("--checkpoint", train_checkpoint,
                    "Write the agent checkpoint here");
  train->add_option("--log", train_log,
                    "Write the training CSV here (default: stdout)");

  // matrix
  driftsim::MatrixSpec spec;
  std::string matrix_out;
  CLI::App* matrix = app.add_subcommand(
      "matrix",
      std::string("Run the controller x demand x topology x truck-share "
                  "benchmark matrix. ") +
          kResultCsvDoc);
  matrix->add_option("--topologies", spec.topologies,
                     "e.g. arterial-4 grid-3x3");
  matrix->add_option("--demands", spec.demands, "low / medium / high");
  matrix->add_option("--truck-shares", spec.truck_shares,
                     "Subset of {0, 0.10, 0.25, 0.40}");
  matrix->add_option("--controllers", spec.controllers,
                     "Controller names (fixed, doras-q, max-pressure, "
                     "back-pressure, rl-wt, rl-q, rl-mp, rl-bp)");
  matrix->add_option("--seeds", spec.seeds, "Seeds per cell")
      ->check(CLI::PositiveNumber);
  matrix->add_option("--horizon", spec.horizon, "Episode length in seconds");
  matrix->add_option("--warmup", spec.warmup, "Warmup excluded from metrics");
  matrix->add_option("--rl-episodes", spec.rl_training_episodes,
                     "Pre-training episodes for learned controllers");
  matrix->add_option("--jobs", spec.jobs, "Worker threads")
      ->check(CLI::PositiveNumber);
  matrix->add_option("--out", matrix_out, "Write the result CSV here");

  // stability
  std::string stab_scenario;
  CLI::App* stability = app.add_subcommand(
      "stability",
      "Run one episode and report the strong-stability estimate: bound "
      "constant B, drift margin epsilon, queue bound B/epsilon, the measured "
      "time-average queue, and an oversaturation growth flag");
  stability->add_option("scenario", stab_scenario, "Scenario JSON file")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      return cmd_simulate(sim_scenario, global_seed, sim_out);
    }
    if (train->parsed()) {
      return cmd_train(train_scenario, train_episodes, train_checkpoint,
                       train_log, global_seed);
    }
    if (matrix->parsed()) {
      if (global_seed.has_value()) spec.base_seed = *global_seed;
      return cmd_matrix(spec, matrix_out);
    }
    if (stability->parsed()) {
      return cmd_stability(stab_scenario, global_seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
