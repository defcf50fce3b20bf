#include "driftsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace driftsim {

namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read file " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::unique_ptr<Controller> make_controller_parts(
    const Network& net, const std::string& name, const DemandSpec& demand,
    const SignalTimingRules& rules, const AgentConfig& agent,
    double fixed_time_total_green, bool rl_training, std::uint64_t seed) {
  if (name == "fixed") {
    return std::make_unique<FixedTimeController>(net, demand, rules,
                                                 fixed_time_total_green);
  }
  if (name == "doras-q") return std::make_unique<DorasQController>();
  if (name == "max-pressure") return std::make_unique<MaxPressureController>();
  if (name == "back-pressure") {
    return std::make_unique<BackPressureController>();
  }
  if (is_learned_controller_name(name)) {
    return std::make_unique<RlController>(
        net, reward_kind_for_controller(name), agent, rl_training, seed);
  }
  throw std::invalid_argument("unknown controller name \"" + name + "\"");
}

std::unique_ptr<Controller> make_controller(const Network& net,
                                            const Scenario& sc,
                                            bool rl_training) {
  std::unique_ptr<Controller> controller = make_controller_parts(
      net, sc.controller, sc.demand, sc.rules, sc.agent,
      sc.fixed_time_total_green, rl_training, sc.seed);
  if (is_learned_controller_name(sc.controller) &&
      !sc.checkpoint_path.empty()) {
    auto* rl = static_cast<RlController*>(controller.get());
    rl->load_checkpoint_json(net, read_file(sc.checkpoint_path));
  }
  return controller;
}

std::string TrainingLog::csv() const {
  std::ostringstream out;
  out << "episode,mean_reward,mean_loss,decisions,epsilon,avg_delay\n";
  for (const TrainingEpisode& e : episodes) {
    out << e.episode << ',' << fmt_double(e.mean_reward) << ','
        << fmt_double(e.mean_loss) << ',' << e.decisions << ','
        << fmt_double(e.epsilon) << ',' << fmt_double(e.avg_delay) << '\n';
  }
  return out.str();
}

LearningCurve learning_curve(const TrainingLog& log) {
  LearningCurve curve;
  const std::size_t n = log.episodes.size();
  if (n == 0) return curve;
  const std::size_t k = std::max<std::size_t>(1, n / 10);
  double first = 0.0;
  double last = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    first += log.episodes[i].mean_reward;
    last += log.episodes[n - 1 - i].mean_reward;
  }
  curve.first_decile_mean = first / static_cast<double>(k);
  curve.final_decile_mean = last / static_cast<double>(k);
  return curve;
}

TrainingLog train_agent(const Network& net, const EpisodeConfig& base,
                        RlController& controller, int episodes,
                        std::uint64_t seed_base) {
  if (!controller.training()) {
    throw std::invalid_argument(
        "train_agent: controller is not in training mode");
  }
  if (episodes <= 0) {
    throw std::invalid_argument("train_agent: episodes must be positive");
  }
  TrainingLog log;
  log.episodes.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    EpisodeConfig cfg = base;
    cfg.seed = derive_seed(seed_base, static_cast<std::uint64_t>(e));
    cfg.record_steps = false;
    const MetricsReport rep = run_episode(net, cfg, controller);
    const RlEpisodeStats& st = controller.episode_stats();
    TrainingEpisode row;
    row.episode = e;
    row.mean_reward = st.mean_reward();
    row.mean_loss = st.mean_loss();
    row.decisions = st.decisions;
    row.epsilon = controller.agent(0).epsilon();
    row.avg_delay = rep.avg_vehicle_delay;
    log.episodes.push_back(row);
  }
  return log;
}

TrainingLog train_agent(const Network& net, const Scenario& sc,
                        RlController& controller, int episodes) {
  return train_agent(net, sc.episode_config(), controller, episodes, sc.seed);
}

std::string ResultTable::to_csv() const {
  std::ostringstream out;
  out << "controller,topology,demand,truck_share,mean_delay,stddev_delay,"
         "seeds\n";
  for (const ResultCell& c : cells) {
    out << c.controller << ',' << c.topology << ',' << c.demand << ','
        << fmt_double(c.truck_share) << ',' << fmt_double(c.mean_delay) << ','
        << fmt_double(c.stddev_delay) << ',' << c.seeds << '\n';
  }
  return out.str();
}

ResultTable ResultTable::from_csv(const std::string& text) {
  ResultTable table;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != 7) {
      throw std::runtime_error("ResultTable: malformed CSV row: " + line);
    }
    ResultCell c;
    c.controller = fields[0];
    c.topology = fields[1];
    c.demand = fields[2];
    c.truck_share = std::stod(fields[3]);
    c.mean_delay = std::stod(fields[4]);
    c.stddev_delay = std::stod(fields[5]);
    c.seeds = std::stol(fields[6]);
    table.cells.push_back(std::move(c));
  }
  return table;
}

const ResultCell* ResultTable::find(const std::string& controller,
                                    const std::string& topology,
                                    const std::string& demand,
                                    double truck_share) const {
  for (const ResultCell& c : cells) {
    if (c.controller == controller && c.topology == topology &&
        c.demand == demand &&
        std::abs(c.truck_share - truck_share) < 1e-12) {
      return &c;
    }
  }
  return nullptr;
}

std::string ResultTable::formatted() const {
  // Column per (topology, demand, truck share) in first-appearance order.
  std::vector<std::string> col_keys;
  std::vector<std::string> col_titles;
  std::vector<std::string> row_names;
  auto column_key = [](const ResultCell& c) {
    return c.topology + "|" + c.demand + "|" + fmt_double(c.truck_share);
  };
  for (const ResultCell& c : cells) {
    const std::string key = column_key(c);
    if (std::find(col_keys.begin(), col_keys.end(), key) == col_keys.end()) {
      col_keys.push_back(key);
      std::string title = c.topology + " " + c.demand;
      if (std::abs(c.truck_share) > 1e-12) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), " t=%.0f%%", c.truck_share * 100.0);
        title += buf;
      }
      col_titles.push_back(std::move(title));
    }
    if (std::find(row_names.begin(), row_names.end(), c.controller) ==
        row_names.end()) {
      row_names.push_back(c.controller);
    }
  }
  std::vector<std::vector<std::string>> grid(
      row_names.size(), std::vector<std::string>(col_keys.size(), "-"));
  for (const ResultCell& c : cells) {
    const auto r = std::distance(
        row_names.begin(),
        std::find(row_names.begin(), row_names.end(), c.controller));
    const auto k = std::distance(
        col_keys.begin(),
        std::find(col_keys.begin(), col_keys.end(), column_key(c)));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f +/- %.2f", c.mean_delay,
                  c.stddev_delay);
    grid[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] = buf;
  }
  std::vector<std::size_t> width(col_keys.size());
  std::size_t name_width = std::string("controller").size();
  for (const std::string& n : row_names) {
    name_width = std::max(name_width, n.size());
  }
  for (std::size_t k = 0; k < col_keys.size(); ++k) {
    width[k] = col_titles[k].size();
    for (const auto& row : grid) width[k] = std::max(width[k], row[k].size());
  }
  std::ostringstream out;
  out << std::string(name_width, ' ');
  for (std::size_t k = 0; k < col_keys.size(); ++k) {
    out << "  " << std::string(width[k] - col_titles[k].size(), ' ')
        << col_titles[k];
  }
  out << '\n';
  for (std::size_t r = 0; r < row_names.size(); ++r) {
    out << row_names[r]
        << std::string(name_width - row_names[r].size(), ' ');
    for (std::size_t k = 0; k < col_keys.size(); ++k) {
      out << "  " << std::string(width[k] - grid[r][k].size(), ' ')
          << grid[r][k];
    }
    out << '\n';
  }
  return out.str();
}

void MatrixSpec::validate() const {
  if (topologies.empty() || demands.empty() || truck_shares.empty() ||
      controllers.empty()) {
    throw std::invalid_argument("MatrixSpec: every dimension needs >= 1 entry");
  }
  for (const std::string& c : controllers) {
    if (!is_controller_name(c)) {
      throw std::invalid_argument("MatrixSpec: unknown controller \"" + c +
                                  "\"");
    }
  }
  for (double s : truck_shares) {
    static const double kShares[] = {0.0, 0.10, 0.25, 0.40};
    bool ok = false;
    for (double v : kShares) {
      if (std::abs(s - v) < 1e-12) ok = true;
    }
    if (!ok) {
      throw std::invalid_argument(
          "MatrixSpec: truck share must be one of 0, 0.10, 0.25, 0.40");
    }
  }
  if (seeds < 1) throw std::invalid_argument("MatrixSpec: seeds >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("MatrixSpec: dt > 0");
  rules.validate(dt);
  agent.validate();
  geometry.validate();
  if (warmup < 0.0 || !(horizon > warmup)) {
    throw std::invalid_argument("MatrixSpec: require horizon > warmup >= 0");
  }
  if (rl_training_episodes < 0) {
    throw std::invalid_argument("MatrixSpec: rl_training_episodes >= 0");
  }
  if (jobs < 1) throw std::invalid_argument("MatrixSpec: jobs >= 1");
}

ResultTable run_matrix(const MatrixSpec& spec) {
  spec.validate();

  struct Cell {
    std::string topology;
    std::string demand;
    double truck_share;
    std::string controller;
  };
  std::vector<Cell> cells;
  for (const std::string& topo : spec.topologies) {
    for (const std::string& level : spec.demands) {
      for (double share : spec.truck_shares) {
        for (const std::string& ctrl : spec.controllers) {
          cells.push_back(Cell{topo, level, share, ctrl});
        }
      }
    }
  }

  std::vector<ResultCell> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size() || failed.load()) break;
      try {
        const Cell& cell = cells[i];
        const Network net = topology_by_name(cell.topology, spec.geometry);
        const DemandSpec demand =
            demand_by_name(cell.demand, cell.truck_share);

        std::unique_ptr<Controller> controller = make_controller_parts(
            net, cell.controller, demand, spec.rules, spec.agent,
            spec.fixed_time_total_green,
            /*rl_training=*/is_learned_controller_name(cell.controller),
            derive_seed(spec.base_seed, 0xC0FFEE + i));
        if (is_learned_controller_name(cell.controller) &&
            spec.rl_training_episodes > 0) {
          auto* rl = static_cast<RlController*>(controller.get());
          EpisodeConfig train_cfg;
          train_cfg.dt = spec.dt;
          train_cfg.horizon = spec.horizon;
          train_cfg.warmup = spec.warmup;
          train_cfg.demand = demand;
          train_cfg.rules = spec.rules;
          train_agent(net, train_cfg, *rl, spec.rl_training_episodes,
                      derive_seed(spec.base_seed, 0xABCD00 + i));
          rl->set_training(false);
        }

        std::vector<double> delays;
        delays.reserve(static_cast<std::size_t>(spec.seeds));
        for (int k = 0; k < spec.seeds; ++k) {
          EpisodeConfig cfg;
          cfg.dt = spec.dt;
          cfg.horizon = spec.horizon;
          cfg.warmup = spec.warmup;
          cfg.demand = demand;
          cfg.rules = spec.rules;
          cfg.seed = spec.base_seed + static_cast<std::uint64_t>(k);
          const MetricsReport rep = run_episode(net, cfg, *controller);
          delays.push_back(rep.avg_vehicle_delay);
        }
        double mean = 0.0;
        for (double d : delays) mean += d;
        mean /= static_cast<double>(delays.size());
        double var = 0.0;
        if (delays.size() > 1) {
          for (double d : delays) var += (d - mean) * (d - mean);
          var /= static_cast<double>(delays.size() - 1);
        }
        results[i] = ResultCell{cells[i].controller, cells[i].topology,
                                cells[i].demand,     cells[i].truck_share,
                                mean,                std::sqrt(var),
                                spec.seeds};
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
      }
    }
  };

  const int n_threads =
      std::max(1, std::min<int>(spec.jobs, static_cast<int>(cells.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  ResultTable table;
  table.cells = std::move(results);
  return table;
}

bool oversaturation_growth(std::span<const double> series, int segments) {
  if (segments < 2) {
    throw std::invalid_argument("oversaturation_growth: segments >= 2");
  }
  const std::size_t n = series.size();
  const std::size_t start = (2 * n) / 3;
  const std::size_t len = n - start;
  if (len < static_cast<std::size_t>(segments)) return false;
  std::vector<double> means(static_cast<std::size_t>(segments), 0.0);
  for (int s = 0; s < segments; ++s) {
    const std::size_t lo = start + (len * static_cast<std::size_t>(s)) /
                                       static_cast<std::size_t>(segments);
    const std::size_t hi = start + (len * static_cast<std::size_t>(s + 1)) /
                                       static_cast<std::size_t>(segments);
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) sum += series[i];
    means[static_cast<std::size_t>(s)] =
        sum / static_cast<double>(hi - lo);
  }
  for (int s = 1; s < segments; ++s) {
    if (!(means[static_cast<std::size_t>(s)] >
          means[static_cast<std::size_t>(s - 1)])) {
      return false;
    }
  }
  return true;
}

StabilityRun run_stability(const Network& net, const EpisodeConfig& cfg,
                           Controller& controller) {
  StabilityRun run;
  run.report = run_episode(net, cfg, controller);
  std::vector<double> combined(run.report.total_queue_series.size(), 0.0);
  for (std::size_t i = 0; i < combined.size(); ++i) {
    combined[i] = run.report.total_queue_series[i] +
                  run.report.pending_pce_series[i];
  }
  run.growth_flagged = oversaturation_growth(combined);
  return run;
}

std::string stability_text(const StabilityRun& run) {
  const StabilityEstimate& st = run.report.stability;
  const bool bound_held =
      st.epsilon > 0.0 &&
      st.measured_time_avg_queue <= st.queue_bound + 1e-9;
  std::ostringstream out;
  out << "B: " << fmt_double(st.B) << '\n';
  out << "epsilon: " << fmt_double(st.epsilon) << '\n';
  out << "queue_bound: " << fmt_double(st.queue_bound) << '\n';
  out << "measured_avg_queue: " << fmt_double(st.measured_time_avg_queue)
      << '\n';
  out << "strongly_stable: " << (st.strongly_stable ? "yes" : "no") << '\n';
  out << "bound_held: " << (bound_held ? "yes" : "no") << '\n';
  out << "oversaturated_growth: " << (run.growth_flagged ? "yes" : "no")
      << '\n';
  return out.str();
}

}  // namespace driftsim
