#pragma once

// Subcommand bodies shared by the CLI and the tests: fixed CSV layouts,
// seed fan-out, and the full pipeline with a last-written summary.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "suntrack/agent.hpp"
#include "suntrack/checkpoint.hpp"
#include "suntrack/config.hpp"
#include "suntrack/environment.hpp"
#include "suntrack/tracker.hpp"

namespace suntrack {

inline constexpr const char* kEphemerisHeader = "time_utc,azimuth_deg,elevation_deg";
inline constexpr const char* kTrackerMetricsHeader = "epoch,loss,hit_rate,occluded_hit_rate";
inline constexpr const char* kAgentMetricsHeader = "episode,return,success,energy_wh,epsilon";
inline constexpr const char* kBaselineHeader = "best_static_wh,oracle_tracking_wh,gain_percent";

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Writes via a sibling temp file and rename, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << contents;
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void save_checkpoint_atomic(const Mlp& m, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_json(m).dump() + "\n");
}

// Per-component seeds derived from one master seed.
inline std::uint64_t tracker_seed(std::uint64_t master) { return derive_seed(master, "tracker"); }
inline std::uint64_t agent_seed(std::uint64_t master) { return derive_seed(master, "agent"); }
inline std::uint64_t eval_env_seed(std::uint64_t master, int i) {
  return derive_seed(master, "env", static_cast<std::uint64_t>(i));
}

// ---------------------------------------------------------------------------
// CSV bodies

inline std::string ephemeris_csv(const GeoLocation& loc, const Timestamp& date, double step_minutes) {
  if (!(step_minutes > 0.0)) throw std::invalid_argument("step_minutes must be > 0");
  std::string out = std::string(kEphemerisHeader) + "\n";
  const Timestamp start = date.start_of_day();
  const int n = static_cast<int>(std::floor(24.0 * 60.0 / step_minutes + 1e-9));
  for (int k = 0; k < n; ++k) {
    const Timestamp t = start.plus_seconds(k * step_minutes * 60.0);
    const SolarAngles a = solar_direction(t, loc);
    out += t.iso8601() + "," + fmt(a.azimuth_deg) + "," + fmt(a.elevation_deg) + "\n";
  }
  return out;
}

inline std::string tracker_metrics_csv(const std::vector<TrackerEpochMetrics>& rows) {
  std::string out = std::string(kTrackerMetricsHeader) + "\n";
  for (const auto& m : rows) {
    out += std::to_string(m.epoch) + "," + fmt(m.loss) + "," + fmt(m.hit_rate) + "," + fmt(m.occluded_hit_rate) + "\n";
  }
  return out;
}

inline std::string agent_metrics_csv(const std::vector<EpisodeMetrics>& rows) {
  std::string out = std::string(kAgentMetricsHeader) + "\n";
  for (const auto& m : rows) {
    out += std::to_string(m.episode) + "," + fmt(m.ret) + "," + (m.success ? "1" : "0") + "," + fmt(m.energy_wh) +
           "," + fmt(m.epsilon) + "\n";
  }
  return out;
}

struct BaselineReport {
  double best_static_wh = 0.0;
  double best_tilt_deg = 0.0;
  double best_azimuth_deg = 0.0;
  double horizontal_wh = 0.0;
  double oracle_tracking_wh = 0.0;

  double gain_percent() const { return 100.0 * (oracle_tracking_wh / best_static_wh - 1.0); }
};

inline constexpr double kStaticGridDeg = 5.0;

inline BaselineReport compute_baselines(const ScenarioConfig& cfg) {
  BaselineReport r;
  const StaticOptimum best = best_static_orientation(cfg, kStaticGridDeg);
  r.best_static_wh = best.wh;
  r.best_tilt_deg = best.tilt_deg;
  r.best_azimuth_deg = best.azimuth_deg;
  r.horizontal_wh = static_yield(cfg, Vec3::UnitZ());
  r.oracle_tracking_wh = oracle_tracking_yield(cfg);
  return r;
}

inline std::string baseline_csv(const BaselineReport& r) {
  return std::string(kBaselineHeader) + "\n" + fmt(r.best_static_wh) + "," + fmt(r.oracle_tracking_wh) + "," +
         fmt(r.gain_percent()) + "\n";
}

// ---------------------------------------------------------------------------
// Agent plumbing shared by train / eval / run

inline std::optional<TrackerObserver> make_observer(const ScenarioDocument& sc, const Mlp* tracker,
                                                    const TrackerDocument& tcfg) {
  if (sc.toy || !sc.solar.use_tracker_observations) return std::nullopt;
  if (!tracker) throw std::invalid_argument("scenario sets use_tracker_observations but no tracker network was given");
  TrackerObserver o;
  o.net = std::make_shared<const Mlp>(*tracker);
  o.n_points = tcfg.loss.n_points;
  o.n_refine = tcfg.train.n_refine;
  o.noise_sigma = tcfg.scene.noise_sigma;
  return o;
}

inline AgentTrainResult train_agent(const ScenarioDocument& sc, const AgentConfig& agent, std::uint64_t seed,
                                    const std::optional<TrackerObserver>& observer) {
  if (sc.toy) return run_training(ToyEnv(sc.toy_config), agent, seed);
  return run_training(SolarEnv(sc.solar, observer), agent, seed);
}

// Greedy episodes with env seeds eval_env_seed(master, i).
inline std::vector<EpisodeMetrics> evaluate_agent(const ScenarioDocument& sc, const AgentConfig& agent,
                                                  const Mlp& qnet, std::uint64_t master, int episodes,
                                                  const std::optional<TrackerObserver>& observer) {
  std::vector<EpisodeMetrics> rows;
  for (int i = 0; i < episodes; ++i) {
    EpisodeMetrics m = sc.toy ? evaluate_policy(ToyEnv(sc.toy_config), qnet, agent.action_delta_rad, eval_env_seed(master, i))
                              : evaluate_policy(SolarEnv(sc.solar, observer), qnet, agent.action_delta_rad,
                                                eval_env_seed(master, i));
    m.episode = i;
    m.epsilon = 0.0;
    rows.push_back(m);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Full pipeline

struct RunSummary {
  std::vector<std::pair<std::string, double>> entries;

  void add(const std::string& k, double v) { entries.emplace_back(k, v); }

  std::string to_json() const {
    Json j = Json::object();
    for (const auto& [k, v] : entries) j[k] = v;
    return j.dump(2) + "\n";
  }
};

inline constexpr const char* kSummaryFile = "summary.json";

// Writes into cfg.out: tracker.json + tracker_metrics.csv (when a tracker
// config is given and no tracker checkpoint), agent.json + train_metrics.csv
// (unless a checkpoint is given), eval_metrics.csv, baseline.csv, and last
// summary.json.
inline RunSummary run_experiment(const RunConfig& cfg, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  const fs::path out(cfg.out);
  fs::create_directories(out);
  const ScenarioDocument sc = load_scenario(cfg.scenario);
  const AgentConfig agent = load_agent_config(cfg.agent);
  const TrackerDocument tdoc = cfg.tracker.empty() ? TrackerDocument{} : load_tracker_config(cfg.tracker);
  RunSummary summary;

  std::optional<Mlp> tracker;
  if (!cfg.tracker_checkpoint.empty()) {
    tracker = load_checkpoint(cfg.tracker_checkpoint);
  } else if (!cfg.tracker.empty()) {
    if (log) *log << "training tracker (" << tdoc.train.steps << " steps)\n";
    TrackerTrainResult tr = train_tracker(tdoc.scene, tdoc.loss, tdoc.train, tracker_seed(cfg.seed));
    write_file_atomic(out / "tracker_metrics.csv", tracker_metrics_csv(tr.metrics));
    save_checkpoint_atomic(tr.net, out / "tracker.json");
    if (!tr.metrics.empty()) {
      summary.add("tracker_hit_rate", tr.metrics.back().hit_rate);
      summary.add("tracker_occluded_hit_rate", tr.metrics.back().occluded_hit_rate);
    }
    tracker = std::move(tr.net);
  }
  const auto observer = make_observer(sc, tracker ? &*tracker : nullptr, tdoc);

  Mlp qnet;
  if (!cfg.checkpoint.empty()) {
    qnet = load_checkpoint(cfg.checkpoint);
  } else {
    if (log) *log << "training agent (" << agent.episodes << " episodes)\n";
    AgentTrainResult ar = train_agent(sc, agent, agent_seed(cfg.seed), observer);
    write_file_atomic(out / "train_metrics.csv", agent_metrics_csv(ar.metrics));
    save_checkpoint_atomic(ar.qnet, out / "agent.json");
    const std::size_t tail = std::min<std::size_t>(50, ar.metrics.size());
    if (tail > 0) {
      double succ = 0.0, ret = 0.0;
      for (std::size_t i = ar.metrics.size() - tail; i < ar.metrics.size(); ++i) {
        succ += ar.metrics[i].success ? 1.0 : 0.0;
        ret += ar.metrics[i].ret;
      }
      summary.add("agent_train_final_success_rate", succ / tail);
      summary.add("agent_train_final_mean_return", ret / tail);
    }
    qnet = std::move(ar.qnet);
  }

  if (log) *log << "evaluating over " << cfg.eval_episodes << " seeds\n";
  const auto eval = evaluate_agent(sc, agent, qnet, cfg.seed, cfg.eval_episodes, observer);
  write_file_atomic(out / "eval_metrics.csv", agent_metrics_csv(eval));
  double energy = 0.0, succ = 0.0, ret = 0.0;
  for (const auto& m : eval) {
    energy += m.energy_wh;
    succ += m.success ? 1.0 : 0.0;
    ret += m.ret;
  }
  const double n = static_cast<double>(eval.size());
  summary.add("agent_final_success_rate", succ / n);
  summary.add("policy_mean_return", ret / n);
  summary.add("policy_energy_wh", energy / n);

  if (!sc.toy) {
    if (log) *log << "computing baselines\n";
    const BaselineReport b = compute_baselines(sc.solar);
    write_file_atomic(out / "baseline.csv", baseline_csv(b));
    const double policy = energy / n;
    summary.add("best_static_wh", b.best_static_wh);
    summary.add("best_static_tilt_deg", b.best_tilt_deg);
    summary.add("best_static_azimuth_deg", b.best_azimuth_deg);
    summary.add("horizontal_static_wh", b.horizontal_wh);
    summary.add("oracle_tracking_wh", b.oracle_tracking_wh);
    summary.add("gain_vs_best_static_percent", 100.0 * (policy / b.best_static_wh - 1.0));
    summary.add("gain_vs_horizontal_percent", 100.0 * (policy / b.horizontal_wh - 1.0));
    summary.add("policy_vs_oracle_percent", 100.0 * policy / b.oracle_tracking_wh);
    summary.add("oracle_gain_vs_best_static_percent", b.gain_percent());
  } else {
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < cfg.eval_episodes; ++i) seeds.push_back(eval_env_seed(cfg.seed, i));
    const ToyOracle o = toy_policy_oracle(sc.toy_config, agent.action_delta_rad, seeds);
    summary.add("toy_oracle_mean_return", o.mean_return);
    summary.add("policy_vs_toy_oracle_percent", 100.0 * (ret / n) / o.mean_return);
  }

  write_file_atomic(out / kSummaryFile, summary.to_json());
  return summary;
}

}  // namespace suntrack
