#include <CLI11.hpp>

#include <iostream>

#include "suntrack/harness.hpp"

using namespace suntrack;

namespace {

void write_or_print(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body;
  } else {
    write_file_atomic(path, body);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sun-tracking panel simulator: ephemeris, tracker, DQN agent, baselines"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out, config;

  // ephemeris
  auto* eph = app.add_subcommand("ephemeris", "Solar azimuth/elevation over one UTC day");
  double lat = 0.0, lon = 0.0, step_min = 5.0;
  std::string date;
  eph->add_option("--lat", lat, "Latitude, degrees north")->required();
  eph->add_option("--lon", lon, "Longitude, degrees east")->required();
  eph->add_option("--date", date, "UTC date YYYY-MM-DD")->required();
  eph->add_option("--step-minutes", step_min, "Sample spacing")->capture_default_str();
  eph->add_option("--out", out, "CSV path (stdout if omitted)");

  // track-train
  auto* tt = app.add_subcommand("track-train", "Train the sun-point tracker");
  std::string metrics, ckpt;
  tt->add_option("--config", config, "Tracker config JSON (defaults if omitted)")->check(CLI::ExistingFile);
  tt->add_option("--seed", seed)->capture_default_str();
  tt->add_option("--out", ckpt, "Checkpoint path")->required();
  tt->add_option("--metrics", metrics, "Metrics CSV path")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train the DQN agent");
  std::string scenario, agent, tracker_ckpt;
  tr->add_option("--scenario", scenario)->required()->check(CLI::ExistingFile);
  tr->add_option("--agent", agent, "Agent config JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--tracker", tracker_ckpt, "Tracker checkpoint for camera observations")->check(CLI::ExistingFile);
  tr->add_option("--tracker-config", config, "Tracker config JSON")->check(CLI::ExistingFile);
  tr->add_option("--seed", seed)->capture_default_str();
  tr->add_option("--out", ckpt, "Checkpoint path")->required();
  tr->add_option("--metrics", metrics, "Metrics CSV path")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Greedy evaluation of a trained agent");
  std::string agent_ckpt;
  int episodes = 10;
  ev->add_option("--scenario", scenario)->required()->check(CLI::ExistingFile);
  ev->add_option("--agent", agent, "Agent config JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", agent_ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--tracker", tracker_ckpt)->check(CLI::ExistingFile);
  ev->add_option("--tracker-config", config)->check(CLI::ExistingFile);
  ev->add_option("--episodes", episodes)->capture_default_str()->check(CLI::PositiveNumber);
  ev->add_option("--seed", seed)->capture_default_str();
  ev->add_option("--metrics", metrics, "Metrics CSV path (stdout if omitted)");

  // baseline
  auto* bl = app.add_subcommand("baseline", "Best static panel vs perfect tracking");
  bl->add_option("--scenario", scenario)->required()->check(CLI::ExistingFile);
  bl->add_option("--out", out, "CSV path (stdout if omitted)");

  // run
  auto* run = app.add_subcommand("run", "Full pipeline from a run config");
  run->add_option("--config", config, "Run config JSON")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", seed, "Overrides the config seed");
  auto* out_opt = run->add_option("--out", out, "Overrides the config output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (eph->parsed()) {
      write_or_print(out, ephemeris_csv(GeoLocation(lat, lon), Timestamp::parse_date(date), step_min));
    } else if (tt->parsed()) {
      const TrackerDocument doc = config.empty() ? TrackerDocument{} : load_tracker_config(config);
      const TrackerTrainResult r = train_tracker(doc.scene, doc.loss, doc.train, tracker_seed(seed));
      write_file_atomic(metrics, tracker_metrics_csv(r.metrics));
      save_checkpoint_atomic(r.net, ckpt);
    } else if (tr->parsed()) {
      const ScenarioDocument sc = load_scenario(scenario);
      const AgentConfig cfg = load_agent_config(agent);
      const TrackerDocument tdoc = config.empty() ? TrackerDocument{} : load_tracker_config(config);
      std::optional<Mlp> tnet;
      if (!tracker_ckpt.empty()) tnet = load_checkpoint(tracker_ckpt);
      const auto observer = make_observer(sc, tnet ? &*tnet : nullptr, tdoc);
      const AgentTrainResult r = train_agent(sc, cfg, agent_seed(seed), observer);
      write_file_atomic(metrics, agent_metrics_csv(r.metrics));
      save_checkpoint_atomic(r.qnet, ckpt);
    } else if (ev->parsed()) {
      const ScenarioDocument sc = load_scenario(scenario);
      const AgentConfig cfg = load_agent_config(agent);
      const TrackerDocument tdoc = config.empty() ? TrackerDocument{} : load_tracker_config(config);
      std::optional<Mlp> tnet;
      if (!tracker_ckpt.empty()) tnet = load_checkpoint(tracker_ckpt);
      const auto observer = make_observer(sc, tnet ? &*tnet : nullptr, tdoc);
      const Mlp qnet = load_checkpoint(agent_ckpt);
      write_or_print(metrics, agent_metrics_csv(evaluate_agent(sc, cfg, qnet, seed, episodes, observer)));
    } else if (bl->parsed()) {
      const ScenarioDocument sc = load_scenario(scenario);
      if (sc.toy) throw std::invalid_argument("baseline needs a solar scenario, not the toy mode");
      write_or_print(out, baseline_csv(compute_baselines(sc.solar)));
    } else if (run->parsed()) {
      RunConfig rc = load_run_config(config);
      if (seed_opt->count() > 0) rc.seed = seed;
      if (out_opt->count() > 0) rc.out = out;
      run_experiment(rc, &std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "suntrack: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
