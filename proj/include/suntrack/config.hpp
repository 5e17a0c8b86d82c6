#pragma once

// Strict JSON configuration documents: unknown keys are rejected, absent
// optional keys take the struct defaults, errors name the offending field.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "suntrack/agent.hpp"
#include "suntrack/environment.hpp"
#include "suntrack/tracker.hpp"

namespace suntrack {

using Json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Reads fields of one JSON object and remembers which keys were consumed.
class FieldReader {
 public:
  FieldReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + "expected an object");
  }

  template <class T>
  void optional(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    read(key, out);
  }

  template <class T>
  void required(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where(key) + "required field is missing");
    read(key, out);
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json& child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const {
    const std::string full = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
    return full.empty() ? "" : full + ": ";
  }

  // Throws on any key that was never asked for.
  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(where(item.key()) + "unknown field");
    }
  }

  // Wraps invariant checks so their messages carry the document path.
  template <class F>
  void check(F&& f) const {
    try {
      f();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where("") + e.what());
    }
  }

 private:
  template <class T>
  void read(const char* key, T& out) {
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(where(key) + "wrong type (found " + std::string(j_.at(key).type_name()) + ")");
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Json parse_document(const std::string& text, const std::string& origin) {
  // An empty document is an empty object, so the first missing required
  // field gets reported instead of a parse error.
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return Json::object();
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

}  // namespace detail

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------
// Scenario

struct ScenarioDocument {
  bool toy = false;
  ScenarioConfig solar;
  ToyConfig toy_config;

  bool operator==(const ScenarioDocument&) const = default;
};

inline ArmModel arm_from_json(const Json& j) {
  detail::FieldReader f(j, "arm");
  std::vector<std::array<double, 4>> dh;
  std::vector<std::array<double, 2>> limits;
  std::array<double, 3> axis{0.0, 0.0, 1.0};
  f.required("dh", dh);
  f.required("limits", limits);
  f.optional("panel_axis", axis);
  f.finish();
  if (dh.size() != kNumJoints) throw ConfigError("arm.dh: expected 6 rows of [a, alpha, d, theta_offset]");
  if (limits.size() != kNumJoints) throw ConfigError("arm.limits: expected 6 [min_rad, max_rad] pairs");
  std::array<DhRow, kNumJoints> rows;
  std::array<JointLimit, kNumJoints> lims;
  for (int i = 0; i < kNumJoints; ++i) {
    rows[i] = {dh[i][0], dh[i][1], dh[i][2], dh[i][3]};
    lims[i] = {limits[i][0], limits[i][1]};
  }
  try {
    return ArmModel(rows, lims, Vec3(axis[0], axis[1], axis[2]));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("arm: ") + e.what());
  }
}

inline Json arm_to_json(const ArmModel& m) {
  Json dh = Json::array(), limits = Json::array();
  for (int i = 0; i < kNumJoints; ++i) {
    const auto& r = m.rows()[i];
    dh.push_back({r.a, r.alpha, r.d, r.theta_offset});
    limits.push_back({m.limits()[i].min_rad, m.limits()[i].max_rad});
  }
  const Vec3& a = m.panel_axis();
  return {{"dh", dh}, {"limits", limits}, {"panel_axis", {a.x(), a.y(), a.z()}}};
}

inline ScenarioDocument scenario_from_json(const Json& j) {
  detail::FieldReader f(j, "");
  ScenarioDocument doc;
  std::string mode = "solar";
  f.optional("mode", mode);
  if (mode != "solar" && mode != "toy") throw ConfigError("mode: must be \"solar\" or \"toy\"");
  doc.toy = mode == "toy";
  if (doc.toy) {
    if (f.has("toy")) {
      detail::FieldReader t(f.child("toy"), "toy");
      auto& c = doc.toy_config;
      t.optional("steps", c.steps);
      t.optional("sun_rate_rad", c.sun_rate_rad);
      t.optional("max_start_offset", c.max_start_offset);
      t.optional("energy_per_step_wh", c.energy_per_step_wh);
      t.finish();
      t.check([&] { c.validate(); });
    }
    f.finish();
    return doc;
  }

  auto& c = doc.solar;
  if (!f.has("location")) throw ConfigError("location: required field is missing");
  {
    detail::FieldReader loc(f.child("location"), "location");
    double lat = 0.0, lon = 0.0;
    loc.required("latitude_deg", lat);
    loc.required("longitude_deg", lon);
    loc.finish();
    loc.check([&] { c.location = GeoLocation(lat, lon); });
  }
  std::string date;
  f.required("date", date);
  try {
    c.date = Timestamp::parse_date(date);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("date: ") + e.what());
  }
  f.optional("step_minutes", c.step_minutes);
  f.optional("irradiance_peak", c.irradiance_peak);
  f.optional("panel_area", c.panel_area);
  if (f.has("cloud_process")) {
    detail::FieldReader cp(f.child("cloud_process"), "cloud_process");
    cp.optional("rate_per_hour", c.cloud_process.rate_per_hour);
    cp.optional("mean_duration_min", c.cloud_process.mean_duration_min);
    cp.optional("attenuation", c.cloud_process.attenuation);
    cp.finish();
    if (!(c.cloud_process.attenuation >= 0.0 && c.cloud_process.attenuation <= 1.0)) {
      throw ConfigError("cloud_process.attenuation: must be within [0, 1], got " +
                        std::to_string(c.cloud_process.attenuation));
    }
  }
  f.optional("use_tracker_observations", c.use_tracker_observations);
  if (f.has("arm")) c.arm = arm_from_json(f.child("arm"));
  if (f.has("home")) {
    std::array<double, kNumJoints> home{};
    f.optional("home", home);
    c.home = Joints(home.data());
  }
  f.finish();
  f.check([&] { c.validate(); });
  return doc;
}

inline Json scenario_to_json(const ScenarioDocument& doc) {
  if (doc.toy) {
    const auto& t = doc.toy_config;
    return {{"mode", "toy"},
            {"toy",
             {{"steps", t.steps},
              {"sun_rate_rad", t.sun_rate_rad},
              {"max_start_offset", t.max_start_offset},
              {"energy_per_step_wh", t.energy_per_step_wh}}}};
  }
  const auto& c = doc.solar;
  Json j = {{"mode", "solar"},
            {"location", {{"latitude_deg", c.location.latitude_deg()}, {"longitude_deg", c.location.longitude_deg()}}},
            {"date", c.date.iso8601().substr(0, 10)},
            {"step_minutes", c.step_minutes},
            {"irradiance_peak", c.irradiance_peak},
            {"panel_area", c.panel_area},
            {"cloud_process",
             {{"rate_per_hour", c.cloud_process.rate_per_hour},
              {"mean_duration_min", c.cloud_process.mean_duration_min},
              {"attenuation", c.cloud_process.attenuation}}},
            {"use_tracker_observations", c.use_tracker_observations},
            {"arm", arm_to_json(c.arm)}};
  if (c.home) j["home"] = std::vector<double>(c.home->data(), c.home->data() + kNumJoints);
  return j;
}

// ---------------------------------------------------------------------------
// Agent

inline AgentConfig agent_from_json(const Json& j) {
  detail::FieldReader f(j, "");
  AgentConfig c;
  f.optional("gamma", c.gamma);
  f.optional("eps_start", c.eps_start);
  f.optional("eps_end", c.eps_end);
  f.optional("decay_steps", c.decay_steps);
  f.optional("buffer_capacity", c.buffer_capacity);
  f.optional("batch_size", c.batch_size);
  f.optional("target_sync_every", c.target_sync_every);
  f.optional("learning_rate", c.learning_rate);
  f.optional("action_delta_rad", c.action_delta_rad);
  f.optional("hidden_sizes", c.hidden_sizes);
  f.optional("episodes", c.episodes);
  f.finish();
  f.check([&] { c.validate(); });
  return c;
}

inline Json agent_to_json(const AgentConfig& c) {
  return {{"gamma", c.gamma},
          {"eps_start", c.eps_start},
          {"eps_end", c.eps_end},
          {"decay_steps", c.decay_steps},
          {"buffer_capacity", c.buffer_capacity},
          {"batch_size", c.batch_size},
          {"target_sync_every", c.target_sync_every},
          {"learning_rate", c.learning_rate},
          {"action_delta_rad", c.action_delta_rad},
          {"hidden_sizes", c.hidden_sizes},
          {"episodes", c.episodes}};
}

// ---------------------------------------------------------------------------
// Tracker

struct TrackerDocument {
  LossConfig loss;
  TrackerTrainConfig train;
  SceneGenConfig scene;

  bool operator==(const TrackerDocument&) const = default;
};

inline TrackerDocument tracker_from_json(const Json& j) {
  detail::FieldReader f(j, "");
  TrackerDocument d;
  if (f.has("loss")) {
    detail::FieldReader l(f.child("loss"), "loss");
    l.optional("chi", d.loss.chi);
    l.optional("alpha", d.loss.alpha);
    l.optional("beta", d.loss.beta);
    l.optional("n_points", d.loss.n_points);
    l.optional("visibility_threshold", d.loss.visibility_threshold);
    l.finish();
  }
  if (f.has("train")) {
    detail::FieldReader t(f.child("train"), "train");
    t.optional("steps", d.train.steps);
    t.optional("batch_frames", d.train.batch_frames);
    t.optional("steps_per_epoch", d.train.steps_per_epoch);
    t.optional("learning_rate", d.train.learning_rate);
    t.optional("hidden_sizes", d.train.hidden);
    t.optional("n_refine", d.train.n_refine);
    t.optional("eval_frames", d.train.eval_frames);
    t.finish();
  }
  if (f.has("scene")) {
    detail::FieldReader s(f.child("scene"), "scene");
    s.optional("image_size", d.scene.image_size);
    s.optional("sun_radius_px", d.scene.sun_radius_px);
    s.optional("noise_sigma", d.scene.noise_sigma);
    s.optional("max_start_offset_px", d.scene.max_start_offset_px);
    s.optional("p_occluded", d.scene.p_occluded);
    s.optional("p_distractor", d.scene.p_distractor);
    s.optional("p_far_distractor", d.scene.p_far_distractor);
    s.finish();
  }
  f.finish();
  f.check([&] {
    d.loss.validate();
    d.train.validate();
    d.scene.validate();
  });
  return d;
}

inline Json tracker_to_json(const TrackerDocument& d) {
  return {{"loss",
           {{"chi", d.loss.chi},
            {"alpha", d.loss.alpha},
            {"beta", d.loss.beta},
            {"n_points", d.loss.n_points},
            {"visibility_threshold", d.loss.visibility_threshold}}},
          {"train",
           {{"steps", d.train.steps},
            {"batch_frames", d.train.batch_frames},
            {"steps_per_epoch", d.train.steps_per_epoch},
            {"learning_rate", d.train.learning_rate},
            {"hidden_sizes", d.train.hidden},
            {"n_refine", d.train.n_refine},
            {"eval_frames", d.train.eval_frames}}},
          {"scene",
           {{"image_size", d.scene.image_size},
            {"sun_radius_px", d.scene.sun_radius_px},
            {"noise_sigma", d.scene.noise_sigma},
            {"max_start_offset_px", d.scene.max_start_offset_px},
            {"p_occluded", d.scene.p_occluded},
            {"p_distractor", d.scene.p_distractor},
            {"p_far_distractor", d.scene.p_far_distractor}}}};
}

// ---------------------------------------------------------------------------
// Run (full pipeline)

struct RunConfig {
  std::string scenario;            // path
  std::string agent;               // path
  std::string tracker;             // path; empty skips tracker training
  std::string checkpoint;          // path; set means evaluate this network, no training
  std::string tracker_checkpoint;  // path; used instead of training a tracker
  std::uint64_t seed = 0;
  int eval_episodes = 10;
  std::string out = "out";

  bool operator==(const RunConfig&) const = default;
};

// Relative paths are resolved against `base_dir`.
inline RunConfig run_from_json(const Json& j, const std::filesystem::path& base_dir) {
  detail::FieldReader f(j, "");
  RunConfig c;
  f.required("scenario", c.scenario);
  f.required("agent", c.agent);
  f.optional("tracker", c.tracker);
  f.optional("checkpoint", c.checkpoint);
  f.optional("tracker_checkpoint", c.tracker_checkpoint);
  f.optional("seed", c.seed);
  f.optional("eval_episodes", c.eval_episodes);
  f.optional("out", c.out);
  f.finish();
  if (c.eval_episodes < 1) throw ConfigError("eval_episodes: must be >= 1");
  const auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base_dir / p).lexically_normal().string();
  };
  resolve(c.scenario);
  resolve(c.agent);
  resolve(c.tracker);
  resolve(c.checkpoint);
  resolve(c.tracker_checkpoint);
  for (const auto* p : {&c.scenario, &c.agent, &c.tracker, &c.checkpoint, &c.tracker_checkpoint}) {
    if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("referenced file does not exist: " + *p);
  }
  return c;
}

// ---------------------------------------------------------------------------
// File loaders

inline ScenarioDocument load_scenario(const std::string& path) {
  return scenario_from_json(detail::parse_document(read_text_file(path), path));
}

inline AgentConfig load_agent_config(const std::string& path) {
  return agent_from_json(detail::parse_document(read_text_file(path), path));
}

inline TrackerDocument load_tracker_config(const std::string& path) {
  return tracker_from_json(detail::parse_document(read_text_file(path), path));
}

inline RunConfig load_run_config(const std::string& path) {
  return run_from_json(detail::parse_document(read_text_file(path), path),
                       std::filesystem::path(path).parent_path());
}

}  // namespace suntrack
