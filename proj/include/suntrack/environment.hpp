#pragma once

// Episodic solar-energy world over one daylight window, plus the
// static-panel and perfect-tracking yield baselines and a 1-DoF toy world.

#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "suntrack/ephemeris.hpp"
#include "suntrack/kinematics.hpp"
#include "suntrack/random.hpp"
#include "suntrack/tracker.hpp"

namespace suntrack {

inline constexpr int kNumActions = 2 * kNumJoints + 1;
inline constexpr int kStateSize = kNumJoints + 3 + 1 + kNumActions;

// Observation vector layout:
//   [0, 6)   joint angles mapped linearly from their limits onto [-1, 1]
//   [6, 9)   sun direction estimate, unit vector in the panel frame
//   9        alignment error estimate / pi
//   [10, 23) one-hot previous action
using AgentState = Eigen::Matrix<double, kStateSize, 1>;

// Action 0 is the no-op; 2j+1 / 2j+2 move joint j by +delta / -delta.
inline int action_joint(int action) { return action == 0 ? -1 : (action - 1) / 2; }
inline double action_sign(int action) { return action == 0 ? 0.0 : ((action - 1) % 2 == 0 ? 1.0 : -1.0); }

inline void check_action(int action) {
  if (action < 0 || action >= kNumActions) {
    throw std::invalid_argument("action index " + std::to_string(action) + " outside [0, 13)");
  }
}

// Clear/cloudy alternation with exponential holding times. `attenuation` is
// the transmitted fraction while cloudy.
struct CloudProcess {
  double rate_per_hour = 0.0;  // onset rate while clear; 0 disables clouds, inf keeps it cloudy
  double mean_duration_min = 20.0;
  double attenuation = 0.3;

  void validate() const {
    if (!(rate_per_hour >= 0.0)) throw std::invalid_argument("cloud_process.rate_per_hour must be >= 0");
    if (!(mean_duration_min > 0.0)) {
      throw std::invalid_argument("cloud_process.mean_duration_min must be > 0");
    }
    if (!(attenuation >= 0.0 && attenuation <= 1.0)) {
      throw std::invalid_argument("cloud_process.attenuation must be within [0, 1]");
    }
  }

  // Long-run fraction of time spent cloudy.
  double cloudy_fraction() const {
    if (rate_per_hour == 0.0) return 0.0;
    if (std::isinf(rate_per_hour)) return 1.0;
    const double x = rate_per_hour * mean_duration_min / 60.0;
    return x / (1.0 + x);
  }

  double expected_attenuation() const { return 1.0 - cloudy_fraction() * (1.0 - attenuation); }

  bool operator==(const CloudProcess&) const = default;
};

struct ScenarioConfig {
  GeoLocation location{-37.81, 144.96};
  Timestamp date = Timestamp::from_utc(2024, 1, 15);
  double step_minutes = 5.0;
  double irradiance_peak = 1000.0;  // W/m^2
  double panel_area = 0.01;         // m^2
  CloudProcess cloud_process;
  bool use_tracker_observations = false;
  ArmModel arm = ArmModel::default_model();
  std::optional<Joints> home;  // empty: aligned to the sunrise sun by solve_alignment

  void validate() const {
    if (!(step_minutes > 0.0)) throw std::invalid_argument("step_minutes must be > 0");
    if (!(irradiance_peak > 0.0)) throw std::invalid_argument("irradiance_peak must be > 0");
    if (!(panel_area > 0.0)) throw std::invalid_argument("panel_area must be > 0");
    cloud_process.validate();
    if (home && !home->allFinite()) throw std::invalid_argument("home must be finite");
  }

  double step_hours() const { return step_minutes / 60.0; }

  bool operator==(const ScenarioConfig&) const = default;
};

inline double irradiance(const Vec3& sun, const Vec3& normal, double peak, double attenuation,
                         double sun_elevation_deg) {
  if (sun_elevation_deg <= 0.0) return 0.0;
  return peak * attenuation * std::max(0.0, sun.dot(normal));
}

// Sample times of one episode: t_k = sunrise + k * step for k = 1..K, the
// last one being the first at or after sunset.
struct EpisodeClock {
  Timestamp sunrise;
  Timestamp sunset;
  double step_seconds;
  int num_steps;

  Timestamp at(int k) const { return sunrise.plus_seconds(k * step_seconds); }
};

inline EpisodeClock episode_clock(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto result = daylight_window(cfg.date, cfg.location);
  if (std::holds_alternative<NoDaylight>(result)) {
    throw std::invalid_argument("scenario has no daylight window: the sun never rises on " +
                                cfg.date.iso8601().substr(0, 10));
  }
  if (std::holds_alternative<NoNight>(result)) {
    throw std::invalid_argument("scenario has no daylight window: the sun never sets on " +
                                cfg.date.iso8601().substr(0, 10));
  }
  const auto& w = std::get<DaylightWindow>(result);
  const double step_s = cfg.step_minutes * 60.0;
  const double span = static_cast<double>(w.sunset.unix_seconds() - w.sunrise.unix_seconds());
  const int n = std::max(1, static_cast<int>(std::ceil(span / step_s)));
  return {w.sunrise, w.sunset, step_s, n};
}

// ---------------------------------------------------------------------------
// All-sky camera: azimuthal equidistant, zenith at the image centre, north up,
// east to the right, horizon on a circle of kSkyRadiusPx.

inline constexpr int kSkyImageSize = 96;
inline constexpr double kSkyCentre = 47.5;
inline constexpr double kSkyRadiusPx = 42.0;

inline PixelPoint sky_to_pixel(const SolarAngles& a) {
  const double r = kSkyRadiusPx * (90.0 - a.elevation_deg) / 90.0;
  const double az = a.azimuth_deg * kDegToRad;
  return {kSkyCentre - r * std::cos(az), kSkyCentre + r * std::sin(az)};
}

inline SolarAngles pixel_to_sky(const PixelPoint& p) {
  const double dr = kSkyCentre - p.row, dc = p.col - kSkyCentre;
  const double r = std::hypot(dr, dc);
  const double az = r == 0.0 ? 0.0 : detail::wrap_degrees(std::atan2(dc, dr) * kRadToDeg);
  return {az, 90.0 - 90.0 * r / kSkyRadiusPx};
}

struct StepInfo {
  double alignment_error_rad = 0.0;
  double irradiance_w_m2 = 0.0;
  bool occluded = false;
};

struct StepResult {
  AgentState observation;
  double reward = 0.0;  // Wh, movement penalty included
  double energy_wh = 0.0;
  bool done = false;
  StepInfo info;
};

inline constexpr double kMovePenalty = 0.001;

struct EnvState {
  int step = 0;
  Joints joints = Joints::Zero();
  SolarAngles sun{};
  double attenuation = 1.0;
  double energy_wh = 0.0;
  bool done = false;
  int prev_action = 0;
  // Cloud process: current state and absolute time of the next switch.
  bool cloudy = false;
  double next_switch_s = 0.0;
  PixelPoint sun_estimate_px{kSkyCentre, kSkyCentre};
  Rng rng{0};
};

namespace detail {

inline double normalized_angle(const JointLimit& lim, double q) {
  return std::clamp((2.0 * q - lim.min_rad - lim.max_rad) / (lim.max_rad - lim.min_rad), -1.0, 1.0);
}

inline AgentState make_observation(const ArmModel& arm, const Joints& q, const Vec3& sun_world,
                                   int prev_action) {
  AgentState s = AgentState::Zero();
  for (int i = 0; i < kNumJoints; ++i) s[i] = normalized_angle(arm.limits()[i], q[i]);
  const Pose pose = forward_kinematics(arm, q);
  const Vec3 local = (pose.rotation.transpose() * sun_world).normalized();
  s.segment<3>(kNumJoints) = local;
  s[kNumJoints + 3] = alignment_error(pose.rotation * arm.panel_axis(), sun_world) / kPi;
  s[kNumJoints + 4 + prev_action] = 1.0;
  return s;
}

inline double holding_seconds(const CloudProcess& c, bool cloudy, Rng& rng) {
  if (cloudy) return rng.exponential(c.mean_duration_min * 60.0);
  if (std::isinf(c.rate_per_hour)) return 0.0;
  return rng.exponential(3600.0 / c.rate_per_hour);
}

// Advances the clear/cloudy process to time t (seconds since sunrise).
inline void advance_clouds(const CloudProcess& c, EnvState& st, double t) {
  if (c.rate_per_hour == 0.0) {
    st.cloudy = false;
    st.attenuation = 1.0;
    return;
  }
  while (t >= st.next_switch_s) {
    st.cloudy = !st.cloudy;
    st.next_switch_s += holding_seconds(c, st.cloudy, st.rng);
  }
  st.attenuation = st.cloudy ? c.attenuation : 1.0;
}

}  // namespace detail

// Tracker pipeline used when the scenario asks for camera-based observations.
struct TrackerObserver {
  std::shared_ptr<const Mlp> net;
  int n_points = 4;
  int n_refine = 4;
  double noise_sigma = 0.02;
};

class SolarEnv {
 public:
  explicit SolarEnv(ScenarioConfig cfg, std::optional<TrackerObserver> observer = std::nullopt)
      : cfg_(std::move(cfg)), clock_(episode_clock(cfg_)), observer_(std::move(observer)) {
    if (cfg_.use_tracker_observations && !(observer_ && observer_->net)) {
      throw std::invalid_argument("use_tracker_observations needs a tracker network");
    }
    if (cfg_.home) {
      home_ = cfg_.arm.clamp(*cfg_.home);
    } else {
      const Vec3 s = sun_unit_vector(solar_direction(clock_.sunrise, cfg_.location));
      home_ = solve_alignment(cfg_.arm, JointState::zero(cfg_.arm), s, 1e-12, 500).joints.q();
    }
  }

  const ScenarioConfig& config() const { return cfg_; }
  const EpisodeClock& clock() const { return clock_; }
  const Joints& home() const { return home_; }
  int episode_length() const { return clock_.num_steps; }

  AgentState reset(EnvState& st, std::uint64_t seed) const {
    st = EnvState{};
    st.rng = Rng(seed);
    st.joints = home_;
    st.sun = solar_direction(clock_.sunrise, cfg_.location);
    const auto& c = cfg_.cloud_process;
    if (c.rate_per_hour > 0.0) {
      st.cloudy = st.rng.bernoulli(c.cloudy_fraction());
      st.next_switch_s = detail::holding_seconds(c, st.cloudy, st.rng);
      detail::advance_clouds(c, st, 0.0);
    }
    st.sun_estimate_px = sky_to_pixel(st.sun);
    return detail::make_observation(cfg_.arm, st.joints, observed_sun(st, 0), 0);
  }

  StepResult step(EnvState& st, int action) const {
    if (st.done) throw std::logic_error("step called on a finished episode");
    check_action(action);
    if (action != 0) {
      Joints q = st.joints;
      q[action_joint(action)] += action_sign(action) * delta_;
      st.joints = cfg_.arm.clamp(q);
    }
    ++st.step;
    const Timestamp t = clock_.at(st.step);
    st.sun = solar_direction(t, cfg_.location);
    detail::advance_clouds(cfg_.cloud_process, st, st.step * clock_.step_seconds);

    const Vec3 sun = sun_unit_vector(st.sun);
    const Vec3 n = panel_normal(cfg_.arm, st.joints);
    StepResult r;
    r.info.alignment_error_rad = alignment_error(n, sun);
    r.info.irradiance_w_m2 =
        irradiance(sun, n, cfg_.irradiance_peak, st.attenuation, st.sun.elevation_deg);
    r.info.occluded = st.cloudy;
    r.energy_wh = cfg_.panel_area * r.info.irradiance_w_m2 * cfg_.step_hours();
    r.reward = r.energy_wh - (action != 0 ? kMovePenalty : 0.0);
    st.energy_wh += r.energy_wh;
    st.prev_action = action;
    st.done = st.step >= clock_.num_steps;
    r.done = st.done;
    r.observation = detail::make_observation(cfg_.arm, st.joints, observed_sun(st, st.step), action);
    return r;
  }

  void set_action_delta(double delta_rad) {
    if (!(delta_rad > 0.0)) throw std::invalid_argument("action_delta_rad must be > 0");
    delta_ = delta_rad;
  }
  double action_delta() const { return delta_; }

 private:
  // Exact ephemeris direction, or the tracker's estimate while the sun is up.
  Vec3 observed_sun(EnvState& st, int step) const {
    if (!cfg_.use_tracker_observations || st.sun.elevation_deg <= 0.0) {
      st.sun_estimate_px = sky_to_pixel(st.sun);
      return sun_unit_vector(st.sun);
    }
    const PixelPoint truth = sky_to_pixel(st.sun);
    std::vector<Cloud> clouds;
    if (st.cloudy) {
      Cloud c;
      c.center = {truth.row + st.rng.uniform(-3.0, 3.0), truth.col + st.rng.uniform(-3.0, 3.0)};
      c.semi_major = st.rng.uniform(6.0, 10.0);
      c.semi_minor = st.rng.uniform(4.0, 6.0);
      c.angle_rad = st.rng.uniform(0.0, kPi);
      c.opacity = 1.0 - cfg_.cloud_process.attenuation;
      clouds.push_back(c);
    }
    const SkyScene scene(kSkyImageSize, kSkyImageSize, 4.0, {truth}, std::move(clouds), {},
                         observer_->noise_sigma);
    const Frame f = render_frame(scene, 0, derive_seed(st.rng.next_u64(), "sky-frame", step));
    st.sun_estimate_px =
        track_points(*observer_->net, f, st.sun_estimate_px, observer_->n_points, observer_->n_refine);
    const SolarAngles est = pixel_to_sky(st.sun_estimate_px);
    return sun_unit_vector({est.azimuth_deg, std::clamp(est.elevation_deg, -90.0, 90.0)});
  }

  ScenarioConfig cfg_;
  EpisodeClock clock_;
  std::optional<TrackerObserver> observer_;
  Joints home_;
  double delta_ = 0.02;
};

// ---------------------------------------------------------------------------
// Baselines

// Expected energy of a fixed panel normal, clouds folded in through their
// long-run duty cycle.
inline double static_yield(const ScenarioConfig& cfg, const Vec3& normal) {
  const EpisodeClock clock = episode_clock(cfg);
  const double att = cfg.cloud_process.expected_attenuation();
  double wh = 0.0;
  for (int k = 1; k <= clock.num_steps; ++k) {
    const SolarAngles a = solar_direction(clock.at(k), cfg.location);
    wh += cfg.panel_area * irradiance(sun_unit_vector(a), normal, cfg.irradiance_peak, att, a.elevation_deg) *
          cfg.step_hours();
  }
  return wh;
}

// Tilt is measured from the zenith, azimuth clockwise from north.
inline Vec3 normal_from_tilt_azimuth(double tilt_deg, double azimuth_deg) {
  const double t = tilt_deg * kDegToRad, a = azimuth_deg * kDegToRad;
  return {std::sin(t) * std::sin(a), std::sin(t) * std::cos(a), std::cos(t)};
}

struct StaticOptimum {
  Vec3 normal;
  double tilt_deg;
  double azimuth_deg;
  double wh;
};

inline StaticOptimum best_static_orientation(const ScenarioConfig& cfg, double grid_deg) {
  if (!(grid_deg > 0.0)) throw std::invalid_argument("grid_deg must be > 0");
  const EpisodeClock clock = episode_clock(cfg);
  std::vector<Vec3> suns;
  for (int k = 1; k <= clock.num_steps; ++k) {
    const SolarAngles a = solar_direction(clock.at(k), cfg.location);
    if (a.elevation_deg > 0.0) suns.push_back(sun_unit_vector(a));
  }
  const double scale = cfg.panel_area * cfg.irradiance_peak *
                       cfg.cloud_process.expected_attenuation() * cfg.step_hours();
  StaticOptimum best{Vec3::UnitZ(), 0.0, 0.0, -1.0};
  const int n_tilt = static_cast<int>(std::floor(90.0 / grid_deg + 1e-9));
  const int n_az = static_cast<int>(std::ceil(360.0 / grid_deg - 1e-9));
  for (int i = 0; i <= n_tilt; ++i) {
    const double tilt = i * grid_deg;
    for (int j = 0; j < (i == 0 ? 1 : n_az); ++j) {
      const double az = j * grid_deg;
      const Vec3 n = normal_from_tilt_azimuth(tilt, az);
      double sum = 0.0;
      for (const auto& s : suns) sum += std::max(0.0, s.dot(n));
      const double wh = scale * sum;
      if (wh > best.wh) best = {n, tilt, az, wh};
    }
  }
  return best;
}

// Perfect controller: re-solves alignment to 0.5 deg from the previous joint
// state at every sample time.
inline double oracle_tracking_yield(const ScenarioConfig& cfg) {
  const EpisodeClock clock = episode_clock(cfg);
  const double att = cfg.cloud_process.expected_attenuation();
  JointState q = JointState::zero(cfg.arm);
  double wh = 0.0;
  for (int k = 1; k <= clock.num_steps; ++k) {
    const SolarAngles a = solar_direction(clock.at(k), cfg.location);
    if (a.elevation_deg <= 0.0) continue;
    const Vec3 s = sun_unit_vector(a);
    q = solve_alignment(cfg.arm, q, s, 0.5 * kDegToRad, 200).joints;
    wh += cfg.panel_area * irradiance(s, panel_normal(cfg.arm, q), cfg.irradiance_peak, att, a.elevation_deg) *
          cfg.step_hours();
  }
  return wh;
}

// ---------------------------------------------------------------------------
// 1-DoF toy world: only joint 0 (azimuth) moves, the sun circles the horizon
// at a constant rate and the panel normal stays horizontal. Actions on other
// joints are accepted but do nothing except pay the movement penalty.

struct ToyConfig {
  int steps = 150;
  double sun_rate_rad = 0.06;      // sun azimuth change per step
  double max_start_offset = 1.0;   // initial |panel - sun| drawn uniformly up to this
  double energy_per_step_wh = 0.01 * 1000.0 * 5.0 / 60.0;  // panel_area * peak * step_hours

  void validate() const {
    if (steps < 1) throw std::invalid_argument("toy steps must be >= 1");
    if (!(max_start_offset >= 0.0 && max_start_offset < kPi)) {
      throw std::invalid_argument("toy max_start_offset must be within [0, pi)");
    }
    if (!(energy_per_step_wh > 0.0)) throw std::invalid_argument("toy energy_per_step_wh must be > 0");
  }

  bool operator==(const ToyConfig&) const = default;
};

struct ToyState {
  int step = 0;
  double panel = 0.0;
  double sun = 0.0;
  double energy_wh = 0.0;
  int prev_action = 0;
  bool done = false;
};

inline double wrap_pi(double a) { return std::remainder(a, 2.0 * kPi); }

class ToyEnv {
 public:
  explicit ToyEnv(ToyConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const ToyConfig& config() const { return cfg_; }
  int episode_length() const { return cfg_.steps; }

  void set_action_delta(double delta_rad) {
    if (!(delta_rad > 0.0)) throw std::invalid_argument("action_delta_rad must be > 0");
    delta_ = delta_rad;
  }
  double action_delta() const { return delta_; }

  AgentState reset(ToyState& st, std::uint64_t seed) const {
    Rng rng(seed);
    st = ToyState{};
    st.sun = rng.uniform(-kPi, kPi);
    st.panel = wrap_pi(st.sun + rng.uniform(-cfg_.max_start_offset, cfg_.max_start_offset));
    return observe(st);
  }

  StepResult step(ToyState& st, int action) const {
    if (st.done) throw std::logic_error("step called on a finished episode");
    check_action(action);
    if (action_joint(action) == 0) st.panel = wrap_pi(st.panel + action_sign(action) * delta_);
    st.sun = wrap_pi(st.sun + cfg_.sun_rate_rad);
    ++st.step;
    StepResult r;
    const double err = std::abs(wrap_pi(st.sun - st.panel));
    r.info.alignment_error_rad = err;
    r.energy_wh = cfg_.energy_per_step_wh * std::max(0.0, std::cos(err));
    r.info.irradiance_w_m2 = r.energy_wh;
    r.reward = r.energy_wh - (action != 0 ? kMovePenalty : 0.0);
    st.energy_wh += r.energy_wh;
    st.prev_action = action;
    st.done = st.step >= cfg_.steps;
    r.done = st.done;
    r.observation = observe(st);
    return r;
  }

  // Signed sun-minus-panel angle bucketed as behind / aligned / ahead.
  int bucket(const ToyState& st) const {
    const double d = wrap_pi(st.sun - st.panel);
    if (d < -0.5 * delta_) return 0;
    if (d > 0.5 * delta_) return 2;
    return 1;
  }

 private:
  AgentState observe(const ToyState& st) const {
    AgentState s = AgentState::Zero();
    s[0] = st.panel / kPi;
    // Sun in the panel frame: x along the panel's positive rotation direction.
    const double d = wrap_pi(st.sun - st.panel);
    s[kNumJoints] = std::sin(d);
    s[kNumJoints + 1] = 0.0;
    s[kNumJoints + 2] = std::cos(d);
    s[kNumJoints + 3] = std::abs(d) / kPi;
    s[kNumJoints + 4 + st.prev_action] = 1.0;
    return s;
  }

  ToyConfig cfg_;
  double delta_ = 0.02;
};

struct ToyOracle {
  std::array<int, 3> policy;  // action per bucket
  double mean_return;
};

// Exhaustive search over every stationary policy that maps the three
// bucketed observations to one of the 13 actions; returns the best mean
// return over the given episode seeds.
inline ToyOracle toy_policy_oracle(const ToyConfig& cfg, double action_delta_rad,
                                   const std::vector<std::uint64_t>& seeds) {
  ToyEnv env(cfg);
  env.set_action_delta(action_delta_rad);
  ToyOracle best{{0, 0, 0}, -std::numeric_limits<double>::infinity()};
  for (int a0 = 0; a0 < kNumActions; ++a0) {
    for (int a1 = 0; a1 < kNumActions; ++a1) {
      for (int a2 = 0; a2 < kNumActions; ++a2) {
        const std::array<int, 3> pol{a0, a1, a2};
        double total = 0.0;
        for (const auto seed : seeds) {
          ToyState st;
          env.reset(st, seed);
          while (!st.done) total += env.step(st, pol[env.bucket(st)]).reward;
        }
        const double mean = total / static_cast<double>(seeds.size());
        if (mean > best.mean_return) best = {pol, mean};
      }
    }
  }
  return best;
}

}  // namespace suntrack
