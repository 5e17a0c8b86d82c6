#pragma once

// Synthetic all-sky frames and a learned iterative point tracker for the sun.
//
// Each refinement iteration reads a 15x15 bilinear patch around the current
// estimate (plus the estimate's normalized image coordinates) and asks the
// network for a 2-D correction. Training combines a Chebyshev point loss on
// the final estimate with an exponentially weighted sum of the same loss over
// all refinement iterates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "suntrack/common.hpp"
#include "suntrack/neural.hpp"
#include "suntrack/random.hpp"

namespace suntrack {

struct PixelPoint {
  double row = 0.0;
  double col = 0.0;

  bool operator==(const PixelPoint&) const = default;
};

inline double chebyshev(const PixelPoint& a, const PixelPoint& b) {
  return std::max(std::abs(a.row - b.row), std::abs(a.col - b.col));
}

inline double euclidean(const PixelPoint& a, const PixelPoint& b) {
  return std::hypot(a.row - b.row, a.col - b.col);
}

struct Cloud {
  PixelPoint center;           // at step 0
  PixelPoint velocity;         // pixels per step
  double semi_major = 6.0;     // pixels
  double semi_minor = 4.0;     // pixels
  double angle_rad = 0.0;      // orientation of the major axis
  double opacity = 0.5;        // [0, 1]

  PixelPoint center_at(std::size_t t) const {
    return {center.row + velocity.row * static_cast<double>(t),
            center.col + velocity.col * static_cast<double>(t)};
  }

  bool covers(const PixelPoint& c, double row, double col) const {
    const double dr = row - c.row, dc = col - c.col;
    const double ca = std::cos(angle_rad), sa = std::sin(angle_rad);
    const double u = dc * ca + dr * sa;
    const double v = -dc * sa + dr * ca;
    return (u * u) / (semi_major * semi_major) + (v * v) / (semi_minor * semi_minor) <= 1.0;
  }
};

struct Distractor {
  PixelPoint center;
  double sigma_px = 2.0;
  double amplitude = 0.6;
};

// Intensity model constants shared by the renderer and the scene generators.
struct SkyAppearance {
  double background_top = 0.22;
  double background_bottom = 0.34;
  double sun_amplitude = 0.7;
  double sun_edge_px = 0.8;      // Gaussian fall-off width outside the core
  double halo_amplitude = 0.08;  // faint wide glow
  double halo_sigma_scale = 2.5;
};

class SkyScene {
 public:
  SkyScene(int height, int width, double sun_radius_px, std::vector<PixelPoint> sun_path,
           std::vector<Cloud> clouds, std::vector<Distractor> distractors, double noise_sigma,
           SkyAppearance appearance = {})
      : height_(height),
        width_(width),
        sun_radius_px_(sun_radius_px),
        sun_path_(std::move(sun_path)),
        clouds_(std::move(clouds)),
        distractors_(std::move(distractors)),
        noise_sigma_(noise_sigma),
        appearance_(appearance) {
    if (height_ < 1 || width_ < 1) throw std::invalid_argument("image size must be positive");
    if (!(sun_radius_px_ > 0.0)) throw std::invalid_argument("sun_radius_px must be positive");
    if (!(noise_sigma_ >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
    if (sun_path_.empty()) throw std::invalid_argument("sun_path must not be empty");
    for (const auto& p : sun_path_) {
      if (!in_bounds(p)) throw std::invalid_argument("sun_path leaves the image");
    }
    for (const auto& c : clouds_) {
      if (!(c.opacity >= 0.0 && c.opacity <= 1.0)) {
        throw std::invalid_argument("cloud opacity must be within [0, 1]");
      }
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  double sun_radius_px() const { return sun_radius_px_; }
  std::size_t length() const { return sun_path_.size(); }
  const std::vector<PixelPoint>& sun_path() const { return sun_path_; }
  const std::vector<Cloud>& clouds() const { return clouds_; }
  const std::vector<Distractor>& distractors() const { return distractors_; }
  double noise_sigma() const { return noise_sigma_; }
  const SkyAppearance& appearance() const { return appearance_; }

  bool in_bounds(const PixelPoint& p) const {
    return p.row >= 0.0 && p.row <= height_ - 1.0 && p.col >= 0.0 && p.col <= width_ - 1.0;
  }

  PixelPoint clamp(const PixelPoint& p) const {
    return {std::clamp(p.row, 0.0, height_ - 1.0), std::clamp(p.col, 0.0, width_ - 1.0)};
  }

 private:
  int height_;
  int width_;
  double sun_radius_px_;
  std::vector<PixelPoint> sun_path_;
  std::vector<Cloud> clouds_;
  std::vector<Distractor> distractors_;
  double noise_sigma_;
  SkyAppearance appearance_;
};

struct Frame {
  Eigen::MatrixXd pixels;  // H x W, intensities in [0, 1]
  PixelPoint gt_point;
  double occluded = 0.0;  // opacity-weighted covered fraction of the sun disc
  double sun_radius_px = 0.0;

  int height() const { return static_cast<int>(pixels.rows()); }
  int width() const { return static_cast<int>(pixels.cols()); }

  bool hit(const PixelPoint& p) const { return euclidean(p, gt_point) <= sun_radius_px; }
};

inline Frame render_frame(const SkyScene& scene, std::size_t t, std::uint64_t rng_seed) {
  if (t >= scene.length()) {
    throw std::out_of_range("step " + std::to_string(t) + " outside scene of length " +
                            std::to_string(scene.length()));
  }
  const auto& look = scene.appearance();
  const int h = scene.height(), w = scene.width();
  const PixelPoint sun = scene.sun_path()[t];
  const double radius = scene.sun_radius_px();
  const double halo_sigma = look.halo_sigma_scale * radius;

  std::vector<PixelPoint> cloud_centers;
  cloud_centers.reserve(scene.clouds().size());
  for (const auto& c : scene.clouds()) cloud_centers.push_back(c.center_at(t));

  const auto transmission = [&](double row, double col) {
    double tr = 1.0;
    for (std::size_t k = 0; k < scene.clouds().size(); ++k) {
      if (scene.clouds()[k].covers(cloud_centers[k], row, col)) tr *= 1.0 - scene.clouds()[k].opacity;
    }
    return tr;
  };

  Frame f;
  f.pixels.resize(h, w);
  f.gt_point = sun;
  f.sun_radius_px = radius;
  Rng rng(rng_seed);
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) {
      double v = look.background_top +
                 (look.background_bottom - look.background_top) * r / std::max(1, h - 1);
      const double d = std::hypot(r - sun.row, c - sun.col);
      const double outside = std::max(0.0, d - radius);
      v += look.sun_amplitude * std::exp(-outside * outside / (2.0 * look.sun_edge_px * look.sun_edge_px));
      v += look.halo_amplitude * std::exp(-d * d / (2.0 * halo_sigma * halo_sigma));
      for (const auto& b : scene.distractors()) {
        const double dr = r - b.center.row, dc = c - b.center.col;
        v += b.amplitude * std::exp(-(dr * dr + dc * dc) / (2.0 * b.sigma_px * b.sigma_px));
      }
      v *= transmission(r, c);
      if (scene.noise_sigma() > 0.0) v += scene.noise_sigma() * rng.normal();
      f.pixels(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }

  // Covered fraction on a quarter-pixel lattice over the disc.
  double covered = 0.0;
  int samples = 0;
  for (double dr = -radius; dr <= radius; dr += 0.25) {
    for (double dc = -radius; dc <= radius; dc += 0.25) {
      if (dr * dr + dc * dc > radius * radius) continue;
      covered += 1.0 - transmission(sun.row + dr, sun.col + dc);
      ++samples;
    }
  }
  f.occluded = samples > 0 ? covered / samples : 0.0;
  return f;
}

// ---------------------------------------------------------------------------
// Losses

// Mean Chebyshev distance between predicted and ground-truth points.
inline double objectness_loss(std::span<const PixelPoint> estimates,
                              std::span<const PixelPoint> gts) {
  if (estimates.size() != gts.size()) {
    throw std::invalid_argument("objectness_loss: estimates and ground truths differ in length");
  }
  if (estimates.empty()) throw std::invalid_argument("objectness_loss: no points");
  double sum = 0.0;
  for (std::size_t k = 0; k < estimates.size(); ++k) sum += chebyshev(estimates[k], gts[k]);
  return sum / static_cast<double>(estimates.size());
}

// Weight of iteration i (0-based) out of n under decay chi; the last is 1.
inline double refinement_weight(std::size_t i, std::size_t n, double chi) {
  return std::pow(chi, static_cast<double>(n - 1 - i));
}

inline double refinement_loss(std::span<const double> per_iter_losses, double chi) {
  if (per_iter_losses.empty()) throw std::invalid_argument("refinement_loss: no iterations");
  if (!(chi > 0.0 && chi < 1.0)) throw std::invalid_argument("refinement_loss: chi must be in (0, 1)");
  const std::size_t n = per_iter_losses.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += refinement_weight(i, n, chi) * per_iter_losses[i];
  return sum;
}

inline double combined_loss(std::span<const double> per_point_objectness,
                            std::span<const double> per_point_refinement, double alpha,
                            double beta) {
  if (per_point_objectness.size() != per_point_refinement.size()) {
    throw std::invalid_argument("combined_loss: per-point loss vectors differ in length");
  }
  if (per_point_objectness.empty()) throw std::invalid_argument("combined_loss: no points");
  double sum = 0.0;
  for (std::size_t j = 0; j < per_point_objectness.size(); ++j) {
    sum += alpha * per_point_objectness[j] + beta * per_point_refinement[j];
  }
  return sum / static_cast<double>(per_point_objectness.size());
}

struct LossConfig {
  double chi = 0.8;
  double alpha = 1.0;
  double beta = 0.5;
  int n_points = 4;
  // Frames whose sun disc is covered beyond this fraction count as occluded:
  // the refinement term skips them, the objectness term does not.
  double visibility_threshold = 0.3;

  void validate() const {
    if (!(chi > 0.0 && chi < 1.0)) throw std::invalid_argument("loss.chi must be in (0, 1)");
    if (!(alpha >= 0.0)) throw std::invalid_argument("loss.alpha must be >= 0");
    if (!(beta >= 0.0)) throw std::invalid_argument("loss.beta must be >= 0");
    if (!(alpha + beta > 0.0)) throw std::invalid_argument("loss.alpha + loss.beta must be > 0");
    if (n_points < 1) throw std::invalid_argument("loss.n_points must be >= 1");
    if (!(visibility_threshold >= 0.0 && visibility_threshold <= 1.0)) {
      throw std::invalid_argument("loss.visibility_threshold must be in [0, 1]");
    }
  }

  bool operator==(const LossConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Tracking

inline constexpr int kPatchSize = 15;
inline constexpr int kPatchHalf = kPatchSize / 2;
inline constexpr int kTrackerInputs = kPatchSize * kPatchSize + 2;

inline double sample_bilinear(const Eigen::MatrixXd& img, double row, double col) {
  const double r0 = std::floor(row), c0 = std::floor(col);
  const double fr = row - r0, fc = col - c0;
  const auto at = [&](double r, double c) {
    if (r < 0 || c < 0 || r >= img.rows() || c >= img.cols()) return 0.0;
    return img(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  };
  return (1 - fr) * ((1 - fc) * at(r0, c0) + fc * at(r0, c0 + 1)) +
         fr * ((1 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1));
}

inline Vector tracker_features(const Frame& frame, const PixelPoint& p) {
  Vector x(kTrackerInputs);
  int k = 0;
  for (int dr = -kPatchHalf; dr <= kPatchHalf; ++dr) {
    for (int dc = -kPatchHalf; dc <= kPatchHalf; ++dc) {
      x[k++] = sample_bilinear(frame.pixels, p.row + dr, p.col + dc);
    }
  }
  x[k++] = 2.0 * p.row / std::max(1, frame.height() - 1) - 1.0;
  x[k++] = 2.0 * p.col / std::max(1, frame.width() - 1) - 1.0;
  return x;
}

inline PixelPoint clamp_to(const Frame& f, const PixelPoint& p) {
  return {std::clamp(p.row, 0.0, f.height() - 1.0), std::clamp(p.col, 0.0, f.width() - 1.0)};
}

struct TrackEstimate {
  std::vector<PixelPoint> iterates;  // d^(1) .. d^(n_refine)

  const PixelPoint& final_point() const { return iterates.back(); }
};

inline Mlp tracker_network(const std::vector<int>& hidden, std::uint64_t seed) {
  std::vector<int> sizes{kTrackerInputs};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(2);
  return mlp_new(sizes, seed);
}

inline TrackEstimate track_step(const Mlp& net, const Frame& frame, const PixelPoint& prev_point,
                                int n_refine) {
  if (n_refine < 1) throw std::invalid_argument("n_refine must be >= 1");
  if (net.input_size() != kTrackerInputs || net.output_size() != 2) {
    throw std::invalid_argument("tracker network must map 227 inputs to 2 outputs");
  }
  TrackEstimate est;
  est.iterates.reserve(static_cast<std::size_t>(n_refine));
  PixelPoint p = prev_point;
  for (int i = 0; i < n_refine; ++i) {
    const Vector delta = forward(net, tracker_features(frame, p));
    p = clamp_to(frame, {p.row + delta[0], p.col + delta[1]});
    est.iterates.push_back(p);
  }
  return est;
}

// Start offsets of the tracked points relative to the previous sun estimate:
// the centre, then points spread evenly on the disc boundary.
inline std::vector<PixelPoint> point_offsets(int n_points, double radius) {
  std::vector<PixelPoint> offs{{0.0, 0.0}};
  for (int j = 1; j < n_points; ++j) {
    const double a = 2.0 * kPi * (j - 1) / std::max(1, n_points - 1) + kPi / 2.0;
    offs.push_back({-radius * std::sin(a), radius * std::cos(a)});
  }
  return offs;
}

// Tracks every point from `prev_center` + its offset and fuses the finals by
// their mean.
inline PixelPoint track_points(const Mlp& net, const Frame& frame, const PixelPoint& prev_center,
                               int n_points, int n_refine) {
  double row = 0.0, col = 0.0;
  for (const auto& off : point_offsets(n_points, frame.sun_radius_px)) {
    const auto est = track_step(net, frame,
                                clamp_to(frame, {prev_center.row + off.row, prev_center.col + off.col}),
                                n_refine);
    row += est.final_point().row;
    col += est.final_point().col;
  }
  return {row / n_points, col / n_points};
}

// ---------------------------------------------------------------------------
// Synthetic scene generation

enum class SceneKind { kClean, kOccluded, kDistractor, kMixed };

struct SceneGenConfig {
  int image_size = 96;
  double sun_radius_px = 4.0;
  double noise_sigma = 0.02;
  double max_start_offset_px = 10.0;
  // Mixture used for training frames.
  double p_occluded = 0.3;
  double p_distractor = 0.35;
  // Background clutter added to any frame with this probability.
  double p_far_distractor = 0.3;

  void validate() const {
    if (image_size < 2 * kPatchSize) throw std::invalid_argument("scene.image_size too small");
    if (!(sun_radius_px > 0.0 && sun_radius_px < image_size / 4.0)) {
      throw std::invalid_argument("scene.sun_radius_px out of range");
    }
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("scene.noise_sigma must be >= 0");
    if (!(max_start_offset_px >= 0.0)) {
      throw std::invalid_argument("scene.max_start_offset_px must be >= 0");
    }
    for (double p : {p_occluded, p_distractor, p_far_distractor}) {
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("scene probabilities must be in [0, 1]");
    }
    if (p_occluded + p_distractor > 1.0) {
      throw std::invalid_argument("scene.p_occluded + scene.p_distractor must be <= 1");
    }
  }

  bool operator==(const SceneGenConfig&) const = default;
};

struct SampledFrame {
  Frame frame;
  SceneKind kind;
};

namespace detail {

inline PixelPoint random_point_in_disc(Rng& rng, double radius) {
  for (;;) {
    const double r = rng.uniform(-radius, radius), c = rng.uniform(-radius, radius);
    if (r * r + c * c <= radius * radius) return {r, c};
  }
}

inline PixelPoint at_distance(const PixelPoint& from, double dist, double angle) {
  return {from.row - dist * std::sin(angle), from.col + dist * std::cos(angle)};
}

}  // namespace detail

// One single-step scene of the requested kind. kOccluded frames have a
// partially covered disc (occluded in (0.05, 0.5]); kDistractor frames put a
// translucent cloud over the whole disc and a blob brighter than the dimmed
// sun a few pixels away.
inline SampledFrame sample_frame(const SceneGenConfig& cfg, SceneKind kind, Rng& rng) {
  if (kind == SceneKind::kMixed) {
    const double u = rng.uniform();
    kind = u < cfg.p_occluded                      ? SceneKind::kOccluded
           : u < cfg.p_occluded + cfg.p_distractor ? SceneKind::kDistractor
                                                   : SceneKind::kClean;
  }
  const double radius = cfg.sun_radius_px;
  const double margin = radius + 2.0;
  const double n = cfg.image_size;
  const PixelPoint sun{rng.uniform(margin, n - 1 - margin), rng.uniform(margin, n - 1 - margin)};

  std::vector<Cloud> clouds;
  std::vector<Distractor> distractors;
  if (rng.bernoulli(cfg.p_far_distractor)) {
    // Clutter well away from the sun.
    for (;;) {
      const PixelPoint c{rng.uniform(2.0, n - 3.0), rng.uniform(2.0, n - 3.0)};
      if (euclidean(c, sun) > 20.0) {
        distractors.push_back({c, rng.uniform(1.2, 3.0), rng.uniform(0.3, 0.7)});
        break;
      }
    }
  }

  const auto render = [&](std::uint64_t noise_seed) {
    SkyScene scene(cfg.image_size, cfg.image_size, radius, {sun}, clouds, distractors,
                   cfg.noise_sigma);
    return render_frame(scene, 0, noise_seed);
  };

  if (kind == SceneKind::kOccluded) {
    const std::vector<Cloud> base = clouds;
    for (;;) {
      clouds = base;
      Cloud c;
      c.semi_major = rng.uniform(radius, 3.0 * radius);
      c.semi_minor = rng.uniform(0.6 * radius, c.semi_major);
      c.angle_rad = rng.uniform(0.0, kPi);
      c.opacity = rng.uniform(0.3, 0.9);
      c.center = detail::at_distance(sun, c.semi_minor + rng.uniform(-0.5, 1.0) * radius,
                                     rng.uniform(0.0, 2.0 * kPi));
      clouds.push_back(c);
      Frame f = render(rng.next_u64());
      if (f.occluded > 0.05 && f.occluded <= 0.5) return {std::move(f), kind};
    }
  }

  if (kind == SceneKind::kDistractor) {
    Cloud c;
    c.semi_major = rng.uniform(radius + 1.5, radius + 2.5);
    c.semi_minor = rng.uniform(radius + 1.0, c.semi_major);
    c.angle_rad = rng.uniform(0.0, kPi);
    c.opacity = rng.uniform(0.35, 0.6);
    const auto jitter = detail::random_point_in_disc(rng, 0.5);
    c.center = {sun.row + jitter.row, sun.col + jitter.col};
    clouds.push_back(c);
    const double sun_peak = 0.34 + 0.7;
    const double dimmed = sun_peak * (1.0 - c.opacity);
    Distractor b;
    b.sigma_px = rng.uniform(1.2, 2.0);
    b.amplitude = std::min(0.72, dimmed - 0.28 + rng.uniform(0.15, 0.35));
    b.center = detail::at_distance(sun, rng.uniform(c.semi_major + 2.5, c.semi_major + 5.0),
                                   rng.uniform(0.0, 2.0 * kPi));
    b.center = {std::clamp(b.center.row, 1.0, n - 2.0), std::clamp(b.center.col, 1.0, n - 2.0)};
    distractors.push_back(b);
    return {render(rng.next_u64()), kind};
  }

  return {render(rng.next_u64()), SceneKind::kClean};
}

// Previous-frame estimate: a uniform point within max_offset of the truth.
inline PixelPoint sample_start(const Frame& f, double max_offset, Rng& rng) {
  const auto off = detail::random_point_in_disc(rng, max_offset);
  return clamp_to(f, {f.gt_point.row + off.row, f.gt_point.col + off.col});
}

// ---------------------------------------------------------------------------
// Training

struct TrackerTrainConfig {
  int steps = 2000;
  int batch_frames = 8;
  int steps_per_epoch = 100;
  double learning_rate = 1e-3;
  std::vector<int> hidden{64, 64};
  int n_refine = 4;
  int eval_frames = 100;

  void validate() const {
    if (steps < 0) throw std::invalid_argument("train.steps must be >= 0");
    if (batch_frames < 1) throw std::invalid_argument("train.batch_frames must be >= 1");
    if (steps_per_epoch < 1) throw std::invalid_argument("train.steps_per_epoch must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be > 0");
    if (n_refine < 1) throw std::invalid_argument("train.n_refine must be >= 1");
    if (eval_frames < 0) throw std::invalid_argument("train.eval_frames must be >= 0");
    for (int h : hidden) {
      if (h < 1) throw std::invalid_argument("train.hidden sizes must be >= 1");
    }
  }

  bool operator==(const TrackerTrainConfig&) const = default;
};

struct TrackerEpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double hit_rate = 0.0;           // clean held-out frames
  double occluded_hit_rate = 0.0;  // partially occluded held-out frames
};

struct TrackerTrainResult {
  Mlp net;
  std::vector<TrackerEpochMetrics> metrics;
};

struct TrackerSample {
  Frame frame;
  std::vector<PixelPoint> starts;  // one per tracked point
};

// Combined loss of one frame's tracked points, accumulating its gradient
// (scaled by `weight`) into `grads` when given. Gradients flow along the
// additive chain of corrections but not through patch sampling.
inline double tracker_sample_loss(const Mlp& net, const TrackerSample& s, const LossConfig& loss,
                                  int n_refine, double weight, Gradients* grads,
                                  int* hits = nullptr) {
  const std::size_t points = s.starts.size();
  const auto r = static_cast<std::size_t>(n_refine);
  const double beta = s.frame.occluded > loss.visibility_threshold ? 0.0 : loss.beta;
  std::vector<double> objectness(points), refinement(points);
  std::vector<double> iter_losses(r);
  std::vector<Vector> inputs(r);
  std::vector<PixelPoint> iterates(r);
  std::vector<std::array<bool, 2>> clamped(r);

  for (std::size_t j = 0; j < points; ++j) {
    PixelPoint p = s.starts[j];
    for (std::size_t i = 0; i < r; ++i) {
      inputs[i] = tracker_features(s.frame, p);
      const Vector delta = forward(net, inputs[i]);
      const PixelPoint raw{p.row + delta[0], p.col + delta[1]};
      p = clamp_to(s.frame, raw);
      clamped[i] = {p.row != raw.row, p.col != raw.col};
      iterates[i] = p;
      iter_losses[i] = chebyshev(p, s.frame.gt_point);
    }
    objectness[j] = iter_losses.back();
    refinement[j] = refinement_loss(iter_losses, loss.chi);
    if (hits && s.frame.hit(iterates.back())) ++*hits;

    if (grads) {
      // d(loss)/d(iterate i), then summed over later iterates for each correction.
      const double scale = weight / static_cast<double>(points);
      std::vector<Eigen::Vector2d> d_iter(r, Eigen::Vector2d::Zero());
      for (std::size_t i = 0; i < r; ++i) {
        const double wi = scale * (beta * refinement_weight(i, r, loss.chi) +
                                   (i + 1 == r ? loss.alpha : 0.0));
        const double dr = iterates[i].row - s.frame.gt_point.row;
        const double dc = iterates[i].col - s.frame.gt_point.col;
        if (std::abs(dr) >= std::abs(dc)) {
          d_iter[i][0] = wi * ((dr > 0) - (dr < 0));
        } else {
          d_iter[i][1] = wi * ((dc > 0) - (dc < 0));
        }
      }
      Eigen::Vector2d carry = Eigen::Vector2d::Zero();
      for (std::size_t i = r; i-- > 0;) {
        carry += d_iter[i];
        for (int a = 0; a < 2; ++a) {
          if (clamped[i][a]) carry[a] = 0.0;
        }
        backward_accumulate(net, inputs[i], carry, *grads);
      }
    }
  }
  return combined_loss(objectness, refinement, loss.alpha, beta);
}

inline TrackerSample make_tracker_sample(const SceneGenConfig& scene, SceneKind kind, int n_points,
                                         Rng& rng) {
  TrackerSample s{sample_frame(scene, kind, rng).frame, {}};
  const PixelPoint base = sample_start(s.frame, scene.max_start_offset_px, rng);
  for (const auto& off : point_offsets(n_points, scene.sun_radius_px)) {
    s.starts.push_back(clamp_to(s.frame, {base.row + off.row, base.col + off.col}));
  }
  return s;
}

// Fraction of per-point final predictions that land inside the sun disc.
inline double tracker_hit_rate(const Mlp& net, std::span<const TrackerSample> samples,
                               int n_refine) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0, total = 0;
  for (const auto& s : samples) {
    for (const auto& start : s.starts) {
      hits += s.frame.hit(track_step(net, s.frame, start, n_refine).final_point()) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

inline std::vector<TrackerSample> tracker_eval_set(const SceneGenConfig& scene, SceneKind kind,
                                                   int n_points, int count, std::uint64_t seed) {
  std::vector<TrackerSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, "eval-frame", static_cast<std::uint64_t>(i)));
    out.push_back(make_tracker_sample(scene, kind, n_points, rng));
  }
  return out;
}

inline TrackerTrainResult train_tracker(const SceneGenConfig& scene, const LossConfig& loss,
                                        const TrackerTrainConfig& train, std::uint64_t seed) {
  scene.validate();
  loss.validate();
  train.validate();
  TrackerTrainResult result{tracker_network(train.hidden, derive_seed(seed, "tracker-init")), {}};
  Mlp& net = result.net;
  OptimState opt = OptimState::adam_for(net, train.learning_rate);

  const auto clean_eval = tracker_eval_set(scene, SceneKind::kClean, loss.n_points,
                                           train.eval_frames, derive_seed(seed, "eval-clean"));
  const auto occluded_eval = tracker_eval_set(scene, SceneKind::kOccluded, loss.n_points,
                                              train.eval_frames, derive_seed(seed, "eval-occluded"));

  double epoch_loss = 0.0;
  int epoch_batches = 0;
  Gradients grads = net.zero_gradients();
  for (int stepi = 0; stepi < train.steps; ++stepi) {
    grads.set_zero();
    double batch_loss = 0.0;
    for (int b = 0; b < train.batch_frames; ++b) {
      Rng rng(derive_seed(seed, "train-frame",
                          static_cast<std::uint64_t>(stepi) * 4096u + static_cast<std::uint64_t>(b)));
      const TrackerSample s = make_tracker_sample(scene, SceneKind::kMixed, loss.n_points, rng);
      batch_loss += tracker_sample_loss(net, s, loss, train.n_refine, 1.0 / train.batch_frames,
                                        &grads);
    }
    step(net, grads, opt);
    epoch_loss += batch_loss / train.batch_frames;
    ++epoch_batches;

    if ((stepi + 1) % train.steps_per_epoch == 0 || stepi + 1 == train.steps) {
      TrackerEpochMetrics m;
      m.epoch = static_cast<int>(result.metrics.size()) + 1;
      m.loss = epoch_loss / epoch_batches;
      m.hit_rate = tracker_hit_rate(net, clean_eval, train.n_refine);
      m.occluded_hit_rate = tracker_hit_rate(net, occluded_eval, train.n_refine);
      result.metrics.push_back(m);
      epoch_loss = 0.0;
      epoch_batches = 0;
    }
  }
  return result;
}

}  // namespace suntrack
