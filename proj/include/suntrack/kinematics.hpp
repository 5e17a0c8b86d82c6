#pragma once

// Serial 6R arm described by standard Denavit-Hartenberg rows, with the panel
// normal as the controlled quantity.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "suntrack/ephemeris.hpp"

namespace suntrack {

inline constexpr int kNumJoints = 6;

using Mat3 = Eigen::Matrix3d;
using Joints = Eigen::Matrix<double, kNumJoints, 1>;

struct DhRow {
  double a = 0.0;             // link length, m
  double alpha = 0.0;         // link twist, rad
  double d = 0.0;             // link offset, m
  double theta_offset = 0.0;  // joint angle offset, rad

  bool operator==(const DhRow&) const = default;
};

struct JointLimit {
  double min_rad = -kPi;
  double max_rad = kPi;

  bool operator==(const JointLimit&) const = default;
};

struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

class ArmModel {
 public:
  ArmModel(std::array<DhRow, kNumJoints> rows, std::array<JointLimit, kNumJoints> limits,
           Vec3 panel_axis)
      : rows_(rows), limits_(limits), panel_axis_(panel_axis) {
    for (int i = 0; i < kNumJoints; ++i) {
      const auto& r = rows_[i];
      if (!std::isfinite(r.a) || !std::isfinite(r.alpha) || !std::isfinite(r.d) ||
          !std::isfinite(r.theta_offset)) {
        throw std::invalid_argument("DH row " + std::to_string(i) + " has non-finite values");
      }
      if (!(limits_[i].min_rad < limits_[i].max_rad)) {
        throw std::invalid_argument("joint " + std::to_string(i) +
                                    " limits must satisfy min < max");
      }
    }
    if (!panel_axis_.allFinite() || std::abs(panel_axis_.norm() - 1.0) > 1e-12) {
      throw std::invalid_argument("panel_axis must be a unit vector");
    }
  }

  // Generic 6R stand-in; the real testbed geometry is unpublished.
  static ArmModel default_model() {
    const double h = kPi / 2.0;
    std::array<DhRow, kNumJoints> rows{{{0.0, h, 0.10, 0.0},
                                        {0.25, 0.0, 0.0, 0.0},
                                        {0.05, h, 0.0, 0.0},
                                        {0.0, -h, 0.20, 0.0},
                                        {0.0, h, 0.0, 0.0},
                                        {0.0, 0.0, 0.08, 0.0}}};
    std::array<JointLimit, kNumJoints> limits{};
    limits[1] = {-h, h};
    return ArmModel(rows, limits, Vec3::UnitZ());
  }

  const std::array<DhRow, kNumJoints>& rows() const { return rows_; }
  const std::array<JointLimit, kNumJoints>& limits() const { return limits_; }
  const Vec3& panel_axis() const { return panel_axis_; }

  Joints clamp(const Joints& q) const {
    Joints out;
    for (int i = 0; i < kNumJoints; ++i) {
      out[i] = std::clamp(q[i], limits_[i].min_rad, limits_[i].max_rad);
    }
    return out;
  }

  bool within_limits(const Joints& q) const {
    for (int i = 0; i < kNumJoints; ++i) {
      if (q[i] < limits_[i].min_rad || q[i] > limits_[i].max_rad) return false;
    }
    return true;
  }

  bool operator==(const ArmModel& o) const {
    return rows_ == o.rows_ && limits_ == o.limits_ && panel_axis_ == o.panel_axis_;
  }

 private:
  std::array<DhRow, kNumJoints> rows_;
  std::array<JointLimit, kNumJoints> limits_;
  Vec3 panel_axis_;
};

// Joint vector that has been clamped into an arm's limits.
class JointState {
 public:
  JointState(const ArmModel& model, const Joints& q) : q_(model.clamp(q)) {}

  static JointState zero(const ArmModel& model) { return {model, Joints::Zero()}; }

  const Joints& q() const { return q_; }
  double operator[](int i) const { return q_[i]; }

 private:
  Joints q_;
};

namespace detail {

inline Eigen::Matrix4d dh_transform(const DhRow& row, double q) {
  const double th = q + row.theta_offset;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
  Eigen::Matrix4d t;
  t << ct, -st * ca, st * sa, row.a * ct,  //
      st, ct * ca, -ct * sa, row.a * st,   //
      0.0, sa, ca, row.d,                  //
      0.0, 0.0, 0.0, 1.0;
  return t;
}

}  // namespace detail

inline Pose forward_kinematics(const ArmModel& m, const Joints& q) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  for (int i = 0; i < kNumJoints; ++i) t = t * detail::dh_transform(m.rows()[i], q[i]);
  Pose p;
  p.rotation = t.topLeftCorner<3, 3>();
  p.translation = t.topRightCorner<3, 1>();
  return p;
}

inline Pose forward_kinematics(const ArmModel& m, const JointState& q) {
  return forward_kinematics(m, q.q());
}

inline Vec3 panel_normal(const ArmModel& m, const Joints& q) {
  return forward_kinematics(m, q).rotation * m.panel_axis();
}

inline Vec3 panel_normal(const ArmModel& m, const JointState& q) { return panel_normal(m, q.q()); }

// Angle between two unit vectors, in [0, pi]. Same value as
// acos(clamp(n.s)), but keeps full precision near 0 and pi.
inline double alignment_error(const Vec3& n, const Vec3& s) {
  return std::atan2(n.cross(s).norm(), n.dot(s));
}

// Central-difference gradient of the alignment error with respect to q.
inline Joints numeric_jacobian(const ArmModel& m, const Joints& q, const Vec3& s,
                               double step = 1e-6) {
  Joints g;
  for (int i = 0; i < kNumJoints; ++i) {
    Joints hi = q, lo = q;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (alignment_error(panel_normal(m, hi), s) - alignment_error(panel_normal(m, lo), s)) /
           (2.0 * step);
  }
  return g;
}

inline Joints numeric_jacobian(const ArmModel& m, const JointState& q, const Vec3& s) {
  return numeric_jacobian(m, q.q(), s);
}

// d(normal)/dq for revolute joints: column i is z_{i-1} x n.
inline Eigen::Matrix<double, 3, kNumJoints> normal_jacobian(const ArmModel& m, const Joints& q) {
  Eigen::Matrix<double, 3, kNumJoints> jac;
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  std::array<Vec3, kNumJoints> axes;
  for (int i = 0; i < kNumJoints; ++i) {
    axes[i] = t.block<3, 1>(0, 2);
    t = t * detail::dh_transform(m.rows()[i], q[i]);
  }
  const Vec3 n = t.topLeftCorner<3, 3>() * m.panel_axis();
  for (int i = 0; i < kNumJoints; ++i) jac.col(i) = axes[i].cross(n);
  return jac;
}

struct AlignmentResult {
  JointState joints;
  double achieved_error_rad;
  int iterations;
  std::vector<double> error_history;  // error of each accepted iterate, starting at q0
};

namespace detail {

// One damped least-squares descent from q. Returns false when no step under
// the joint limits lowers the error.
inline bool dls_step(const ArmModel& m, const Vec3& s, Joints& q, double& err, double& lambda) {
  const Vec3 n = panel_normal(m, q);
  Eigen::Matrix<double, 3, kNumJoints> jac = normal_jacobian(m, q);
  const Vec3 residual = s - n;
  // Joints pinned at a limit and pushed outward carry no useful motion.
  const Joints descent = jac.transpose() * residual;
  for (int i = 0; i < kNumJoints; ++i) {
    const auto& lim = m.limits()[i];
    if ((q[i] <= lim.min_rad && descent[i] < 0.0) || (q[i] >= lim.max_rad && descent[i] > 0.0)) {
      jac.col(i).setZero();
    }
  }
  for (int attempt = 0; attempt < 4; ++attempt) {
    const Mat3 jjt = jac * jac.transpose() + lambda * Mat3::Identity();
    const Joints dq = jac.transpose() * jjt.ldlt().solve(residual);
    double scale = 1.0;
    for (int halving = 0; halving < 6; ++halving, scale *= 0.5) {
      const Joints candidate = m.clamp(q + scale * dq);
      const double cand_err = alignment_error(panel_normal(m, candidate), s);
      if (cand_err < err) {
        q = candidate;
        err = cand_err;
        lambda = std::max(lambda * 0.1, 1e-12);
        return true;
      }
    }
    lambda *= 100.0;
  }
  return false;
}

struct Descent {
  Joints q;
  double err;
  int iterations;
};

inline Descent dls_descend(const ArmModel& m, const Vec3& s, Joints q, double tol, int budget) {
  double err = alignment_error(panel_normal(m, q), s);
  double lambda = 1e-4;
  int it = 0;
  while (it < budget && err > tol && dls_step(m, s, q, err, lambda)) ++it;
  return {q, err, it};
}

}  // namespace detail

// Damped least squares on the residual (s - n(q)), starting from q0 so the
// solution stays close to the current configuration. Each candidate is
// clamped to the joint limits and accepted only if it lowers the alignment
// error; rejected steps are halved, then damped harder. If descent stalls
// above tol_rad (a joint limit wall or an antipodal start), short descents
// from single-joint offsets of +-pi/2 and +-pi are tried and the best one is
// taken if it improves. Returns the first iterate within tol_rad, else the
// best one. Accepted errors are strictly decreasing.
inline AlignmentResult solve_alignment(const ArmModel& m, const JointState& q0, const Vec3& s,
                                       double tol_rad, int max_iters) {
  if (!(tol_rad > 0.0)) throw std::invalid_argument("tol_rad must be positive");
  Joints q = q0.q();
  double err = alignment_error(panel_normal(m, q), s);
  double lambda = 1e-4;
  std::vector<double> history{err};
  int it = 0;
  while (it < max_iters && err > tol_rad) {
    ++it;
    if (detail::dls_step(m, s, q, err, lambda)) {
      history.push_back(err);
      continue;
    }
    detail::Descent best{q, err, 0};
    for (int i = 0; i < kNumJoints; ++i) {
      for (const double offset : {kPi / 2.0, -kPi / 2.0, kPi, -kPi}) {
        Joints start = q;
        start[i] += offset;
        const auto d = detail::dls_descend(m, s, m.clamp(start), tol_rad, 50);
        if (d.err < best.err) best = d;
      }
    }
    if (!(best.err < err)) break;  // no descent direction left under the limits
    q = best.q;
    err = best.err;
    history.push_back(err);
    lambda = 1e-4;
  }
  return {JointState(m, q), err, it, std::move(history)};
}

}  // namespace suntrack
