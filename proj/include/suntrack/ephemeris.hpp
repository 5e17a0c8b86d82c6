#pragma once

// Low-precision solar position (Astronomical Almanac form): mean longitude and
// anomaly give the ecliptic longitude, from which declination, right
// ascension and the local hour angle follow. Accuracy is about 0.01 degrees
// over the supported 1950-2100 window. Refraction is not modelled, so
// elevations are geometric.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <variant>

#include "suntrack/common.hpp"

namespace suntrack {

class GeoLocation {
 public:
  GeoLocation(double latitude_deg, double longitude_deg)
      : latitude_deg_(latitude_deg), longitude_deg_(longitude_deg) {
    if (!(latitude_deg >= -90.0 && latitude_deg <= 90.0)) {
      throw std::invalid_argument("latitude_deg must be within [-90, 90], got " +
                                  std::to_string(latitude_deg));
    }
    if (!(longitude_deg >= -180.0 && longitude_deg <= 180.0)) {
      throw std::invalid_argument("longitude_deg must be within [-180, 180], got " +
                                  std::to_string(longitude_deg));
    }
  }

  double latitude_deg() const { return latitude_deg_; }
  double longitude_deg() const { return longitude_deg_; }

  bool operator==(const GeoLocation&) const = default;

 private:
  double latitude_deg_;
  double longitude_deg_;
};

struct SolarAngles {
  double azimuth_deg = 0.0;    // clockwise from true north, [0, 360)
  double elevation_deg = 0.0;  // above the horizon, [-90, 90]
};

// UTC instant with one-second resolution.
class Timestamp {
 public:
  constexpr Timestamp() = default;
  constexpr explicit Timestamp(std::int64_t unix_seconds) : unix_(unix_seconds) {}

  static Timestamp from_utc(int year, unsigned month, unsigned day, int hour = 0,
                            int minute = 0, int second = 0) {
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                             std::chrono::day{day}};
    if (!ymd.ok()) throw std::invalid_argument("invalid calendar date");
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return Timestamp(static_cast<std::int64_t>(days) * 86400 + hour * 3600 + minute * 60 +
                     second);
  }

  // Parses "YYYY-MM-DD".
  static Timestamp parse_date(const std::string& text) {
    int y = 0;
    unsigned m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    if (text.size() != 10 || std::sscanf(text.c_str(), "%4d%c%2u%c%2u", &y, &dash1, &m, &dash2,
                                         &d) != 5 ||
        dash1 != '-' || dash2 != '-') {
      throw std::invalid_argument("expected date as YYYY-MM-DD, got '" + text + "'");
    }
    return from_utc(y, m, d);
  }

  constexpr std::int64_t unix_seconds() const { return unix_; }

  constexpr double julian_day() const {
    return static_cast<double>(unix_) / 86400.0 + 2440587.5;
  }

  // Midnight UTC of the calendar day containing this instant.
  Timestamp start_of_day() const {
    std::int64_t days = unix_ / 86400;
    if (unix_ % 86400 < 0) --days;
    return Timestamp(days * 86400);
  }

  Timestamp plus_seconds(double s) const {
    return Timestamp(unix_ + static_cast<std::int64_t>(std::llround(s)));
  }

  // "YYYY-MM-DDTHH:MM:SSZ"
  std::string iso8601() const {
    using namespace std::chrono;
    const Timestamp day = start_of_day();
    const year_month_day ymd{sys_days{days{day.unix_ / 86400}}};
    const std::int64_t sod = unix_ - day.unix_;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()), int(sod / 3600),
                  int(sod / 60 % 60), int(sod % 60));
    return buf;
  }

  constexpr auto operator<=>(const Timestamp&) const = default;

 private:
  std::int64_t unix_ = 0;
};

inline const Timestamp kEphemerisStart = Timestamp::from_utc(1950, 1, 1);
inline const Timestamp kEphemerisEnd = Timestamp::from_utc(2101, 1, 1);

namespace detail {

inline double wrap_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  return r >= 360.0 ? 0.0 : r;
}

struct EquatorialSun {
  double declination_rad;
  double right_ascension_deg;
  double gmst_deg;
};

inline EquatorialSun equatorial_sun(double julian_day) {
  const double n = julian_day - 2451545.0;
  const double mean_longitude = wrap_degrees(280.460 + 0.9856474 * n);
  const double mean_anomaly = wrap_degrees(357.528 + 0.9856003 * n) * kDegToRad;
  const double ecliptic_longitude =
      (mean_longitude + 1.915 * std::sin(mean_anomaly) + 0.020 * std::sin(2.0 * mean_anomaly)) *
      kDegToRad;
  const double obliquity = (23.439 - 0.0000004 * n) * kDegToRad;

  EquatorialSun sun{};
  sun.declination_rad = std::asin(std::sin(obliquity) * std::sin(ecliptic_longitude));
  sun.right_ascension_deg =
      std::atan2(std::cos(obliquity) * std::sin(ecliptic_longitude), std::cos(ecliptic_longitude)) *
      kRadToDeg;
  sun.gmst_deg = wrap_degrees(280.46061837 + 360.98564736629 * n);
  return sun;
}

inline void check_window(const Timestamp& t) {
  if (t < kEphemerisStart || t >= kEphemerisEnd) {
    throw std::out_of_range("timestamp " + t.iso8601() +
                            " outside the supported ephemeris window 1950-2100");
  }
}

}  // namespace detail

inline SolarAngles solar_direction(const Timestamp& t, const GeoLocation& loc) {
  detail::check_window(t);
  const auto sun = detail::equatorial_sun(t.julian_day());
  const double hour_angle =
      (sun.gmst_deg + loc.longitude_deg() - sun.right_ascension_deg) * kDegToRad;
  const double lat = loc.latitude_deg() * kDegToRad;
  const double dec = sun.declination_rad;

  const double sin_el =
      std::sin(lat) * std::sin(dec) + std::cos(lat) * std::cos(dec) * std::cos(hour_angle);
  const double east = -std::cos(dec) * std::sin(hour_angle);
  const double north =
      std::sin(dec) * std::cos(lat) - std::cos(dec) * std::sin(lat) * std::cos(hour_angle);

  SolarAngles out;
  out.elevation_deg = std::asin(std::clamp(sin_el, -1.0, 1.0)) * kRadToDeg;
  out.azimuth_deg = detail::wrap_degrees(std::atan2(east, north) * kRadToDeg);
  return out;
}

// East-North-Up unit vector.
inline Vec3 sun_unit_vector(const SolarAngles& a) {
  const double az = a.azimuth_deg * kDegToRad;
  const double el = a.elevation_deg * kDegToRad;
  return {std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), std::sin(el)};
}

inline SolarAngles angles_from_vector(const Vec3& v) {
  const Vec3 u = v.normalized();
  SolarAngles a;
  a.elevation_deg = std::asin(std::clamp(u.z(), -1.0, 1.0)) * kRadToDeg;
  a.azimuth_deg = detail::wrap_degrees(std::atan2(u.x(), u.y()) * kRadToDeg);
  return a;
}

// Approximate time of solar transit (local apparent noon) for the local solar
// day labelled by `date`: the transit nearest 12:00 local mean solar time.
inline Timestamp solar_transit(const Timestamp& date, const GeoLocation& loc) {
  double t = static_cast<double>(date.start_of_day().unix_seconds()) + 43200.0 -
             loc.longitude_deg() / 15.0 * 3600.0;
  for (int iter = 0; iter < 3; ++iter) {
    const auto sun = detail::equatorial_sun(t / 86400.0 + 2440587.5);
    double ha = detail::wrap_degrees(sun.gmst_deg + loc.longitude_deg() - sun.right_ascension_deg);
    if (ha > 180.0) ha -= 360.0;
    // The hour angle advances ~360.9856 deg per day.
    t -= ha / 360.98564736629 * 86400.0;
  }
  return Timestamp(static_cast<std::int64_t>(std::llround(t)));
}

struct DaylightWindow {
  Timestamp sunrise;
  Timestamp sunset;

  double length_hours() const {
    return static_cast<double>(sunset.unix_seconds() - sunrise.unix_seconds()) / 3600.0;
  }
};
struct NoDaylight {};
struct NoNight {};

using DaylightResult = std::variant<DaylightWindow, NoDaylight, NoNight>;

// Geometric daylight (elevation >= 0) around the solar transit of the local
// solar day `date`. Crossings are bracketed within transit +/- 12 h and
// bisected to one second.
inline DaylightResult daylight_window(const Timestamp& date, const GeoLocation& loc) {
  const Timestamp transit = solar_transit(date, loc);
  const auto elevation = [&](std::int64_t unix) {
    return solar_direction(Timestamp(unix), loc).elevation_deg;
  };
  const std::int64_t noon = transit.unix_seconds();
  const std::int64_t before = noon - 43200;
  const std::int64_t after = noon + 43200;

  if (elevation(noon) < 0.0) return NoDaylight{};
  const bool up_before = elevation(before) >= 0.0;
  const bool up_after = elevation(after) >= 0.0;
  if (up_before && up_after) return NoNight{};

  // Invariant: f(lo) has sign `lo_up`, f(hi) the opposite.
  const auto bisect = [&](std::int64_t lo, std::int64_t hi, bool lo_up) {
    while (hi - lo > 1) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      if ((elevation(mid) >= 0.0) == lo_up) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return lo_up ? lo : hi;
  };

  DaylightWindow w;
  w.sunrise = up_before ? Timestamp(before) : Timestamp(bisect(before, noon, false));
  w.sunset = up_after ? Timestamp(after) : Timestamp(bisect(noon, after, true));
  return w;
}

}  // namespace suntrack
