#include <gtest/gtest.h>

#include <cmath>

#include "reference/ephemeris_reference.hpp"
#include "suntrack/ephemeris.hpp"
#include "suntrack/random.hpp"

using namespace suntrack;

namespace {

double separation_deg(const SolarAngles& a, const SolarAngles& b) {
  const double c = std::clamp(sun_unit_vector(a).dot(sun_unit_vector(b)), -1.0, 1.0);
  return std::acos(c) * kRadToDeg;
}

double wrap180(double lon) {
  while (lon > 180.0) lon -= 360.0;
  while (lon < -180.0) lon += 360.0;
  return lon;
}

}  // namespace

TEST(GeoLocation, RejectsOutOfRange) {
  EXPECT_THROW(GeoLocation(90.5, 0.0), std::invalid_argument);
  EXPECT_THROW(GeoLocation(-91.0, 0.0), std::invalid_argument);
  EXPECT_THROW(GeoLocation(0.0, 180.01), std::invalid_argument);
  EXPECT_THROW(GeoLocation(0.0, std::nan("")), std::invalid_argument);
  EXPECT_NO_THROW(GeoLocation(-90.0, 180.0));
}

TEST(Timestamp, JulianDayAndParsing) {
  // J2000.0 epoch is JD 2451545.0 at 2000-01-01 12:00 UTC.
  EXPECT_DOUBLE_EQ(Timestamp::from_utc(2000, 1, 1, 12).julian_day(), 2451545.0);
  EXPECT_EQ(Timestamp::parse_date("2024-01-15"), Timestamp::from_utc(2024, 1, 15));
  EXPECT_EQ(Timestamp::from_utc(2024, 1, 15, 2, 3, 4).iso8601(), "2024-01-15T02:03:04Z");
  EXPECT_THROW(Timestamp::parse_date("2024/01/15"), std::invalid_argument);
  EXPECT_THROW(Timestamp::parse_date("2024-02-30"), std::invalid_argument);
  EXPECT_LT(Timestamp(100).julian_day(), Timestamp(101).julian_day());
}

TEST(SolarDirection, EquatorAtEquinoxNoonIsNearZenith) {
  const GeoLocation equator(0.0, 0.0);
  const Timestamp noon = solar_transit(Timestamp::from_utc(2024, 3, 20), equator);
  EXPECT_NEAR(solar_direction(noon, equator).elevation_deg, 90.0, 1.0);
}

TEST(SolarDirection, PoleElevationEqualsDeclinationAtSolstice) {
  const auto a = solar_direction(Timestamp::from_utc(2024, 6, 21, 12), GeoLocation(90.0, 0.0));
  EXPECT_NEAR(a.elevation_deg, 23.44, 0.5);
}

TEST(SolarDirection, MelbourneMatchesReference) {
  const auto& ref = reference::kMelbourne;
  const auto a = solar_direction(Timestamp(ref.unix_seconds),
                                 GeoLocation(ref.latitude_deg, ref.longitude_deg));
  EXPECT_NEAR(a.azimuth_deg, ref.azimuth_deg, 0.5);
  EXPECT_NEAR(a.elevation_deg, ref.elevation_deg, 0.5);
}

TEST(SolarDirection, RandomSamplesMatchReference) {
  double worst = 0.0;
  for (const auto& ref : reference::kRandomSamples) {
    const auto a = solar_direction(Timestamp(ref.unix_seconds),
                                   GeoLocation(ref.latitude_deg, ref.longitude_deg));
    const SolarAngles expected{ref.azimuth_deg, ref.elevation_deg};
    worst = std::max(worst, separation_deg(a, expected));
    EXPECT_NEAR(a.elevation_deg, ref.elevation_deg, 0.5) << ref.unix_seconds;
  }
  EXPECT_LE(worst, 0.5);
}

TEST(SolarDirection, OutsideWindowIsRangeError) {
  const GeoLocation loc(10.0, 10.0);
  EXPECT_THROW(solar_direction(Timestamp::from_utc(1949, 12, 31, 23), loc), std::out_of_range);
  EXPECT_THROW(solar_direction(Timestamp::from_utc(2101, 1, 1), loc), std::out_of_range);
  EXPECT_NO_THROW(solar_direction(Timestamp::from_utc(1950, 1, 1), loc));
  EXPECT_NO_THROW(solar_direction(Timestamp::from_utc(2100, 12, 31, 23, 59, 59), loc));
}

TEST(SolarDirection, RandomSamplesStayInRange) {
  Rng rng(7);
  const auto lo = kEphemerisStart.unix_seconds();
  const auto hi = kEphemerisEnd.unix_seconds();
  for (int i = 0; i < 1000; ++i) {
    const Timestamp t(lo + static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(hi - lo))));
    const GeoLocation loc(rng.uniform(-90.0, 90.0), rng.uniform(-180.0, 180.0));
    const auto a = solar_direction(t, loc);
    ASSERT_GE(a.azimuth_deg, 0.0);
    ASSERT_LT(a.azimuth_deg, 360.0);
    ASSERT_GE(a.elevation_deg, -90.0);
    ASSERT_LE(a.elevation_deg, 90.0);
    ASSERT_NEAR(sun_unit_vector(a).norm(), 1.0, 1e-12);
  }
}

TEST(SolarDirection, TransitIsDailyMaximum) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto day = Timestamp::from_utc(1960 + static_cast<int>(rng.index(130)),
                                         1 + static_cast<unsigned>(rng.index(12)),
                                         1 + static_cast<unsigned>(rng.index(28)));
    const GeoLocation loc(rng.uniform(-59.9, 59.9), rng.uniform(-180.0, 180.0));
    const Timestamp noon = solar_transit(day, loc);
    const double peak = solar_direction(noon, loc).elevation_deg;
    EXPECT_GE(peak, solar_direction(noon.plus_seconds(-7200), loc).elevation_deg);
    EXPECT_GE(peak, solar_direction(noon.plus_seconds(7200), loc).elevation_deg);
  }
}

TEST(SolarDirection, AntipodalElevationFlipsSign) {
  Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    const Timestamp t(kEphemerisStart.unix_seconds() +
                      static_cast<std::int64_t>(rng.index(4'000'000'000ULL)));
    const double lat = rng.uniform(-90.0, 90.0);
    const double lon = rng.uniform(-180.0, 180.0);
    const double here = solar_direction(t, GeoLocation(lat, lon)).elevation_deg;
    const double there = solar_direction(t, GeoLocation(-lat, wrap180(lon + 180.0))).elevation_deg;
    EXPECT_NEAR(here, -there, 1.0);
  }
}

TEST(SunUnitVector, CardinalDirections) {
  const Vec3 north = sun_unit_vector({0.0, 0.0});
  EXPECT_NEAR((north - Vec3(0, 1, 0)).norm(), 0.0, 1e-15);
  for (double az : {0.0, 45.0, 123.0, 359.0}) {
    EXPECT_NEAR((sun_unit_vector({az, 90.0}) - Vec3(0, 0, 1)).norm(), 0.0, 1e-12);
  }
  const double h = std::sqrt(2.0) / 2.0;
  EXPECT_NEAR((sun_unit_vector({90.0, 45.0}) - Vec3(h, 0, h)).norm(), 0.0, 1e-15);
}

TEST(SunUnitVector, RoundTripsThroughAngles) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const SolarAngles a{rng.uniform(0.0, 360.0), rng.uniform(-89.0, 90.0)};
    const SolarAngles b = angles_from_vector(sun_unit_vector(a));
    EXPECT_NEAR(b.elevation_deg, a.elevation_deg, 1e-9);
    if (a.elevation_deg < 89.99) {
      double daz = std::abs(b.azimuth_deg - a.azimuth_deg);
      daz = std::min(daz, 360.0 - daz);
      EXPECT_NEAR(daz, 0.0, 1e-9);
    }
  }
}

TEST(DaylightWindow, PolarNightAndMidnightSun) {
  const GeoLocation pole(90.0, 0.0);
  EXPECT_TRUE(std::holds_alternative<NoDaylight>(
      daylight_window(Timestamp::from_utc(2024, 12, 21), pole)));
  EXPECT_TRUE(std::holds_alternative<NoNight>(
      daylight_window(Timestamp::from_utc(2024, 6, 21), pole)));
}

TEST(DaylightWindow, MelbourneMatchesReference) {
  const auto result = daylight_window(Timestamp::from_utc(2024, 1, 15), GeoLocation(-37.81, 144.96));
  ASSERT_TRUE(std::holds_alternative<DaylightWindow>(result));
  const auto& w = std::get<DaylightWindow>(result);
  const double ref_len = reference::kMelbourneSunsetUnix - reference::kMelbourneSunriseUnix;
  const double len = static_cast<double>(w.sunset.unix_seconds() - w.sunrise.unix_seconds());
  EXPECT_NEAR(len, ref_len, 300.0);
  EXPECT_NEAR(static_cast<double>(w.sunrise.unix_seconds()), reference::kMelbourneSunriseUnix, 300.0);
  EXPECT_NEAR(static_cast<double>(w.sunset.unix_seconds()), reference::kMelbourneSunsetUnix, 300.0);
}

TEST(DaylightWindow, BracketsNonNegativeElevation) {
  const GeoLocation loc(-37.81, 144.96);
  const auto w = std::get<DaylightWindow>(daylight_window(Timestamp::from_utc(2024, 1, 15), loc));
  EXPECT_GE(solar_direction(w.sunrise, loc).elevation_deg, 0.0);
  EXPECT_LT(solar_direction(w.sunrise.plus_seconds(-1), loc).elevation_deg, 0.0);
  EXPECT_GE(solar_direction(w.sunset, loc).elevation_deg, 0.0);
  EXPECT_LT(solar_direction(w.sunset.plus_seconds(1), loc).elevation_deg, 0.0);
}
