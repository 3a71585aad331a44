#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "relrec/models.hpp"

namespace relrec {

// ---------------------------------------------------------------------------
// Window-observed recurrent events with step-function exposure.
//
// A fleet shares one calendar of month boundaries tau_1 < ... < tau_{n_tau}
// (days since study start, tau_0 = 0 implicit, last entry = total follow-up
// tau). Each unit records its event days and one daily k-mile figure per
// calendar month; day t belongs to month l when tau_{l-1} < t <= tau_l.
// All types are immutable values; the operations are pure.
// ---------------------------------------------------------------------------

struct Calendar {
  std::vector<double> month_end_days;

  double tau() const { return month_end_days.back(); }
  std::size_t n_months() const { return month_end_days.size(); }
  double month_start(std::size_t l) const { return l == 0 ? 0.0 : month_end_days[l - 1]; }
  double month_end(std::size_t l) const { return month_end_days[l]; }

  // Index of the month owning day t; boundaries belong to the earlier month.
  std::size_t month_of(double t) const {
    const auto it = std::lower_bound(month_end_days.begin(), month_end_days.end(), t);
    if (it == month_end_days.end())
      throw std::domain_error("month_of: t beyond total follow-up");
    return static_cast<std::size_t>(it - month_end_days.begin());
  }
};

struct UnitHistory {
  std::string unit_id;
  std::vector<double> event_days;    // in (0, tau], non-decreasing not required
  std::vector<double> daily_kmiles;  // one entry per calendar month
};

struct Fleet {
  Calendar calendar;
  std::vector<UnitHistory> units;
};

struct FleetSummary {
  int n_vehicles = 0;
  int active_months = 0;  // unit-months with positive exposure
  double active_months_per_vehicle = 0.0;
  int n_events = 0;
  double total_kmiles = 0.0;
  double events_per_kmile = 0.0;
};

struct Violation {
  std::string unit_id;  // empty for fleet-level problems
  std::string what;
  double location = 0.0;  // offending day or month index
};

// --------------------------------- ops -------------------------------------

// x_i(t): the unit's daily k-miles in the month owning day t.
inline double exposure_at(const UnitHistory& unit, const Calendar& cal, double t) {
  if (!(t > 0.0 && t <= cal.tau()))
    throw std::domain_error("exposure_at: t must lie in (0, tau]");
  const std::size_t l = cal.month_of(t);
  if (l >= unit.daily_kmiles.size())
    throw std::domain_error("exposure_at: exposure vector shorter than calendar");
  return unit.daily_kmiles[l];
}

// Per-unit cumulative intensity: integral of lambda0(s) x_i(s) ds on (0, t],
// evaluated month by month through the step structure of x_i.
inline double cif(const UnitHistory& unit, const Calendar& cal, const BcifModel& model,
                  double t) {
  if (!(t >= 0.0 && t <= cal.tau()))
    throw std::domain_error("cif: t must lie in [0, tau]");
  check_model(model);
  if (unit.daily_kmiles.size() != cal.n_months())
    throw std::domain_error("cif: exposure vector length must match calendar");
  double acc = 0.0;
  for (std::size_t l = 0; l < cal.n_months(); ++l) {
    const double lo = cal.month_start(l);
    if (!(lo < t)) break;
    const double x = unit.daily_kmiles[l];
    if (x == 0.0) continue;
    const double hi = std::min(t, cal.month_end(l));
    acc += x * (bcif_eval(model, hi) - bcif_eval(model, lo));
  }
  return acc;
}

inline FleetSummary summarize(const Fleet& fleet) {
  FleetSummary s;
  s.n_vehicles = static_cast<int>(fleet.units.size());
  const auto& cal = fleet.calendar;
  for (const auto& u : fleet.units) {
    s.n_events += static_cast<int>(u.event_days.size());
    for (std::size_t l = 0; l < u.daily_kmiles.size() && l < cal.n_months(); ++l) {
      const double x = u.daily_kmiles[l];
      if (x > 0.0) ++s.active_months;
      s.total_kmiles += x * (cal.month_end(l) - cal.month_start(l));
    }
  }
  s.active_months_per_vehicle =
      s.n_vehicles > 0 ? static_cast<double>(s.active_months) / s.n_vehicles : 0.0;
  s.events_per_kmile = s.total_kmiles > 0.0 ? s.n_events / s.total_kmiles : 0.0;
  return s;
}

// Diagnostic pass over every invariant; never throws. Empty result iff valid.
inline std::vector<Violation> validate(const Fleet& fleet) {
  std::vector<Violation> out;
  const auto& cal = fleet.calendar;

  if (cal.month_end_days.empty()) {
    out.push_back({"", "calendar has no months", 0.0});
    return out;
  }
  double prev = 0.0;
  for (std::size_t l = 0; l < cal.n_months(); ++l) {
    const double d = cal.month_end_days[l];
    if (!std::isfinite(d) || !(d > prev)) {
      out.push_back({"", "calendar month boundaries must be strictly increasing from 0",
                     static_cast<double>(l + 1)});
      return out;  // month lookup below would be meaningless
    }
    prev = d;
  }
  if (fleet.units.empty()) out.push_back({"", "fleet has no units", 0.0});

  const double tau = cal.tau();
  for (const auto& u : fleet.units) {
    if (u.daily_kmiles.size() != cal.n_months())
      out.push_back({u.unit_id, "exposure vector length differs from calendar",
                     static_cast<double>(u.daily_kmiles.size())});
    for (std::size_t l = 0; l < u.daily_kmiles.size(); ++l) {
      const double x = u.daily_kmiles[l];
      if (!std::isfinite(x) || x < 0.0)
        out.push_back({u.unit_id, "negative or non-finite exposure", static_cast<double>(l + 1)});
    }
    for (double day : u.event_days) {
      if (!std::isfinite(day) || !(day > 0.0 && day <= tau)) {
        out.push_back({u.unit_id, "event day outside (0, tau]", day});
        continue;
      }
      const std::size_t l = cal.month_of(day);
      if (l >= u.daily_kmiles.size() || !(u.daily_kmiles[l] > 0.0))
        out.push_back({u.unit_id, "event in inactive window (month has zero exposure)", day});
    }
  }
  return out;
}

}  // namespace relrec
