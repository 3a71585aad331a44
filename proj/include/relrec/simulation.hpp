#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "relrec/inference.hpp"

namespace relrec {

// ---------------------------------------------------------------------------
// Window-observed NHPP simulation and the Monte Carlo evaluation protocol:
// RelRMSE of the spline BCIF estimator, simultaneous-band coverage, and the
// probability that the band accepts a fitted parametric model.
// ---------------------------------------------------------------------------

struct ScenarioSpec {
  BcifModel truth;
  int n_units = 200;
  int n_repeats = 1000;          // N
  int n_bootstrap = 5000;        // B
  Fleet exposure_pool;           // event-free histories, resampled with replacement
  Family parametric_family = Family::Gompertz;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::vector<int> candidate_b = default_candidate_b();
  enum class TRange { EventRange, FullRange } t_range = TRange::EventRange;
  int threads = 0;
};

struct RepeatRecord {
  int repeat = 0;
  bool excluded = false;
  bool covered = false;
  bool accepted = false;
  int selected_b = 0;
  std::string error;  // non-empty iff excluded
};

struct ScenarioMetrics {
  std::vector<double> grid;
  std::vector<double> rel_rmse;                 // NaN where the truth is zero
  std::vector<std::size_t> rel_rmse_excluded;   // grid indices with zero truth
  double cp = 0.0;
  double acceptance_prob = 0.0;
  int n_excluded = 0;
  std::vector<RepeatRecord> repeats;
};

namespace detail {

// Lambda0 evaluator with the spline knot sequence and workspace hoisted out
// of the call; validation happens once at construction.
class BcifFn {
 public:
  explicit BcifFn(const BcifModel& model) : model_(&model) {
    check_model(model);
    if (const auto* s = std::get_if<SplineModel>(&model)) knots_ = s->knot_sequence();
  }
  double operator()(double t) {
    if (const auto* p = std::get_if<ParametricModel>(model_)) return parametric_bcif(*p, t);
    const auto& s = std::get<SplineModel>(*model_);
    ispline_eval(s.order, knots_, t, iv_);
    double acc = 0.0;
    for (std::size_t q = 0; q < iv_.size(); ++q) acc += s.coefficients[q] * iv_[q];
    return acc;
  }

 private:
  const BcifModel* model_;
  std::vector<double> knots_;
  std::vector<double> iv_;
};

}  // namespace detail

// Draw one unit's event days: per active month a Poisson count with mean
// x_il (Lambda0(tau_l) - Lambda0(tau_{l-1})), each event day placed by
// inverting Lambda0 on the month by monotone bisection (1e-10 day tolerance).
inline std::vector<double> simulate_unit(const UnitHistory& exposure, const Calendar& cal,
                                         const BcifModel& model, std::uint64_t seed) {
  if (exposure.daily_kmiles.size() != cal.n_months())
    throw std::invalid_argument("simulate_unit: exposure length differs from calendar");
  detail::BcifFn bcif(model);
  RngStream rng(seed);
  std::vector<double> days;
  for (std::size_t l = 0; l < cal.n_months(); ++l) {
    const double x = exposure.daily_kmiles[l];
    if (!(x > 0.0)) continue;
    const double lo = cal.month_start(l), hi = cal.month_end(l);
    const double lambda_lo = bcif(lo), lambda_hi = bcif(hi);
    const double mean = x * (lambda_hi - lambda_lo);
    const long long count = rng.poisson(mean);
    for (long long k = 0; k < count; ++k) {
      const double u = rng.uniform(lambda_lo, lambda_hi);
      double a = lo, b = hi;
      while (b - a > 1e-10) {
        const double mid = 0.5 * (a + b);
        (bcif(mid) < u ? a : b) = mid;
      }
      days.push_back(b);  // stays strictly above the month's left boundary
    }
  }
  std::sort(days.begin(), days.end());
  return days;
}

// The canonical 5-basis layout: cubic I-splines on (0, 730) with interior
// knots at tau/3 and 2 tau/3.
inline SplineModel canonical_spline_truth(std::span<const double> beta) {
  SplineModel m;
  m.order = 3;
  m.tau = 730.0;
  m.interior_knots = {730.0 / 3.0, 2.0 * 730.0 / 3.0};
  m.coefficients.assign(beta.begin(), beta.end());
  check_spline(m);
  return m;
}

// Synthetic exposure pool shaped like a large test fleet: 123 units over a
// 24-month calendar, about 12.6 active months per unit in one contiguous run,
// lognormal-ish daily mileage. Globally rescaled so the Scenario-1 truth
// yields 1.8 expected events per unit on average.
inline Fleet synthetic_exposure_pool() {
  Fleet fleet;
  const std::array<double, 12> month_len = {31, 31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30};
  double day = 0.0;
  for (int rep = 0; rep < 2; ++rep)
    for (double len : month_len) {
      day += len;
      fleet.calendar.month_end_days.push_back(day);
    }

  const std::size_t n_months = fleet.calendar.n_months();
  const int n_units = 123;
  for (int i = 0; i < n_units; ++i) {
    RngStream rng(derive_seed(0x9bde7a3144cull, static_cast<std::uint64_t>(i)));
    UnitHistory u;
    u.unit_id = "pool" + std::to_string(i);
    u.daily_kmiles.assign(n_months, 0.0);
    const auto run_len = static_cast<std::size_t>(
        std::clamp<long long>(6 + rng.poisson(6.6), 1, static_cast<long long>(n_months)));
    const std::size_t start = rng.uniform_index(n_months - run_len + 1);
    double z = -6.0;  // Irwin-Hall(12) shifted: approximately standard normal
    for (int k = 0; k < 12; ++k) z += rng.uniform01();
    const double level = std::exp(0.5 * z);
    for (std::size_t l = start; l < start + run_len; ++l)
      u.daily_kmiles[l] = level * (0.7 + 0.6 * rng.uniform01());
    fleet.units.push_back(std::move(u));
  }

  // Calibrate the overall mileage scale against the Scenario-1 truth.
  const BcifModel truth = canonical_spline_truth(std::array<double, 5>{6, 16, 23, 11, 4});
  detail::BcifFn bcif(truth);
  std::vector<double> lam(n_months + 1);
  lam[0] = 0.0;
  for (std::size_t l = 0; l < n_months; ++l) lam[l + 1] = bcif(fleet.calendar.month_end(l));
  double mean_cif = 0.0;
  for (const auto& u : fleet.units)
    for (std::size_t l = 0; l < n_months; ++l)
      mean_cif += u.daily_kmiles[l] * (lam[l + 1] - lam[l]);
  mean_cif /= n_units;
  const double scale = 1.8 / mean_cif;
  for (auto& u : fleet.units)
    for (auto& x : u.daily_kmiles) x *= scale;
  return fleet;
}

// The three canonical scenario truths, with the full-scale Monte Carlo
// settings (N = 1000 repeats, B = 5000 bootstrap replicates).
inline std::array<ScenarioSpec, 3> canonical_scenarios() {
  const std::array<std::array<double, 5>, 3> coefs = {{
      {6, 16, 23, 11, 4},
      {8, 12, 28, 0, 12},
      {5, 25, 0, 30, 0},
  }};
  const Fleet pool = synthetic_exposure_pool();
  std::array<ScenarioSpec, 3> out;
  for (std::size_t s = 0; s < 3; ++s) {
    out[s].truth = canonical_spline_truth(coefs[s]);
    out[s].n_units = 200;
    out[s].n_repeats = 1000;
    out[s].n_bootstrap = 5000;
    out[s].exposure_pool = pool;
    out[s].parametric_family = Family::Gompertz;
    out[s].seed = s + 1;
  }
  return out;
}

struct RelRmseCurve {
  std::vector<double> value;                 // NaN at excluded points
  std::vector<std::size_t> excluded_points;  // indices where the truth is zero
};

// Pointwise relative root mean squared error of the estimates against the
// truth; grid points where the truth vanishes are excluded and reported.
inline RelRmseCurve rel_rmse(const std::vector<std::vector<double>>& estimates,
                             std::span<const double> truth) {
  if (estimates.empty()) throw std::invalid_argument("rel_rmse: no estimates");
  for (const auto& est : estimates)
    if (est.size() != truth.size())
      throw std::invalid_argument("rel_rmse: estimate/truth length mismatch");
  RelRmseCurve out;
  out.value.assign(truth.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (!(truth[t] > 0.0)) {
      out.excluded_points.push_back(t);
      continue;
    }
    double acc = 0.0;
    for (const auto& est : estimates) {
      const double d = est[t] - truth[t];
      acc += d * d;
    }
    out.value[t] = std::sqrt(acc / static_cast<double>(estimates.size())) / truth[t];
  }
  return out;
}

// One full Monte Carlo scenario. Each repeat resamples exposure histories,
// simulates events from the truth, fits the AIC-selected spline, bootstraps
// the SCB, and checks whether it covers the truth and whether it accepts the
// fitted parametric model. Repeats run on independent derived RNG streams and
// aggregate in index order, so the metrics are reproducible bit for bit.
inline ScenarioMetrics run_scenario(const ScenarioSpec& spec) {
  if (spec.n_units < 2) throw std::invalid_argument("run_scenario: n_units must be >= 2");
  if (spec.exposure_pool.units.empty())
    throw std::invalid_argument("run_scenario: exposure pool is empty");
  if (spec.n_repeats < 1) throw std::invalid_argument("run_scenario: n_repeats must be >= 1");
  check_model(spec.truth);

  const Calendar& cal = spec.exposure_pool.calendar;
  const double tau = cal.tau();
  const std::vector<double> grid = default_grid(tau);
  std::vector<double> truth_curve(grid.size());
  {
    detail::BcifFn bcif(spec.truth);
    for (std::size_t i = 0; i < grid.size(); ++i) truth_curve[i] = bcif(grid[i]);
  }

  const auto N = static_cast<std::size_t>(spec.n_repeats);
  std::vector<RepeatRecord> records(N);
  std::vector<std::vector<double>> point_curves(N);

  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= spec.n_repeats) return;
      RepeatRecord rec;
      rec.repeat = r;
      const std::uint64_t repeat_master =
          derive_seed(spec.seed, static_cast<std::uint64_t>(r), 0xa11ce);
      try {
        RngStream resample(derive_seed(repeat_master, 0, 1));
        Fleet fleet;
        fleet.calendar = cal;
        fleet.units.reserve(static_cast<std::size_t>(spec.n_units));
        for (int i = 0; i < spec.n_units; ++i) {
          const auto& src = spec.exposure_pool.units[resample.uniform_index(spec.exposure_pool.units.size())];
          UnitHistory u;
          u.unit_id = "sim" + std::to_string(i);
          u.daily_kmiles = src.daily_kmiles;
          u.event_days = simulate_unit(u, cal, spec.truth,
                                       derive_seed(repeat_master, static_cast<std::uint64_t>(i), 2));
          fleet.units.push_back(std::move(u));
        }

        BootstrapOptions boot_opts;
        boot_opts.threads = 1;  // repeats own the parallelism
        const BootstrapRun boot = bootstrap_with_point(
            fleet, spec.n_bootstrap, spec.candidate_b, derive_seed(repeat_master, 0, 3), boot_opts);

        double t_lo = grid.front(), t_hi = grid.back();
        if (spec.t_range == ScenarioSpec::TRange::EventRange) {
          double lo = tau, hi = 0.0;
          for (const auto& u : fleet.units)
            for (double d : u.event_days) {
              lo = std::min(lo, d);
              hi = std::max(hi, d);
            }
          t_lo = lo;
          t_hi = hi;
        }

        const Band band = calibrate_scb(boot.ensemble, spec.alpha, t_lo, t_hi);
        const std::size_t j0 = static_cast<std::size_t>(
            std::lower_bound(grid.begin(), grid.end(), band.grid.front()) - grid.begin());
        rec.covered = true;
        for (std::size_t j = 0; j < band.grid.size() && rec.covered; ++j)
          rec.covered = band.lower[j] <= truth_curve[j0 + j] && truth_curve[j0 + j] <= band.upper[j];

        const FitResult pfit = fit_parametric(fleet, spec.parametric_family);
        std::vector<double> pcurve(band.grid.size());
        {
          detail::BcifFn bcif(pfit.model);
          for (std::size_t j = 0; j < band.grid.size(); ++j) pcurve[j] = bcif(band.grid[j]);
        }
        rec.accepted = curve_within_band(band, pcurve);
        rec.selected_b = boot.point_b;
        point_curves[static_cast<std::size_t>(r)] = boot.point_curve;
      } catch (const std::exception& ex) {
        rec.excluded = true;
        rec.error = ex.what();
      }
      records[static_cast<std::size_t>(r)] = std::move(rec);
    }
  };

  int n_threads = spec.threads > 0 ? spec.threads
                                   : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::min(std::max(n_threads, 1), spec.n_repeats);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ScenarioMetrics metrics;
  metrics.grid = grid;
  metrics.repeats = std::move(records);

  std::vector<std::vector<double>> completed_curves;
  int covered = 0, accepted = 0;
  std::string first_error;
  for (std::size_t r = 0; r < N; ++r) {
    const auto& rec = metrics.repeats[r];
    if (rec.excluded) {
      ++metrics.n_excluded;
      if (first_error.empty()) first_error = rec.error;
      continue;
    }
    covered += rec.covered ? 1 : 0;
    accepted += rec.accepted ? 1 : 0;
    completed_curves.push_back(std::move(point_curves[r]));
  }
  if (metrics.n_excluded * 20 > spec.n_repeats)
    throw std::runtime_error("run_scenario: more than 5% of repeats failed (" +
                             std::to_string(metrics.n_excluded) + "/" +
                             std::to_string(spec.n_repeats) + "); first error: " + first_error);
  const auto n_done = static_cast<double>(completed_curves.size());
  metrics.cp = covered / n_done;
  metrics.acceptance_prob = accepted / n_done;
  RelRmseCurve rr = rel_rmse(completed_curves, truth_curve);
  metrics.rel_rmse = std::move(rr.value);
  metrics.rel_rmse_excluded = std::move(rr.excluded_points);
  return metrics;
}

}  // namespace relrec
