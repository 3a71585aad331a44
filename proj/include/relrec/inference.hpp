#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "relrec/estimation.hpp"
#include "relrec/random.hpp"

namespace relrec {

// ---------------------------------------------------------------------------
// Fractional-random-weight bootstrap for the spline BCIF, pointwise intervals
// and calibrated simultaneous confidence bands.
// ---------------------------------------------------------------------------

struct BootstrapEnsemble {
  std::vector<double> grid;                 // evaluation days, default 1..tau
  std::vector<std::vector<double>> curves;  // B rows of Lambda0* on the grid
  std::vector<std::uint64_t> seeds;         // per-replicate weight seeds
  std::vector<int> selected_b;              // per-replicate knot count
};

struct Band {
  enum class Kind { Pointwise, Simultaneous };
  Kind kind = Kind::Pointwise;
  std::vector<double> grid;
  std::vector<double> lower, upper;
  double nominal_alpha = 0.05;
  double achieved_alpha = 0.05;  // alpha_p for PCIs, calibrated alpha_c for SCBs
  double t_lower = 0.0, t_upper = 0.0;
};

// n independent Exp(1) weights, reproducible from the seed.
inline WeightVector draw_weights(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("draw_weights: n must be >= 1");
  RngStream rng(seed);
  WeightVector w(static_cast<std::size_t>(n));
  for (auto& v : w) v = rng.exponential();
  return w;
}

inline std::vector<double> default_grid(double tau) {
  std::vector<double> g;
  const auto last = static_cast<long long>(std::floor(tau));
  g.reserve(static_cast<std::size_t>(std::max(1ll, last)) + 1);
  for (long long t = 1; t <= last; ++t) g.push_back(static_cast<double>(t));
  if (g.empty() || g.back() < tau) g.push_back(tau);
  return g;
}

namespace detail {

inline long long round_half_up(double v) {
  return static_cast<long long>(std::floor(v + 0.5));
}

// Everything the replicate loop needs, built once per dataset: one spline
// design per viable knot count plus the I-spline basis on the output grid.
struct BootstrapContext {
  FleetData data;
  std::vector<double> grid;
  std::vector<int> b_values;
  std::vector<SplineDesign> designs;
  std::vector<std::vector<double>> grid_basis;  // [design][grid * nb]
  std::vector<FitResult> point_fits;            // unit-weight fit per design
  std::size_t point_idx = 0;                    // AIC winner among point_fits

  static BootstrapContext build(const Fleet& fleet, std::span<const int> candidate_b,
                                int order) {
    BootstrapContext ctx;
    ctx.data = FleetData::build(fleet);
    if (ctx.data.n_events() == 0)
      throw std::invalid_argument("bootstrap: fleet has no events");
    ctx.grid = default_grid(ctx.data.tau());

    std::vector<int> ordered(candidate_b.begin(), candidate_b.end());
    std::sort(ordered.begin(), ordered.end());
    ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

    std::ostringstream errors;
    for (int b : ordered) {
      try {
        auto knots = place_knots(ctx.data.event_day, b, ctx.data.tau(), order);
        ctx.designs.emplace_back(ctx.data, order, std::move(knots));
        ctx.b_values.push_back(b);
      } catch (const std::exception& ex) {
        errors << "b=" << b << ": " << ex.what() << "; ";
      }
    }
    if (ctx.designs.empty())
      throw std::runtime_error("bootstrap: no viable knot count: " + errors.str());

    std::vector<double> iv;
    for (const auto& dsg : ctx.designs) {
      const auto nb = static_cast<std::size_t>(dsg.n_basis());
      std::vector<double> basis(ctx.grid.size() * nb);
      for (std::size_t i = 0; i < ctx.grid.size(); ++i) {
        ispline_eval(dsg.order(), dsg.knot_sequence(), ctx.grid[i], iv);
        std::copy(iv.begin(), iv.end(), basis.begin() + static_cast<std::ptrdiff_t>(i * nb));
      }
      ctx.grid_basis.push_back(std::move(basis));
    }

    // Point fits double as warm starts for every replicate fit.
    for (std::size_t k = 0; k < ctx.designs.size(); ++k) {
      ctx.point_fits.push_back(fit_spline_design(ctx.designs[k], ctx.data, {}));
      if (ctx.point_fits[k].aic < ctx.point_fits[ctx.point_idx].aic) ctx.point_idx = k;
    }
    return ctx;
  }

  // AIC selection across the designs under the given weights.
  std::pair<std::size_t, FitResult> select_fit(std::span<const double> w) const {
    std::size_t best_idx = 0;
    FitResult best;
    bool have = false;
    for (std::size_t k = 0; k < designs.size(); ++k) {
      const auto& warm = std::get<SplineModel>(point_fits[k].model).coefficients;
      FitResult fit = fit_spline_design(designs[k], data, w, warm);
      if (!have || fit.aic < best.aic) {
        best = std::move(fit);
        best_idx = k;
        have = true;
      }
    }
    return {best_idx, std::move(best)};
  }

  std::vector<double> curve(std::size_t design_idx, std::span<const double> beta) const {
    const auto nb = static_cast<std::size_t>(designs[design_idx].n_basis());
    const auto& basis = grid_basis[design_idx];
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double* row = basis.data() + i * nb;
      double acc = 0.0;
      for (std::size_t q = 0; q < nb; ++q) acc += row[q] * beta[q];
      out[i] = acc;
    }
    return out;
  }
};

}  // namespace detail

struct BootstrapOptions {
  int threads = 0;            // 0 = hardware concurrency
  bool reselect_knots = true; // re-run AIC selection inside each replicate
  int max_retries = 10;
  int order = 3;
};

struct BootstrapRun {
  BootstrapEnsemble ensemble;
  FitResult point_fit;             // AIC-selected fit at unit weights
  int point_b = 0;
  std::vector<double> point_curve; // point fit on the ensemble grid
};

// Full bootstrap: per replicate draw Exp(1) weights, re-select the knot count
// by AIC on the re-weighted likelihood, refit, and evaluate the BCIF on the
// grid. Replicates derive their RNG streams from (seed, index, retry), so the
// result does not depend on scheduling.
inline BootstrapRun bootstrap_with_point(const Fleet& fleet, int B,
                                         std::span<const int> candidate_b,
                                         std::uint64_t seed,
                                         const BootstrapOptions& options = {}) {
  if (B < 2) throw std::invalid_argument("bootstrap: B must be >= 2");
  const auto ctx = detail::BootstrapContext::build(fleet, candidate_b, options.order);
  const int n = ctx.data.n_units;

  BootstrapRun run;
  run.point_fit = ctx.point_fits[ctx.point_idx];
  run.point_b = ctx.b_values[ctx.point_idx];
  run.point_curve =
      ctx.curve(ctx.point_idx, std::get<SplineModel>(run.point_fit.model).coefficients);

  auto& ens = run.ensemble;
  ens.grid = ctx.grid;
  ens.curves.assign(static_cast<std::size_t>(B), {});
  ens.seeds.assign(static_cast<std::size_t>(B), 0);
  ens.selected_b.assign(static_cast<std::size_t>(B), 0);

  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mutex;
  std::string err_message;

  auto worker = [&] {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= B || failed.load()) return;
      bool done = false;
      std::string last_error = "did not converge";
      for (int retry = 0; retry <= options.max_retries && !done; ++retry) {
        const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(rep),
                                                   static_cast<std::uint64_t>(retry));
        const WeightVector w = draw_weights(n, rep_seed);
        try {
          std::size_t idx;
          FitResult fit;
          if (options.reselect_knots) {
            std::tie(idx, fit) = ctx.select_fit(w);
          } else {
            idx = static_cast<std::size_t>(
                std::find(ctx.b_values.begin(), ctx.b_values.end(), run.point_b) -
                ctx.b_values.begin());
            fit = detail::fit_spline_design(ctx.designs[idx], ctx.data, w);
          }
          if (!fit.converged || !std::isfinite(fit.loglik)) {
            last_error = "replicate fit did not converge";
            continue;
          }
          const auto r = static_cast<std::size_t>(rep);
          ens.curves[r] = ctx.curve(idx, std::get<SplineModel>(fit.model).coefficients);
          ens.seeds[r] = rep_seed;
          ens.selected_b[r] = ctx.b_values[idx];
          done = true;
        } catch (const std::exception& ex) {
          last_error = ex.what();
        }
      }
      if (!done) {
        std::lock_guard<std::mutex> lock(err_mutex);
        failed.store(true);
        err_message = "bootstrap replicate " + std::to_string(rep) + " failed after " +
                      std::to_string(options.max_retries + 1) + " attempts: " + last_error;
        return;
      }
    }
  };

  int n_threads = options.threads > 0 ? options.threads
                                      : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::min(std::max(n_threads, 1), B);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) throw std::runtime_error(err_message);
  return run;
}

inline BootstrapEnsemble bootstrap_bcif(const Fleet& fleet, int B,
                                        std::span<const int> candidate_b,
                                        std::uint64_t seed,
                                        const BootstrapOptions& options = {}) {
  return bootstrap_with_point(fleet, B, candidate_b, seed, options).ensemble;
}

namespace detail {

inline void check_ensemble(const BootstrapEnsemble& ens) {
  const std::size_t B = ens.curves.size();
  if (B < 2) throw std::invalid_argument("ensemble must hold at least two curves");
  for (const auto& c : ens.curves)
    if (c.size() != ens.grid.size())
      throw std::invalid_argument("ensemble curves must match the grid length");
}

// Order statistic pair for a pointwise level: lower index round(B a/2), upper
// round(B (1 - a/2)), both 1-based and clamped to [1, B].
struct OrderPair {
  long long lo, hi;
};
inline OrderPair order_indices(int B, double alpha_p) {
  auto clampi = [&](long long v) { return std::clamp<long long>(v, 1, B); };
  return {clampi(round_half_up(B * alpha_p / 2.0)),
          clampi(round_half_up(B * (1.0 - alpha_p / 2.0)))};
}

}  // namespace detail

// Pointwise interval from the ordered bootstrap curves at each grid point.
inline Band pointwise_band(const BootstrapEnsemble& ens, double alpha_p) {
  detail::check_ensemble(ens);
  if (!(alpha_p > 0.0 && alpha_p < 1.0))
    throw std::invalid_argument("pointwise_band: alpha_p must lie in (0, 1)");
  const int B = static_cast<int>(ens.curves.size());
  if (detail::round_half_up(B * alpha_p / 2.0) < 1) {
    std::ostringstream os;
    os << "pointwise_band: alpha_p too small for B = " << B
       << "; the smallest feasible alpha_p is " << (1.0 / B);
    throw std::invalid_argument(os.str());
  }
  const auto [lo_idx, hi_idx] = detail::order_indices(B, alpha_p);

  Band band;
  band.kind = Band::Kind::Pointwise;
  band.grid = ens.grid;
  band.nominal_alpha = alpha_p;
  band.achieved_alpha = alpha_p;
  band.t_lower = ens.grid.front();
  band.t_upper = ens.grid.back();
  band.lower.resize(ens.grid.size());
  band.upper.resize(ens.grid.size());

  std::vector<double> column(static_cast<std::size_t>(B));
  for (std::size_t i = 0; i < ens.grid.size(); ++i) {
    for (int b = 0; b < B; ++b) column[static_cast<std::size_t>(b)] = ens.curves[static_cast<std::size_t>(b)][i];
    auto lo_it = column.begin() + static_cast<std::ptrdiff_t>(lo_idx - 1);
    std::nth_element(column.begin(), lo_it, column.end());
    band.lower[i] = *lo_it;
    auto hi_it = column.begin() + static_cast<std::ptrdiff_t>(hi_idx - 1);
    std::nth_element(column.begin(), hi_it, column.end());
    band.upper[i] = *hi_it;
  }
  return band;
}

// Equal-precision simultaneous band: finds the largest pointwise level (the
// narrowest order-statistic band) whose empirical simultaneous coverage over
// [t_L, t_U] still reaches 1 - alpha, searching the discrete set of order
// statistic pairs by bisection.
inline Band calibrate_scb(const BootstrapEnsemble& ens, double alpha, double t_lower,
                          double t_upper) {
  detail::check_ensemble(ens);
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("calibrate_scb: alpha must lie in (0, 1)");
  if (!(t_lower <= t_upper))
    throw std::invalid_argument("calibrate_scb: need t_lower <= t_upper");

  const std::size_t i0 = static_cast<std::size_t>(
      std::lower_bound(ens.grid.begin(), ens.grid.end(), t_lower) - ens.grid.begin());
  std::size_t i1 = static_cast<std::size_t>(
      std::upper_bound(ens.grid.begin(), ens.grid.end(), t_upper) - ens.grid.begin());
  if (i1 <= i0)
    throw std::invalid_argument("calibrate_scb: no grid points inside [t_L, t_U]");
  const std::size_t m = i1 - i0;

  const int B = static_cast<int>(ens.curves.size());
  // Sorted curve values per retained grid point.
  std::vector<std::vector<double>> sorted(m, std::vector<double>(static_cast<std::size_t>(B)));
  for (std::size_t j = 0; j < m; ++j) {
    for (int b = 0; b < B; ++b)
      sorted[j][static_cast<std::size_t>(b)] = ens.curves[static_cast<std::size_t>(b)][i0 + j];
    std::sort(sorted[j].begin(), sorted[j].end());
  }

  auto coverage = [&](long long k) {
    int inside = 0;
    for (int b = 0; b < B; ++b) {
      const auto& curve = ens.curves[static_cast<std::size_t>(b)];
      bool ok = true;
      for (std::size_t j = 0; j < m && ok; ++j) {
        const double v = curve[i0 + j];
        ok = sorted[j][static_cast<std::size_t>(k - 1)] <= v &&
             v <= sorted[j][static_cast<std::size_t>(B - k - 1)];
      }
      if (ok) ++inside;
    }
    return static_cast<double>(inside) / B;
  };

  const double target = 1.0 - alpha;
  const long long k_max = B / 2;
  if (coverage(1) < target)
    throw std::runtime_error(
        "calibrate_scb: even the widest order-statistic band misses the nominal "
        "simultaneous coverage; increase B");

  // Largest k with coverage >= target. Coverage is non-increasing in k since
  // the bands are nested; assert that along the way.
  long long lo = 1, hi = k_max;
  double cp_lo = coverage(1);
  while (lo < hi) {
    const long long mid = lo + (hi - lo + 1) / 2;
    const double cp_mid = coverage(mid);
    if (cp_mid > cp_lo + 1e-12)
      throw std::logic_error("calibrate_scb: coverage increased for a narrower band");
    if (cp_mid >= target) {
      lo = mid;
      cp_lo = cp_mid;
    } else {
      hi = mid - 1;
    }
  }
  const long long k = lo;

  Band band;
  band.kind = Band::Kind::Simultaneous;
  band.grid.assign(ens.grid.begin() + static_cast<std::ptrdiff_t>(i0),
                   ens.grid.begin() + static_cast<std::ptrdiff_t>(i1));
  band.nominal_alpha = alpha;
  band.achieved_alpha = 2.0 * static_cast<double>(k) / B;
  band.t_lower = t_lower;
  band.t_upper = t_upper;
  band.lower.resize(m);
  band.upper.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    band.lower[j] = sorted[j][static_cast<std::size_t>(k - 1)];
    band.upper[j] = sorted[j][static_cast<std::size_t>(B - k - 1)];
  }
  return band;
}

// True when the curve stays inside the band at every band grid point.
inline bool curve_within_band(const Band& band, std::span<const double> curve) {
  if (curve.size() != band.grid.size())
    throw std::invalid_argument("curve_within_band: curve/grid length mismatch");
  for (std::size_t j = 0; j < curve.size(); ++j)
    if (curve[j] < band.lower[j] || curve[j] > band.upper[j]) return false;
  return true;
}

// Adequacy check: the fitted parametric BCIF is accepted when it lies inside
// the level-alpha SCB everywhere on [t_L, t_U].
inline bool parametric_adequacy(const BootstrapEnsemble& ens, const FitResult& parametric_fit,
                                double alpha, double t_lower, double t_upper) {
  const Band band = calibrate_scb(ens, alpha, t_lower, t_upper);
  std::vector<double> curve(band.grid.size());
  for (std::size_t j = 0; j < band.grid.size(); ++j)
    curve[j] = bcif_eval(parametric_fit.model, band.grid[j]);
  return curve_within_band(band, curve);
}

// ----------------------- expected vs observed events ------------------------

struct ExpectedObservedCurve {
  std::vector<double> grid;
  std::vector<double> expected;  // sum_i CIF_i(t)
  std::vector<double> observed;  // cumulative observed event count
};

inline ExpectedObservedCurve expected_events_curve(const Fleet& fleet, const BcifModel& model,
                                                   std::span<const double> grid) {
  check_model(model);
  const FleetData d = FleetData::build(fleet);
  std::vector<double> lam(d.boundaries.size());
  for (std::size_t l = 0; l < d.boundaries.size(); ++l)
    lam[l] = bcif_eval(model, d.boundaries[l]);
  // Cumulative exposure-weighted increments over whole months.
  std::vector<double> prefix(d.boundaries.size(), 0.0);
  for (std::size_t l = 0; l + 1 < d.boundaries.size(); ++l)
    prefix[l + 1] = prefix[l] + d.month_exposure_total[l] * (lam[l + 1] - lam[l]);

  std::vector<double> events_sorted = d.event_day;
  std::sort(events_sorted.begin(), events_sorted.end());

  ExpectedObservedCurve out;
  out.grid.assign(grid.begin(), grid.end());
  out.expected.resize(grid.size());
  out.observed.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    if (!(t >= 0.0 && t <= d.tau()))
      throw std::domain_error("expected_events_curve: grid point outside [0, tau]");
    if (t == 0.0) {
      out.expected[i] = 0.0;
    } else {
      const auto it = std::lower_bound(d.boundaries.begin(), d.boundaries.end(), t);
      const std::size_t l = static_cast<std::size_t>(it - d.boundaries.begin());  // boundary index >= t
      out.expected[i] = prefix[l - 1] +
                        d.month_exposure_total[l - 1] * (bcif_eval(model, t) - lam[l - 1]);
    }
    out.observed[i] = static_cast<double>(
        std::upper_bound(events_sorted.begin(), events_sorted.end(), t) - events_sorted.begin());
  }
  return out;
}

}  // namespace relrec
