#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relrec/dataset.hpp"
#include "relrec/models.hpp"
#include "relrec/optim.hpp"

namespace relrec {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Coefficients at or below this (natural beta scale) do not count toward df.
inline constexpr double kCoefZeroThreshold = 1e-8;

// Per-unit likelihood weights; unit weights reproduce the plain likelihood.
using WeightVector = std::vector<double>;

struct FitResult {
  BcifModel model;
  double loglik = 0.0;
  int df = 0;
  double aic = 0.0;
  bool converged = false;
  int n_function_evals = 0;
  std::vector<double> init;  // starting point on the natural parameter scale
};

inline double aic(double loglik, int df) {
  if (df < 0) throw std::invalid_argument("aic: df must be >= 0");
  return -2.0 * loglik + 2.0 * df;
}

// ---------------------------------------------------------------------------
// Pooled fleet arrays. Every likelihood evaluation walks events and month
// exposures; pooling them once per fleet keeps the optimizer loops tight.
// ---------------------------------------------------------------------------
struct FleetData {
  std::vector<double> boundaries;           // tau_0 = 0, tau_1, ..., tau_{n_tau}
  std::vector<double> event_day;            // pooled event days
  std::vector<int> event_unit;              // unit index per pooled event
  std::vector<double> event_log_x;          // log exposure at each event
  std::vector<std::vector<double>> unit_x;  // [unit][month] daily k-miles
  std::vector<double> month_exposure_total; // sum_i x_il per month
  double total_kmiles = 0.0;
  int n_units = 0;

  int n_events() const { return static_cast<int>(event_day.size()); }
  double tau() const { return boundaries.back(); }
  std::size_t n_months() const { return boundaries.size() - 1; }

  static FleetData build(const Fleet& fleet) {
    FleetData d;
    const auto& cal = fleet.calendar;
    if (cal.month_end_days.empty())
      throw std::invalid_argument("fleet calendar has no months");
    d.boundaries.reserve(cal.n_months() + 1);
    d.boundaries.push_back(0.0);
    d.boundaries.insert(d.boundaries.end(), cal.month_end_days.begin(), cal.month_end_days.end());
    d.n_units = static_cast<int>(fleet.units.size());
    d.month_exposure_total.assign(cal.n_months(), 0.0);
    d.unit_x.reserve(fleet.units.size());
    for (std::size_t i = 0; i < fleet.units.size(); ++i) {
      const auto& u = fleet.units[i];
      if (u.daily_kmiles.size() != cal.n_months())
        throw std::invalid_argument("unit '" + u.unit_id + "': exposure length differs from calendar");
      d.unit_x.push_back(u.daily_kmiles);
      for (std::size_t l = 0; l < cal.n_months(); ++l) {
        d.month_exposure_total[l] += u.daily_kmiles[l];
        d.total_kmiles += u.daily_kmiles[l] * (cal.month_end(l) - cal.month_start(l));
      }
      for (double day : u.event_days) {
        d.event_day.push_back(day);
        d.event_unit.push_back(static_cast<int>(i));
        const double x = (day > 0.0 && day <= cal.tau())
                             ? u.daily_kmiles[cal.month_of(day)]
                             : 0.0;
        d.event_log_x.push_back(x > 0.0 ? std::log(x) : kNegInf);
      }
    }
    return d;
  }
};

namespace detail {

// Exposure part of the log-likelihood: sum_i w_i sum_l x_il dLambda_l,
// with Lambda already evaluated at the month boundaries. Accumulated in long
// double: the simplex search compares nearby objective values and plain
// double partial sums would put its noise floor above the 1e-8 contracts.
inline double exposure_term(const FleetData& d, std::span<const double> lambda_at,
                            std::span<const double> w) {
  long double acc = 0.0L;
  for (std::size_t l = 0; l < d.n_months(); ++l) {
    long double sl = 0.0L;
    for (int i = 0; i < d.n_units; ++i)
      sl += static_cast<long double>(w.empty() ? 1.0 : w[static_cast<std::size_t>(i)]) *
            d.unit_x[static_cast<std::size_t>(i)][l];
    acc += sl * (lambda_at[l + 1] - lambda_at[l]);
  }
  return static_cast<double>(acc);
}

inline double parametric_loglik(const FleetData& d, const ParametricModel& m,
                                std::span<const double> w) {
  std::vector<double> lam(d.boundaries.size());
  for (std::size_t l = 0; l < d.boundaries.size(); ++l)
    lam[l] = parametric_bcif(m, d.boundaries[l]);
  long double ll = -static_cast<long double>(exposure_term(d, lam, w));
  for (int e = 0; e < d.n_events(); ++e) {
    const double intensity = parametric_bif(m, d.event_day[static_cast<std::size_t>(e)]);
    if (!(intensity > 0.0)) return kNegInf;
    const double we = w.empty() ? 1.0 : w[static_cast<std::size_t>(d.event_unit[static_cast<std::size_t>(e)])];
    ll += static_cast<long double>(we) *
          (d.event_log_x[static_cast<std::size_t>(e)] + std::log(intensity));
    if (std::isinf(static_cast<double>(ll))) return kNegInf;
  }
  return static_cast<double>(ll);
}

// ------------------------- parameter transforms ----------------------------
// The simplex search runs on an unconstrained scale: log for positive
// parameters, logit for (0, 1) parameters, clamped so plateaus stay bounded.

inline double clamp_z(double z) { return std::clamp(z, -30.0, 30.0); }
inline double from_log(double z) { return std::exp(clamp_z(z)); }
inline double to_log(double v) { return std::log(std::max(v, 1e-13)); }
inline double from_logit(double z) { return 1.0 / (1.0 + std::exp(-clamp_z(z))); }
inline double to_logit(double p) {
  const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(q / (1.0 - q));
}

inline std::vector<double> theta_from_z(Family family, std::span<const double> z,
                                        bool pin_theta1) {
  switch (family) {
    case Family::MusaOkumoto:
      if (pin_theta1) return {0.0, from_log(z[0])};
      return {from_log(z[0]), from_log(z[1])};
    case Family::Gompertz:
      return {from_log(z[0]), from_logit(z[1]), from_logit(z[2])};
    case Family::Weibull:
      return {from_log(z[0]), from_log(z[1]), from_log(z[2])};
  }
  return {};
}

inline std::vector<double> z_from_theta(Family family, std::span<const double> theta,
                                        bool pin_theta1) {
  switch (family) {
    case Family::MusaOkumoto:
      if (pin_theta1) return {to_log(theta[1])};
      return {to_log(theta[0]), to_log(theta[1])};
    case Family::Gompertz:
      return {to_log(theta[0]), to_logit(theta[1]), to_logit(theta[2])};
    case Family::Weibull:
      return {to_log(theta[0]), to_log(theta[1]), to_log(theta[2])};
  }
  return {};
}

// Deterministic scale-aware start mapped from the homogeneous moment fit
// rate = events / k-miles.
inline std::vector<double> default_init(Family family, double rate, double tau) {
  switch (family) {
    case Family::MusaOkumoto:
      return {1.0 / (rate * tau), rate};
    case Family::Gompertz: {
      const double th2 = 0.995, th3 = 0.2;
      const double unit_scale = gompertz_bcif(1.0, th2, th3, tau);
      return {rate * tau / unit_scale, th2, th3};
    }
    case Family::Weibull:
      return {2.0 * rate * tau, 0.5 / tau, 1.0};
  }
  return {};
}

}  // namespace detail

// --------------------------- public likelihood ------------------------------

// Re-weighted log-likelihood: each unit's event and exposure terms are
// multiplied by w_i. An empty weight vector means unit weights and shares the
// exact code path, so the identity holds to the last bit. Events sitting where
// the intensity (or exposure) vanishes yield -infinity rather than throwing.
inline double weighted_log_likelihood(const Fleet& fleet, const BcifModel& model,
                                      std::span<const double> w) {
  check_model(model);
  if (!w.empty() && w.size() != fleet.units.size())
    throw std::invalid_argument("weight vector length must equal the number of units");
  for (double wi : w)
    if (!std::isfinite(wi) || wi < 0.0)
      throw std::invalid_argument("weights must be finite and >= 0");

  const FleetData d = FleetData::build(fleet);
  if (const auto* p = std::get_if<ParametricModel>(&model))
    return detail::parametric_loglik(d, *p, w);

  const auto& s = std::get<SplineModel>(model);
  const auto ks = s.knot_sequence();
  std::vector<double> iv, mv, scratch;
  std::vector<double> lam(d.boundaries.size());
  for (std::size_t l = 0; l < d.boundaries.size(); ++l) {
    detail::ispline_eval(s.order, ks, d.boundaries[l], iv);
    double acc = 0.0;
    for (std::size_t q = 0; q < iv.size(); ++q) acc += s.coefficients[q] * iv[q];
    lam[l] = acc;
  }
  double ll = -detail::exposure_term(d, lam, w);
  for (int e = 0; e < d.n_events(); ++e) {
    detail::mspline_eval(s.order, ks, d.event_day[static_cast<std::size_t>(e)], mv, scratch);
    double intensity = 0.0;
    for (std::size_t q = 0; q < mv.size(); ++q) intensity += s.coefficients[q] * mv[q];
    if (!(intensity > 0.0)) return kNegInf;
    const double we = w.empty() ? 1.0 : w[static_cast<std::size_t>(d.event_unit[static_cast<std::size_t>(e)])];
    ll += we * (d.event_log_x[static_cast<std::size_t>(e)] + std::log(intensity));
    if (ll == kNegInf) return kNegInf;
  }
  return ll;
}

inline double log_likelihood(const Fleet& fleet, const BcifModel& model) {
  return weighted_log_likelihood(fleet, model, {});
}

// ---------------------------------------------------------------------------
// Spline likelihood design: M-spline rows at the pooled events and
// exposure-integrated I-spline differences per unit. The design depends only
// on the data and the knot sequence, so one instance serves the point fit and
// every bootstrap replicate; re-weighting just changes two inner products.
// ---------------------------------------------------------------------------
class SplineDesign {
 public:
  SplineDesign(const FleetData& d, int order, std::vector<double> knots)
      : order_(order), knots_(std::move(knots)) {
    detail::check_knot_sequence(order_, knots_);
    nb_ = static_cast<int>(knots_.size()) - order_;
    n_units_ = d.n_units;
    event_log_x_ = d.event_log_x;
    event_unit_ = d.event_unit;

    const auto nbs = static_cast<std::size_t>(nb_);
    std::vector<double> mv, scratch, iv_prev, iv;
    event_basis_.assign(d.event_day.size() * nbs, 0.0);
    for (std::size_t e = 0; e < d.event_day.size(); ++e) {
      detail::mspline_eval(order_, knots_, d.event_day[e], mv, scratch);
      std::copy(mv.begin(), mv.end(), event_basis_.begin() + static_cast<std::ptrdiff_t>(e * nbs));
    }

    // I-spline increments per month, then fold in each unit's exposure.
    const std::size_t n_months = d.n_months();
    std::vector<double> incr(n_months * nbs);
    detail::ispline_eval(order_, knots_, d.boundaries[0], iv_prev);
    for (std::size_t l = 0; l < n_months; ++l) {
      detail::ispline_eval(order_, knots_, d.boundaries[l + 1], iv);
      for (std::size_t q = 0; q < nbs; ++q) incr[l * nbs + q] = iv[q] - iv_prev[q];
      iv_prev = iv;
    }
    unit_exposure_.assign(static_cast<std::size_t>(n_units_) * nbs, 0.0);
    for (int i = 0; i < n_units_; ++i) {
      const auto& x = d.unit_x[static_cast<std::size_t>(i)];
      double* row = unit_exposure_.data() + static_cast<std::size_t>(i) * nbs;
      for (std::size_t l = 0; l < n_months; ++l) {
        if (x[l] == 0.0) continue;
        const double* inc = incr.data() + l * nbs;
        for (std::size_t q = 0; q < nbs; ++q) row[q] += x[l] * inc[q];
      }
    }

    // Columns outside all data support carry no information; their
    // coefficients are pinned to zero for a minimal-df solution.
    dead_.assign(nbs, 1);
    for (std::size_t q = 0; q < nbs; ++q) {
      for (std::size_t e = 0; e < d.event_day.size() && dead_[q]; ++e)
        if (event_basis_[e * nbs + q] != 0.0) dead_[q] = 0;
      for (int i = 0; i < n_units_ && dead_[q]; ++i)
        if (unit_exposure_[static_cast<std::size_t>(i) * nbs + q] != 0.0) dead_[q] = 0;
    }
  }

  int n_basis() const { return nb_; }
  int order() const { return order_; }
  const std::vector<double>& knot_sequence() const { return knots_; }
  const std::vector<char>& dead_columns() const { return dead_; }
  double tau() const { return knots_.back(); }

  std::vector<double> interior_knots() const {
    return {knots_.begin() + order_, knots_.end() - order_};
  }

  // A^T w: exposure-weighted basis integrals folded over units.
  std::vector<double> exposure_coeffs(std::span<const double> w) const {
    const auto nbs = static_cast<std::size_t>(nb_);
    std::vector<double> aw(nbs, 0.0);
    for (int i = 0; i < n_units_; ++i) {
      const double wi = w.empty() ? 1.0 : w[static_cast<std::size_t>(i)];
      if (wi == 0.0) continue;
      const double* row = unit_exposure_.data() + static_cast<std::size_t>(i) * nbs;
      for (std::size_t q = 0; q < nbs; ++q) aw[q] += wi * row[q];
    }
    return aw;
  }

  std::vector<double> event_weights(std::span<const double> w) const {
    std::vector<double> we(event_unit_.size(), 1.0);
    if (!w.empty())
      for (std::size_t e = 0; e < we.size(); ++e)
        we[e] = w[static_cast<std::size_t>(event_unit_[e])];
    return we;
  }

  // Weighted log-likelihood at beta; grad (if non-null) receives d loglik /
  // d beta. aw and we come from the two helpers above.
  double loglik_with(std::span<const double> beta, std::span<const double> aw,
                     std::span<const double> we, double* grad) const {
    const auto nbs = static_cast<std::size_t>(nb_);
    double ll = 0.0;
    if (grad)
      for (std::size_t q = 0; q < nbs; ++q) grad[q] = -aw[q];
    for (std::size_t q = 0; q < nbs; ++q) ll -= aw[q] * beta[q];
    for (std::size_t e = 0; e < event_unit_.size(); ++e) {
      const double* row = event_basis_.data() + e * nbs;
      double dot = 0.0;
      for (std::size_t q = 0; q < nbs; ++q) dot += row[q] * beta[q];
      if (!(dot > 0.0)) return kNegInf;
      ll += we[e] * (event_log_x_[e] + std::log(dot));
      if (grad) {
        const double scale = we[e] / dot;
        for (std::size_t q = 0; q < nbs; ++q) grad[q] += scale * row[q];
      }
    }
    return ll;
  }

  double loglik(std::span<const double> beta, std::span<const double> w,
                double* grad = nullptr) const {
    const auto aw = exposure_coeffs(w);
    const auto we = event_weights(w);
    return loglik_with(beta, aw, we, grad);
  }

 private:
  int order_;
  std::vector<double> knots_;
  int nb_ = 0;
  int n_units_ = 0;
  std::vector<double> event_basis_;    // n_events x nb
  std::vector<double> unit_exposure_;  // n_units x nb
  std::vector<double> event_log_x_;
  std::vector<int> event_unit_;
  std::vector<char> dead_;
};

// ------------------------------ spline fit ----------------------------------

namespace detail {

inline FitResult fit_spline_design(const SplineDesign& design, const FleetData& d,
                                   std::span<const double> w,
                                   std::span<const double> init_in = {}) {
  const auto nb = static_cast<std::size_t>(design.n_basis());
  const auto aw = design.exposure_coeffs(w);
  const auto we = design.event_weights(w);

  const double rate = d.total_kmiles > 0.0 ? d.n_events() / d.total_kmiles : 0.0;
  std::vector<double> init(nb, rate * d.tau() / static_cast<double>(nb));
  if (!init_in.empty()) {
    if (init_in.size() != nb) throw std::invalid_argument("spline init has wrong length");
    init.assign(init_in.begin(), init_in.end());
  }
  for (std::size_t q = 0; q < nb; ++q)
    if (design.dead_columns()[q]) init[q] = 0.0;

  // A boundary start (all zeros) is feasible but not evaluable; lift it into
  // the interior before handing it to the optimizer.
  if (design.loglik_with(init, aw, we, nullptr) == kNegInf) {
    const double lift = std::max(rate * d.tau() / static_cast<double>(nb), 1e-6) * 1e-3;
    for (std::size_t q = 0; q < nb; ++q)
      if (!design.dead_columns()[q]) init[q] = std::max(init[q], lift);
  }
  const std::vector<double> init_natural = init;

  auto fg = [&](std::span<const double> beta, std::span<double> grad) {
    if (grad.empty()) return -design.loglik_with(beta, aw, we, nullptr);
    double g[64];
    const double ll = design.loglik_with(beta, aw, we, g);
    for (std::size_t q = 0; q < grad.size(); ++q) grad[q] = -g[q];
    return -ll;
  };
  if (nb > 64) throw std::invalid_argument("spline basis too large");

  const std::vector<double> lower(nb, 0.0);
  const OptimResult opt = bounded_bfgs(fg, init, lower);

  SplineModel model;
  model.order = design.order();
  model.tau = design.tau();
  model.interior_knots = design.interior_knots();
  model.coefficients = opt.x;

  FitResult fit;
  fit.loglik = -opt.f;
  fit.df = 0;
  for (std::size_t q = 0; q < nb; ++q)
    if (model.coefficients[q] > kCoefZeroThreshold) ++fit.df;
  fit.aic = aic(fit.loglik, fit.df);
  fit.converged = opt.converged;
  fit.n_function_evals = opt.n_evals;
  fit.init = init_natural;
  fit.model = std::move(model);
  return fit;
}

}  // namespace detail

// Constrained ML fit of the I-spline coefficients for a fixed knot sequence.
inline FitResult fit_spline_with_knots(const Fleet& fleet, int order,
                                       std::span<const double> knot_seq,
                                       std::span<const double> w = {},
                                       std::span<const double> init = {}) {
  const FleetData d = FleetData::build(fleet);
  if (d.n_events() == 0) throw std::invalid_argument("fit_spline: fleet has no events");
  SplineDesign design(d, order, std::vector<double>(knot_seq.begin(), knot_seq.end()));
  return detail::fit_spline_design(design, d, w, init);
}

// Knots from the event quantiles, then the constrained fit.
inline FitResult fit_spline(const Fleet& fleet, int n_interior, int order = 3) {
  const FleetData d = FleetData::build(fleet);
  if (d.n_events() == 0) throw std::invalid_argument("fit_spline: fleet has no events");
  auto knots = place_knots(d.event_day, n_interior, d.tau(), order);
  SplineDesign design(d, order, std::move(knots));
  return detail::fit_spline_design(design, d, {});
}

// ---------------------------- parametric fit --------------------------------

struct ParametricFitOptions {
  std::optional<std::vector<double>> init;  // natural scale
  bool pin_theta1_zero = false;             // Musa-Okumoto constant-rate submodel
  NelderMeadOptions nm = {};
};

inline FitResult fit_parametric(const Fleet& fleet, Family family,
                                const ParametricFitOptions& options = {}) {
  const FleetData d = FleetData::build(fleet);
  if (d.n_events() == 0)
    throw std::invalid_argument("fit_parametric: fleet has no events; the MLE degenerates");
  if (!(d.total_kmiles > 0.0))
    throw std::invalid_argument("fit_parametric: fleet has events but zero total exposure");
  if (options.pin_theta1_zero && family != Family::MusaOkumoto)
    throw std::invalid_argument("pin_theta1_zero applies to the Musa-Okumoto family only");

  const double rate = d.n_events() / d.total_kmiles;
  std::vector<double> theta0 = options.init ? *options.init
                                            : detail::default_init(family, rate, d.tau());
  if (options.pin_theta1_zero) theta0[0] = 0.0;
  const auto z0 = detail::z_from_theta(family, theta0, options.pin_theta1_zero);

  auto objective = [&](std::span<const double> z) {
    const auto theta = detail::theta_from_z(family, z, options.pin_theta1_zero);
    const ParametricModel m{family, theta};
    return -detail::parametric_loglik(d, m, {});
  };
  const OptimResult opt = nelder_mead(objective, z0, options.nm);

  auto theta_hat = detail::theta_from_z(family, opt.x, options.pin_theta1_zero);
  if (options.pin_theta1_zero) theta_hat[0] = 0.0;

  FitResult fit;
  fit.model = ParametricModel{family, theta_hat};
  fit.loglik = -opt.f;
  fit.df = static_cast<int>(z0.size());
  fit.aic = aic(fit.loglik, fit.df);
  fit.converged = opt.converged;
  fit.n_function_evals = opt.n_evals;
  fit.init = theta0;
  return fit;
}

// ------------------------------ selection -----------------------------------

// Fits every candidate interior-knot count and keeps the smallest AIC; ties
// break toward fewer knots. Candidates whose quantile knots collapse are
// skipped; if all fail the errors are aggregated.
inline FitResult select_spline(const Fleet& fleet, std::span<const int> candidate_b,
                               int order = 3) {
  if (candidate_b.empty()) throw std::invalid_argument("select_spline: no candidates");
  std::vector<int> ordered(candidate_b.begin(), candidate_b.end());
  std::sort(ordered.begin(), ordered.end());
  ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());
  std::optional<FitResult> best;
  std::ostringstream errors;
  for (int b : ordered) {
    try {
      FitResult fit = fit_spline(fleet, b, order);
      if (!best || fit.aic < best->aic) best = std::move(fit);
    } catch (const std::exception& ex) {
      errors << "b=" << b << ": " << ex.what() << "; ";
    }
  }
  if (!best)
    throw std::runtime_error("select_spline: every candidate failed: " + errors.str());
  return *best;
}

inline std::vector<int> default_candidate_b() {
  return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
}

}  // namespace relrec
