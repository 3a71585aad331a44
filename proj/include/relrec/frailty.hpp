#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "relrec/estimation.hpp"

namespace relrec {

// ---------------------------------------------------------------------------
// Gamma frailty extension. Each unit carries a latent multiplier u_i with a
// mean-one gamma distribution of variance phi; integrating it out gives a
// closed-form marginal likelihood. phi = 0 recovers the plain NHPP, and the
// likelihood-ratio test against that null probes population heterogeneity.
// ---------------------------------------------------------------------------

inline constexpr double kPhiFloor = 1e-10;

struct FrailtyFit {
  FitResult base;               // parametric fit under the frailty model
  double phi = kPhiFloor;
  double marginal_loglik = 0.0;
  double lrt_statistic = 0.0;
  double p_value = 1.0;
  bool phi_at_floor = false;    // variance pinned at the floor (no signal, or n = 1)
};

// Upper tail of chi-square with one degree of freedom.
inline double chi2_1_upper_tail(double x) {
  if (x < 0.0) throw std::invalid_argument("chi2_1_upper_tail: x must be >= 0");
  return std::erfc(std::sqrt(x / 2.0));
}

// Mean-one gamma density with variance phi (shape 1/phi, scale phi).
inline double gamma_frailty_pdf(double u, double phi) {
  if (!(phi > 0.0) || !(u > 0.0)) throw std::invalid_argument("gamma_frailty_pdf: need u, phi > 0");
  const double a = 1.0 / phi;
  return std::exp((a - 1.0) * std::log(u) - u * a + a * std::log(a) - std::lgamma(a));
}

namespace detail {

// Marginal log-likelihood. The gamma-ratio block per unit is
//   -log(phi)/phi + lgamma(n_i + 1/phi) - lgamma(1/phi) - (n_i + 1/phi) log(c_i + 1/phi),
// which for integer event counts collapses to
//   sum_{j=0}^{n_i - 1} log1p(j phi) - (n_i + 1/phi) log1p(c_i phi).
// The collapsed form is used because the lgamma terms individually reach 1e9
// near the phi floor and their cancellation would eat the tolerance budget.
inline double frailty_marginal_loglik(const FleetData& d, const ParametricModel& m,
                                      double phi) {
  std::vector<double> lam(d.boundaries.size());
  for (std::size_t l = 0; l < d.boundaries.size(); ++l)
    lam[l] = parametric_bcif(m, d.boundaries[l]);

  // Per-unit event terms and counts.
  std::vector<double> event_part(static_cast<std::size_t>(d.n_units), 0.0);
  std::vector<int> n_i(static_cast<std::size_t>(d.n_units), 0);
  for (int e = 0; e < d.n_events(); ++e) {
    const double intensity = parametric_bif(m, d.event_day[static_cast<std::size_t>(e)]);
    if (!(intensity > 0.0)) return kNegInf;
    const auto i = static_cast<std::size_t>(d.event_unit[static_cast<std::size_t>(e)]);
    event_part[i] += d.event_log_x[static_cast<std::size_t>(e)] + std::log(intensity);
    ++n_i[i];
  }

  long double ll = 0.0L;
  for (int i = 0; i < d.n_units; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    long double c_i = 0.0L;
    for (std::size_t l = 0; l < d.n_months(); ++l)
      c_i += static_cast<long double>(d.unit_x[iu][l]) * (lam[l + 1] - lam[l]);
    long double block = 0.0L;
    for (int j = 0; j < n_i[iu]; ++j) block += std::log1p(j * phi);
    block -= (n_i[iu] + 1.0L / phi) * std::log1p(static_cast<double>(c_i) * phi);
    ll += event_part[iu] + block;
    if (std::isinf(static_cast<double>(ll))) return kNegInf;
  }
  return static_cast<double>(ll);
}

}  // namespace detail

// Marginal log-likelihood of (theta, phi) with the frailty integrated out.
inline double marginal_log_likelihood(const Fleet& fleet, const ParametricModel& model,
                                      double phi) {
  if (!(phi > 0.0))
    throw std::domain_error(
        "marginal_log_likelihood: phi must be > 0; the phi -> 0 limit is the plain "
        "NHPP log-likelihood");
  check_parametric(model);
  const FleetData d = FleetData::build(fleet);
  return detail::frailty_marginal_loglik(d, model, phi);
}

// Joint fit of (theta, phi) by simplex search on (transformed theta, log phi),
// with phi floored at kPhiFloor. Also runs the plain NHPP fit and fills in the
// heterogeneity likelihood-ratio test against it.
inline FrailtyFit fit_frailty(const Fleet& fleet, Family family,
                              bool boundary_mix_pvalue = false) {
  const FleetData d = FleetData::build(fleet);
  if (d.n_events() == 0)
    throw std::invalid_argument("fit_frailty: fleet has no events");

  const FitResult null_fit = fit_parametric(fleet, family);
  const auto& null_theta = std::get<ParametricModel>(null_fit.model).theta;

  FrailtyFit out;
  const double log_floor = std::log(kPhiFloor);

  if (d.n_units < 2) {
    // One frailty draw cannot reveal a variance; report the null fit with
    // phi pinned at the floor.
    out.base = null_fit;
    out.phi = kPhiFloor;
    out.phi_at_floor = true;
    out.marginal_loglik =
        detail::frailty_marginal_loglik(d, std::get<ParametricModel>(null_fit.model), kPhiFloor);
    out.lrt_statistic = 0.0;
    out.p_value = 1.0;
    return out;
  }

  auto objective = [&](std::span<const double> z) {
    const std::span<const double> z_theta = z.first(z.size() - 1);
    const auto theta = detail::theta_from_z(family, z_theta, false);
    const double phi = std::exp(std::clamp(z.back(), log_floor, 30.0));
    const ParametricModel m{family, theta};
    return -detail::frailty_marginal_loglik(d, m, phi);
  };

  std::vector<double> z0 = detail::z_from_theta(family, null_theta, false);
  z0.push_back(std::log(0.1));
  OptimResult opt = nelder_mead(objective, z0);

  // The null with phi at the floor is a feasible point of the frailty model;
  // never report anything worse (keeps the LRT statistic non-negative).
  std::vector<double> z_null = detail::z_from_theta(family, null_theta, false);
  z_null.push_back(log_floor);
  const double f_null_floor = objective(z_null);
  if (f_null_floor < opt.f) {
    opt.x = z_null;
    opt.f = f_null_floor;
  }

  const auto theta_hat =
      detail::theta_from_z(family, std::span<const double>(opt.x).first(opt.x.size() - 1), false);
  const double phi_hat = std::exp(std::clamp(opt.x.back(), log_floor, 30.0));

  out.phi = phi_hat;
  out.phi_at_floor = phi_hat <= kPhiFloor * 1.5;
  out.marginal_loglik = -opt.f;
  out.base.model = ParametricModel{family, theta_hat};
  out.base.loglik = out.marginal_loglik;
  out.base.df = static_cast<int>(z0.size());
  out.base.aic = aic(out.base.loglik, out.base.df);
  out.base.converged = opt.converged;
  out.base.n_function_evals = opt.n_evals;
  out.base.init = null_theta;

  out.lrt_statistic = std::max(0.0, -2.0 * (null_fit.loglik - out.marginal_loglik));
  // Plain chi-square-1 reference by default; the optional boundary mixture
  // 0.5 chi2_0 + 0.5 chi2_1 halves the tail.
  const double tail = chi2_1_upper_tail(out.lrt_statistic);
  out.p_value = boundary_mix_pvalue ? (out.lrt_statistic > 0.0 ? 0.5 * tail : 1.0) : tail;
  return out;
}

// Likelihood-ratio test for population heterogeneity (null: phi = 0).
inline FrailtyFit heterogeneity_lrt(const Fleet& fleet, Family family,
                                    bool boundary_mix_pvalue = false) {
  return fit_frailty(fleet, family, boundary_mix_pvalue);
}

}  // namespace relrec
