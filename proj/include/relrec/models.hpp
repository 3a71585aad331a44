#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace relrec {

// ---------------------------------------------------------------------------
// Baseline cumulative intensity models.
//
// A BCIF Lambda0(t) gives the expected number of events on (0, t] at unit
// exposure; its derivative lambda0(t) is the baseline intensity (events per
// k-mile). Three parametric families are supported plus a monotone I-spline
// expansion whose non-negative coefficients keep Lambda0 non-decreasing.
// ---------------------------------------------------------------------------

enum class Family { MusaOkumoto, Gompertz, Weibull };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::MusaOkumoto: return "musa-okumoto";
    case Family::Gompertz: return "gompertz";
    case Family::Weibull: return "weibull";
  }
  return "unknown";
}

inline Family family_from_name(std::string_view s) {
  if (s == "musa-okumoto" || s == "musa_okumoto") return Family::MusaOkumoto;
  if (s == "gompertz") return Family::Gompertz;
  if (s == "weibull") return Family::Weibull;
  throw std::invalid_argument("unknown model family: " + std::string(s));
}

struct ParametricModel {
  Family family = Family::MusaOkumoto;
  std::vector<double> theta;
};

struct SplineModel {
  int order = 3;               // cubic I-splines by default
  double tau = 0.0;            // right boundary knot
  std::vector<double> interior_knots;  // strictly increasing, inside (0, tau)
  std::vector<double> coefficients;    // size order + interior_knots.size(), all >= 0

  int n_basis() const { return order + static_cast<int>(interior_knots.size()); }

  // Full sequence 0 (order times), interior knots, tau (order times).
  std::vector<double> knot_sequence() const {
    std::vector<double> k;
    k.reserve(2 * order + interior_knots.size());
    k.insert(k.end(), order, 0.0);
    k.insert(k.end(), interior_knots.begin(), interior_knots.end());
    k.insert(k.end(), order, tau);
    return k;
  }
};

using BcifModel = std::variant<ParametricModel, SplineModel>;

// --------------------------- validation -----------------------------------

inline void check_parametric(const ParametricModel& m) {
  const auto& th = m.theta;
  auto finite = [&] {
    for (double v : th)
      if (!std::isfinite(v)) return false;
    return true;
  };
  switch (m.family) {
    case Family::MusaOkumoto:
      // theta1 = 0 is the constant-rate degenerate limit and is allowed.
      if (th.size() != 2 || !finite() || !(th[0] >= 0.0) || !(th[1] > 0.0))
        throw std::domain_error("Musa-Okumoto requires theta1 >= 0 and theta2 > 0");
      break;
    case Family::Gompertz:
      if (th.size() != 3 || !finite() || !(th[0] > 0.0) ||
          !(th[1] > 0.0 && th[1] < 1.0) || !(th[2] > 0.0 && th[2] < 1.0))
        throw std::domain_error("Gompertz requires theta1 > 0 and theta2, theta3 in (0, 1)");
      break;
    case Family::Weibull:
      if (th.size() != 3 || !finite() || !(th[0] > 0.0) || !(th[1] > 0.0) || !(th[2] > 0.0))
        throw std::domain_error("Weibull requires all three parameters > 0");
      break;
  }
}

namespace detail {

inline void check_knot_sequence(int order, std::span<const double> knots) {
  const int h = order;
  const int m = static_cast<int>(knots.size());
  if (h < 1) throw std::domain_error("spline order must be >= 1");
  if (m < 2 * h) throw std::domain_error("knot sequence too short for the given order");
  if (knots.front() != 0.0) throw std::domain_error("knot sequence must start at 0");
  const double tau = knots.back();
  if (!(tau > 0.0)) throw std::domain_error("right boundary knot must be positive");
  for (int i = 1; i < h; ++i) {
    if (knots[i] != knots.front() || knots[m - 1 - i] != tau)
      throw std::domain_error("boundary knots must repeat 'order' times");
  }
  for (int i = h - 1; i < m - h; ++i) {
    if (!(knots[i] < knots[i + 1]))
      throw std::domain_error("interior knots must be strictly increasing inside (0, tau)");
  }
}

// M-spline basis values without argument validation; callers in hot loops
// check the knot sequence once up front.
inline void mspline_eval(int order, std::span<const double> knots, double t,
                         std::vector<double>& out, std::vector<double>& scratch) {
  const int h = order;
  const int m = static_cast<int>(knots.size());
  const double hi = knots.back();
  // Supports are half-open [t_q, t_{q+r}); at t == tau we take left limits so
  // the integrated splines reach exactly 1 there.
  const bool at_right = (t == hi);
  auto in_support = [&](double a, double b) {
    return a <= t && (t < b || (at_right && b == hi && a < b));
  };

  scratch.assign(static_cast<std::size_t>(m - 1), 0.0);
  for (int q = 0; q + 1 < m; ++q) {
    const double a = knots[q], b = knots[q + 1];
    if (b > a && in_support(a, b)) scratch[q] = 1.0 / (b - a);
  }
  out = scratch;
  for (int r = 2; r <= h; ++r) {
    out.assign(static_cast<std::size_t>(m - r), 0.0);
    for (int q = 0; q + r < m; ++q) {
      const double a = knots[q], b = knots[q + r];
      if (!(b > a) || !in_support(a, b)) continue;
      out[q] = r * ((t - a) * scratch[q] + (b - t) * scratch[q + 1]) /
               ((r - 1) * (b - a));
    }
    scratch = out;
  }
  out.resize(static_cast<std::size_t>(m - h));
}

// Gauss-Legendre nodes on [-1, 1]; M-splines of order h are polynomials of
// degree h-1 between knots, so h/2+1 points integrate them exactly.
struct GaussRule {
  const double* x;
  const double* w;
  int n;
};

inline GaussRule gauss_rule(int order) {
  static const double x1[] = {0.0};
  static const double w1[] = {2.0};
  static const double x2[] = {-0.5773502691896257, 0.5773502691896257};
  static const double w2[] = {1.0, 1.0};
  static const double x3[] = {-0.7745966692414834, 0.0, 0.7745966692414834};
  static const double w3[] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  static const double x4[] = {-0.8611363115940526, -0.3399810435848563,
                              0.3399810435848563, 0.8611363115940526};
  static const double w4[] = {0.3478548451374538, 0.6521451548625461,
                              0.6521451548625461, 0.3478548451374538};
  const int n = order / 2 + 1;
  switch (n) {
    case 1: return {x1, w1, 1};
    case 2: return {x2, w2, 2};
    case 3: return {x3, w3, 3};
    case 4: return {x4, w4, 4};
    default: throw std::domain_error("spline order not supported (max 6)");
  }
}

// I-spline values by exact per-span Gauss quadrature of the M-splines.
inline void ispline_eval(int order, std::span<const double> knots, double t,
                         std::vector<double>& out) {
  const int nb = static_cast<int>(knots.size()) - order;
  out.assign(static_cast<std::size_t>(nb), 0.0);
  if (t <= knots.front()) return;
  const GaussRule g = gauss_rule(order);
  std::vector<double> mv, scratch;
  double span_lo = knots.front();
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const double span_hi = knots[i];
    if (!(span_hi > span_lo)) continue;
    const double a = span_lo;
    const double b = std::min(span_hi, t);
    if (b > a) {
      const double c = 0.5 * (a + b), r = 0.5 * (b - a);
      for (int j = 0; j < g.n; ++j) {
        mspline_eval(order, knots, c + r * g.x[j], mv, scratch);
        const double wj = r * g.w[j];
        for (int q = 0; q < nb; ++q) out[static_cast<std::size_t>(q)] += wj * mv[static_cast<std::size_t>(q)];
      }
    }
    if (span_hi >= t) break;
    span_lo = span_hi;
  }
}

// --------------------- parametric family kernels --------------------------
// Formulas follow the standard software-reliability parameterizations with t
// in days. No argument validation here; public entry points validate.

inline double mo_bcif(double th1, double th2, double t) {
  if (th1 < 1e-10) return th2 * t;  // series limit, avoids 0/0 at theta1 = 0
  return std::log1p(th2 * th1 * t) / th1;
}

inline double mo_bif(double th1, double th2, double t) {
  if (th1 < 1e-10) return th2;
  return th2 / (1.0 + th2 * th1 * t);
}

// Written with expm1 so Lambda0(0) is exactly 0 and small-t values keep
// full precision; theta2^t and theta3^(theta2^t) go through logs to avoid
// underflow out to t = 730 and beyond.
inline double gompertz_bcif(double th1, double th2, double th3, double t) {
  const double am1 = std::expm1(t * std::log(th2));  // theta2^t - 1
  return th1 * th3 * std::expm1(am1 * std::log(th3));
}

inline double gompertz_bif(double th1, double th2, double th3, double t) {
  const double l2 = std::log(th2), l3 = std::log(th3);
  const double a = std::exp(t * l2);
  return th1 * a * std::exp(a * l3) * l2 * l3;
}

inline double weibull_bcif(double th1, double th2, double th3, double t) {
  return th1 * (-std::expm1(-th2 * std::pow(t, th3)));
}

inline double weibull_bif(double th1, double th2, double th3, double t) {
  return th1 * th2 * th3 * std::pow(t, th3 - 1.0) * std::exp(-th2 * std::pow(t, th3));
}

inline double parametric_bcif(const ParametricModel& m, double t) {
  switch (m.family) {
    case Family::MusaOkumoto: return mo_bcif(m.theta[0], m.theta[1], t);
    case Family::Gompertz: return gompertz_bcif(m.theta[0], m.theta[1], m.theta[2], t);
    case Family::Weibull: return weibull_bcif(m.theta[0], m.theta[1], m.theta[2], t);
  }
  return 0.0;
}

inline double parametric_bif(const ParametricModel& m, double t) {
  switch (m.family) {
    case Family::MusaOkumoto: return mo_bif(m.theta[0], m.theta[1], t);
    case Family::Gompertz: return gompertz_bif(m.theta[0], m.theta[1], m.theta[2], t);
    case Family::Weibull: return weibull_bif(m.theta[0], m.theta[1], m.theta[2], t);
  }
  return 0.0;
}

}  // namespace detail

inline void check_spline(const SplineModel& m) {
  if (static_cast<int>(m.coefficients.size()) != m.n_basis())
    throw std::domain_error("spline coefficient count must equal order + interior knots");
  for (double c : m.coefficients)
    if (!(c >= 0.0) || !std::isfinite(c))
      throw std::domain_error("spline coefficients must be finite and >= 0");
  const auto ks = m.knot_sequence();
  detail::check_knot_sequence(m.order, ks);
}

inline void check_model(const BcifModel& m) {
  std::visit([](const auto& v) {
    if constexpr (std::is_same_v<std::decay_t<decltype(v)>, ParametricModel>)
      check_parametric(v);
    else
      check_spline(v);
  }, m);
}

// ----------------------------- basis API -----------------------------------

// M-spline basis of the given order at t, on the full knot sequence.
inline std::vector<double> mspline_basis(int order, std::span<const double> knots, double t) {
  detail::check_knot_sequence(order, knots);
  if (!(t >= knots.front() && t <= knots.back()))
    throw std::domain_error("mspline_basis: t outside [0, tau]");
  std::vector<double> out, scratch;
  detail::mspline_eval(order, knots, t, out, scratch);
  return out;
}

// I-spline basis (integrals of the M-splines from 0 to t).
inline std::vector<double> ispline_basis(int order, std::span<const double> knots, double t) {
  detail::check_knot_sequence(order, knots);
  if (!(t >= knots.front() && t <= knots.back()))
    throw std::domain_error("ispline_basis: t outside [0, tau]");
  std::vector<double> out;
  detail::ispline_eval(order, knots, t, out);
  return out;
}

// Interior knots at equally spaced sample quantiles of the pooled event days
// (levels k/(b+1), k = 1..b), with boundary knots 0 and tau. Quantiles use
// the linear-interpolation definition (R type 7).
inline std::vector<double> place_knots(std::span<const double> pooled_event_days,
                                       int n_interior, double tau, int order = 3) {
  if (pooled_event_days.empty())
    throw std::invalid_argument("place_knots: pooled event list is empty");
  if (n_interior < 1) throw std::invalid_argument("place_knots: need n_interior >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("place_knots: tau must be positive");

  std::vector<double> sorted(pooled_event_days.begin(), pooled_event_days.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  std::vector<double> interior(static_cast<std::size_t>(n_interior));
  for (int k = 1; k <= n_interior; ++k) {
    const double p = static_cast<double>(k) / (n_interior + 1);
    const double idx = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(idx);
    const double frac = idx - static_cast<double>(lo);
    const double q = (lo + 1 < n) ? sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
                                  : sorted[lo];
    interior[static_cast<std::size_t>(k - 1)] = q;
  }

  for (std::size_t i = 0; i < interior.size(); ++i) {
    const bool inside = interior[i] > 0.0 && interior[i] < tau;
    const bool distinct = i == 0 || interior[i] > interior[i - 1];
    if (!inside || !distinct)
      throw std::domain_error(
          "place_knots: event quantiles give coincident or boundary interior knots; "
          "use a smaller number of interior knots");
  }

  std::vector<double> knots;
  knots.reserve(2 * static_cast<std::size_t>(order) + interior.size());
  knots.insert(knots.end(), static_cast<std::size_t>(order), 0.0);
  knots.insert(knots.end(), interior.begin(), interior.end());
  knots.insert(knots.end(), static_cast<std::size_t>(order), tau);
  return knots;
}

// --------------------------- model evaluation ------------------------------

// Lambda0(t). Parametric families accept any t >= 0; the spline model is
// only defined on [0, tau].
inline double bcif_eval(const BcifModel& model, double t) {
  check_model(model);
  if (const auto* p = std::get_if<ParametricModel>(&model)) {
    if (!(t >= 0.0)) throw std::domain_error("bcif_eval: t must be >= 0");
    return detail::parametric_bcif(*p, t);
  }
  const auto& s = std::get<SplineModel>(model);
  if (!(t >= 0.0 && t <= s.tau)) throw std::domain_error("bcif_eval: t outside [0, tau]");
  const auto ks = s.knot_sequence();
  std::vector<double> iv;
  detail::ispline_eval(s.order, ks, t, iv);
  double acc = 0.0;
  for (std::size_t q = 0; q < iv.size(); ++q) acc += s.coefficients[q] * iv[q];
  return acc;
}

// lambda0(t) = d Lambda0 / dt.
inline double bif_eval(const BcifModel& model, double t) {
  check_model(model);
  if (const auto* p = std::get_if<ParametricModel>(&model)) {
    if (!(t >= 0.0)) throw std::domain_error("bif_eval: t must be >= 0");
    if (p->family == Family::Weibull && t == 0.0 && p->theta[2] < 1.0)
      throw std::domain_error("bif_eval: Weibull intensity is singular at t = 0 for theta3 < 1");
    return detail::parametric_bif(*p, t);
  }
  const auto& s = std::get<SplineModel>(model);
  if (!(t >= 0.0 && t <= s.tau)) throw std::domain_error("bif_eval: t outside [0, tau]");
  const auto ks = s.knot_sequence();
  std::vector<double> mv, scratch;
  detail::mspline_eval(s.order, ks, t, mv, scratch);
  double acc = 0.0;
  for (std::size_t q = 0; q < mv.size(); ++q) acc += s.coefficients[q] * mv[q];
  return acc;
}

}  // namespace relrec
