#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace relrec {

struct OptimResult {
  std::vector<double> x;
  double f = std::numeric_limits<double>::infinity();
  bool converged = false;
  int n_evals = 0;
  int n_iterations = 0;
  std::vector<double> accepted_f;  // objective at each accepted iterate
};

// ----------------------------- Nelder-Mead ---------------------------------

struct NelderMeadOptions {
  int max_evals = 5000;
  double diameter_tol = 1e-8;   // max pairwise inf-norm distance of vertices
  double initial_step = 0.25;   // per-coordinate, scaled by max(1, |x0_i|)
  int max_restarts = 2;         // re-seeded shrunken simplex around the best point
};

// Derivative-free simplex minimizer. Deterministic: the simplex is built from
// x0 with fixed per-coordinate steps, and restarts reuse the best vertex.
// Non-finite objective values are treated as worst and get reflected away.
inline OptimResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> x0,
                               const NelderMeadOptions& opt = {}) {
  const std::size_t n = x0.size();
  if (n == 0) throw std::invalid_argument("nelder_mead: empty starting point");

  OptimResult res;
  res.x.assign(x0.begin(), x0.end());
  int evals = 0;
  auto eval = [&](const std::vector<double>& v) {
    ++evals;
    const double fv = f(v);
    return std::isnan(fv) ? std::numeric_limits<double>::infinity() : fv;
  };

  std::vector<std::vector<double>> vx;
  std::vector<double> vf;
  auto build_simplex = [&](const std::vector<double>& center, double scale) {
    vx.assign(n + 1, center);
    vf.assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      vx[i + 1][i] += scale * std::max(1.0, std::abs(center[i]));
    for (std::size_t j = 0; j <= n; ++j) vf[j] = eval(vx[j]);
  };

  auto order = [&] {
    std::vector<std::size_t> idx(n + 1);
    for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return vf[a] < vf[b]; });
    std::vector<std::vector<double>> x2(n + 1);
    std::vector<double> f2(n + 1);
    for (std::size_t i = 0; i <= n; ++i) { x2[i] = vx[idx[i]]; f2[i] = vf[idx[i]]; }
    vx.swap(x2); vf.swap(f2);
  };

  auto diameter = [&] {
    double d = 0.0;
    for (std::size_t a = 0; a <= n; ++a)
      for (std::size_t b = a + 1; b <= n; ++b)
        for (std::size_t i = 0; i < n; ++i)
          d = std::max(d, std::abs(vx[a][i] - vx[b][i]));
    return d;
  };

  build_simplex(res.x, opt.initial_step);
  double last_best = std::numeric_limits<double>::infinity();
  int restarts = 0;
  bool done = false;

  while (!done) {
    order();
    if (std::isfinite(vf[0]) && vf[0] < last_best) {
      res.accepted_f.push_back(vf[0]);
      last_best = vf[0];
    }
    ++res.n_iterations;

    if (diameter() < opt.diameter_tol) {
      if (restarts < opt.max_restarts && evals < opt.max_evals) {
        // A shrunken fresh simplex around the best point guards against
        // premature collapse; keep restarting while it still pays off.
        const double improved = res.accepted_f.size() >= 2
            ? res.accepted_f[res.accepted_f.size() - 2] - last_best
            : std::numeric_limits<double>::infinity();
        if (improved > 1e-12 * (1.0 + std::abs(last_best)) || restarts == 0) {
          ++restarts;
          auto best = vx[0];
          build_simplex(best, opt.initial_step * std::pow(0.1, restarts));
          continue;
        }
      }
      res.converged = true;
      break;
    }
    if (evals >= opt.max_evals) break;

    std::vector<double> centroid(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) centroid[i] += vx[j][i] / static_cast<double>(n);

    auto blend = [&](const std::vector<double>& from, double coef) {
      std::vector<double> p(n);
      for (std::size_t i = 0; i < n; ++i) p[i] = centroid[i] + coef * (centroid[i] - from[i]);
      return p;
    };

    const auto xr = blend(vx[n], 1.0);  // reflection
    const double fr = eval(xr);
    if (fr < vf[0]) {
      const auto xe = blend(vx[n], 2.0);  // expansion
      const double fe = eval(xe);
      if (fe < fr) { vx[n] = xe; vf[n] = fe; } else { vx[n] = xr; vf[n] = fr; }
    } else if (fr < vf[n - 1]) {
      vx[n] = xr; vf[n] = fr;
    } else {
      const bool outside = fr < vf[n];
      const auto xc = outside ? blend(vx[n], 0.5)
                              : blend(vx[n], -0.5);  // inside contraction
      const double fc = eval(xc);
      if (fc < (outside ? fr : vf[n])) {
        vx[n] = xc; vf[n] = fc;
      } else {
        for (std::size_t j = 1; j <= n; ++j) {  // shrink toward best
          for (std::size_t i = 0; i < n; ++i) vx[j][i] = vx[0][i] + 0.5 * (vx[j][i] - vx[0][i]);
          vf[j] = eval(vx[j]);
        }
      }
    }
  }

  order();
  res.x = vx[0];
  res.f = vf[0];
  res.n_evals = evals;
  return res;
}

// -------------------- projected BFGS with lower bounds ---------------------

struct BfgsOptions {
  int max_iterations = 500;
  double pg_tol = 1e-9;        // on the projected gradient, scaled by max(1, |f|)
  double c1 = 1e-4;            // Armijo slope fraction
  int max_backtracks = 60;
};

// Minimizes f subject to x >= lower. The callback fills grad when the span is
// non-empty; value-only calls pass an empty span. Projection writes exact
// zeros when a coordinate hits its bound, which downstream code relies on for
// counting active coefficients.
inline OptimResult bounded_bfgs(
    const std::function<double(std::span<const double>, std::span<double>)>& fg,
    std::span<const double> x0, std::span<const double> lower,
    const BfgsOptions& opt = {}) {
  const std::size_t n = x0.size();
  if (n == 0 || lower.size() != n)
    throw std::invalid_argument("bounded_bfgs: empty start or bound size mismatch");

  OptimResult res;
  std::vector<double> x(x0.begin(), x0.end());
  for (std::size_t i = 0; i < n; ++i) x[i] = std::max(x[i], lower[i]);

  std::vector<double> g(n), gt(n), d(n), xt(n), s(n), y(n), hg(n);
  std::vector<double> H(n * n, 0.0);
  auto reset_h = [&] {
    std::fill(H.begin(), H.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
  };
  reset_h();
  bool h_is_identity = true;

  int evals = 0;
  auto call = [&](std::span<const double> p, std::span<double> grad) {
    ++evals;
    return fg(p, grad);
  };

  double fx = call(x, g);
  if (!std::isfinite(fx))
    throw std::invalid_argument("bounded_bfgs: objective not finite at the starting point");
  res.accepted_f.push_back(fx);

  for (int it = 0; it < opt.max_iterations; ++it) {
    ++res.n_iterations;
    // Projected-gradient optimality measure.
    double pg_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      pg_norm = std::max(pg_norm, std::abs(x[i] - std::max(x[i] - g[i], lower[i])));
    if (pg_norm <= opt.pg_tol * std::max(1.0, std::abs(fx))) {
      res.converged = true;
      break;
    }

    // Direction: -H g with coordinates pinned at an active bound frozen.
    std::vector<char> active(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      active[i] = (x[i] <= lower[i] && g[i] > 0.0) ? 1 : 0;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      if (!active[i])
        for (std::size_t j = 0; j < n; ++j)
          if (!active[j]) acc += H[i * n + j] * g[j];
      hg[i] = acc;
    }
    double gd = 0.0;
    for (std::size_t i = 0; i < n; ++i) { d[i] = -hg[i]; gd += g[i] * d[i]; }
    if (!(gd < 0.0)) {  // not a descent direction; fall back to steepest descent
      reset_h();
      h_is_identity = true;
      gd = 0.0;
      for (std::size_t i = 0; i < n; ++i) { d[i] = active[i] ? 0.0 : -g[i]; gd += g[i] * d[i]; }
      if (!(gd < 0.0)) { res.converged = true; break; }
    }

    // Backtracking Armijo search along the projected path.
    double alpha = 1.0;
    double ft = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      double gstep = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        xt[i] = std::max(x[i] + alpha * d[i], lower[i]);
        gstep += g[i] * (xt[i] - x[i]);
      }
      ft = call(xt, {});
      if (std::isfinite(ft) && ft <= fx + opt.c1 * gstep && gstep < 0.0) {
        accepted = true;
        break;
      }
      if (gstep == 0.0) break;  // projection wiped out the step
      alpha *= 0.5;
    }
    if (!accepted) {
      // No progress possible along this direction at line-search resolution.
      res.converged = pg_norm <= 1e-6 * std::max(1.0, std::abs(fx));
      break;
    }

    const double ftg = call(xt, gt);
    (void)ftg;
    double sy = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = xt[i] - x[i];
      y[i] = gt[i] - g[i];
      sy += s[i] * y[i];
      yy += y[i] * y[i];
    }
    double snorm = 0.0, ynorm = std::sqrt(yy);
    for (double v : s) snorm = std::max(snorm, std::abs(v));

    if (sy > 1e-12 * snorm * ynorm && sy > 0.0) {
      if (h_is_identity) {  // scale before the first real update
        const double scale = sy / yy;
        for (std::size_t i = 0; i < n; ++i) H[i * n + i] = scale;
        h_is_identity = false;
      }
      // H <- (I - s y'/sy) H (I - y s'/sy) + s s'/sy
      const double rho = 1.0 / sy;
      std::vector<double> hy(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) hy[i] += H[i * n + j] * y[j];
      double yhy = 0.0;
      for (std::size_t i = 0; i < n; ++i) yhy += y[i] * hy[i];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          H[i * n + j] += rho * rho * (sy + yhy) * s[i] * s[j] -
                          rho * (hy[i] * s[j] + s[i] * hy[j]);
    }

    x = xt;
    g = gt;
    fx = ft;
    res.accepted_f.push_back(fx);
  }

  res.x = std::move(x);
  res.f = fx;
  res.n_evals = evals;
  return res;
}

}  // namespace relrec
