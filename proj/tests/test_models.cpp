#include <doctest.h>

#include <array>
#include <cmath>

#include "relrec/models.hpp"
#include "relrec/random.hpp"
#include "test_util.hpp"

using namespace relrec;

namespace {

ParametricModel mo(double t1, double t2) { return {Family::MusaOkumoto, {t1, t2}}; }
ParametricModel gom(double t1, double t2, double t3) { return {Family::Gompertz, {t1, t2, t3}}; }
ParametricModel wei(double t1, double t2, double t3) { return {Family::Weibull, {t1, t2, t3}}; }

SplineModel canonical_spline(std::vector<double> beta) {
  SplineModel s;
  s.order = 3;
  s.tau = 730.0;
  s.interior_knots = {730.0 / 3.0, 2.0 * 730.0 / 3.0};
  s.coefficients = std::move(beta);
  return s;
}

std::vector<BcifModel> sample_models() {
  return {
      BcifModel{mo(0.5, 0.8)},
      BcifModel{mo(0.0, 0.5933)},
      BcifModel{gom(102.2539, 0.9975, 0.1623)},
      BcifModel{wei(817.203, 0.0474, 0.6304)},
      BcifModel{canonical_spline({6, 16, 23, 11, 4})},
  };
}

}  // namespace

TEST_CASE("bcif closed forms") {
  // Musa-Okumoto at theta = (1, 1): log(1 + (e-1)) = 1.
  CHECK(bcif_eval(mo(1.0, 1.0), std::exp(1.0) - 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  // Degenerate Musa-Okumoto is the constant-rate model.
  CHECK(bcif_eval(mo(0.0, 0.5933), 100.0) == doctest::Approx(59.33).epsilon(1e-12));
  CHECK(bif_eval(mo(0.0, 0.5933), 400.0) == doctest::Approx(0.5933).epsilon(1e-12));
  // Weibull intensity at theta = (1,1,1): exp(-t).
  CHECK(bif_eval(wei(1.0, 1.0, 1.0), 2.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("bcif starts at zero for every family") {
  RngStream rng(7);
  for (int i = 0; i < 50; ++i) {
    const double a = 0.1 + 200.0 * rng.uniform01();
    const double p1 = 0.05 + 0.9 * rng.uniform01();
    const double p2 = 0.05 + 0.9 * rng.uniform01();
    CHECK(bcif_eval(mo(rng.uniform01(), a), 0.0) == 0.0);
    CHECK(bcif_eval(gom(a, p1, p2), 0.0) == 0.0);
    CHECK(bcif_eval(wei(a, p1, 2.0 * p2), 0.0) == 0.0);
  }
  CHECK(bcif_eval(canonical_spline({6, 16, 23, 11, 4}), 0.0) == 0.0);
}

TEST_CASE("bcif is non-decreasing and bif non-negative on the day grid") {
  for (const auto& model : sample_models()) {
    double prev = 0.0;
    for (int t = 1; t <= 730; ++t) {
      const double v = bcif_eval(model, t);
      CHECK(v >= prev);
      CHECK(bif_eval(model, t) >= 0.0);
      prev = v;
    }
  }
}

TEST_CASE("weibull saturates at theta1") {
  const auto m = wei(3.7, 1.0, 1.0);
  for (double t : {1.0, 10.0, 100.0, 1e4, 1e6}) CHECK(bcif_eval(m, t) <= 3.7);
  CHECK(bcif_eval(m, 1e6) >= 3.7 * (1.0 - 1e-6));
}

TEST_CASE("bif matches finite differences of bcif for all model kinds") {
  RngStream rng(41);
  for (const auto& model : sample_models()) {
    for (int k = 0; k < 100; ++k) {
      const double t = 1.0 + 728.0 * rng.uniform01();
      const double fd = testutil::central_diff(
          [&](double s) { return bcif_eval(model, s); }, t, 1e-4);
      const double an = bif_eval(model, t);
      if (std::abs(an) > 1e-12) CHECK(testutil::rel_err(fd, an) < 1e-5);
    }
  }
}

TEST_CASE("weibull intensity singular at zero for theta3 < 1") {
  CHECK_THROWS_AS(bif_eval(wei(1.0, 1.0, 0.5), 0.0), std::domain_error);
  CHECK(bif_eval(wei(1.0, 1.0, 1.0), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(bcif_eval(mo(-0.1, 1.0), 1.0), std::domain_error);
  CHECK_THROWS_AS(bcif_eval(gom(1.0, 1.2, 0.5), 1.0), std::domain_error);
  CHECK_THROWS_AS(bcif_eval(wei(1.0, -1.0, 0.5), 1.0), std::domain_error);
  CHECK_THROWS_AS(bcif_eval(canonical_spline({1, -2, 3, 4, 5}), 1.0), std::domain_error);
  // Spline rejects evaluation beyond tau; parametric families extrapolate.
  CHECK_THROWS_AS(bcif_eval(canonical_spline({1, 2, 3, 4, 5}), 731.0), std::domain_error);
  CHECK_NOTHROW(bcif_eval(mo(1.0, 1.0), 10000.0));
}

TEST_CASE("order-1 m-spline is the indicator over the span") {
  const std::vector<double> knots = {0.0, 2.0};
  const auto at0 = mspline_basis(1, knots, 0.0);
  REQUIRE(at0.size() == 1);
  CHECK(at0[0] == doctest::Approx(0.5));
  CHECK(mspline_basis(1, knots, 1.999)[0] == doctest::Approx(0.5));
  // Left-limit convention keeps the value at the right boundary.
  CHECK(mspline_basis(1, knots, 2.0)[0] == doctest::Approx(0.5));
}

TEST_CASE("m-splines integrate to one over their support") {
  const std::vector<std::vector<double>> layouts = {
      {0, 0, 0, 730.0 / 3, 2 * 730.0 / 3, 730, 730, 730},
      {0, 0, 0, 100, 250, 400, 600, 730, 730, 730},
      {0, 0, 0, 50, 180, 420, 600, 730, 730, 730},  // narrow early supports
      {0, 0, 365, 730, 730},                        // order 2
  };
  const std::vector<int> orders = {3, 3, 3, 2};
  for (std::size_t c = 0; c < layouts.size(); ++c) {
    const auto& knots = layouts[c];
    const int order = orders[c];
    const int nb = static_cast<int>(knots.size()) - order;
    for (int q = 0; q < nb; ++q) {
      const double integral = testutil::quad_panels(
          [&](double t) { return mspline_basis(order, knots, t)[static_cast<std::size_t>(q)]; },
          knots, 1e-11);
      CHECK(std::abs(integral - 1.0) < 1e-8);
    }
  }
}

TEST_CASE("i-splines are integrated m-splines") {
  const std::vector<double> knots = {0, 0, 0, 365, 730, 730, 730};
  const int nb = 4;
  const auto at0 = ispline_basis(3, knots, 0.0);
  for (int q = 0; q < nb; ++q) CHECK(at0[static_cast<std::size_t>(q)] == 0.0);

  const auto at_tau = ispline_basis(3, knots, 730.0);
  for (int q = 0; q < nb; ++q) CHECK(std::abs(at_tau[static_cast<std::size_t>(q)] - 1.0) < 1e-8);

  const auto at_mid = ispline_basis(3, knots, 365.0);
  for (int q = 0; q < nb; ++q) {
    const double oracle = testutil::quad(
        [&](double t) { return mspline_basis(3, knots, t)[static_cast<std::size_t>(q)]; },
        0.0, 365.0, 1e-11);
    CHECK(std::abs(at_mid[static_cast<std::size_t>(q)] - oracle) < 1e-8);
  }
}

TEST_CASE("i-splines are monotone and so are non-negative combinations") {
  const auto model = canonical_spline({5, 25, 0, 30, 0});
  const auto knots = model.knot_sequence();
  std::vector<double> prev(5, 0.0);
  double prev_comb = 0.0;
  for (int t = 1; t <= 730; ++t) {
    const auto iv = ispline_basis(3, knots, t);
    double comb = 0.0;
    for (std::size_t q = 0; q < iv.size(); ++q) {
      CHECK(iv[q] >= prev[q]);
      comb += model.coefficients[q] * iv[q];
    }
    CHECK(comb >= prev_comb);
    prev = iv;
    prev_comb = comb;
  }
}

TEST_CASE("spline bcif with a one-hot coefficient equals that i-spline") {
  const std::vector<double> knots = {0, 0, 0, 730.0 / 3, 2 * 730.0 / 3, 730, 730, 730};
  for (std::size_t hot = 0; hot < 5; ++hot) {
    std::vector<double> beta(5, 0.0);
    beta[hot] = 1.0;
    const auto model = canonical_spline(beta);
    for (double t : {1.0, 100.0, 243.0, 365.0, 700.0, 730.0}) {
      const double direct = ispline_basis(3, knots, t)[hot];
      CHECK(bcif_eval(model, t) == doctest::Approx(direct).epsilon(1e-14));
    }
  }
}

TEST_CASE("knot placement at event quantiles") {
  // Quantile levels k/(b+1); with b = 3 these are the quartiles.
  std::vector<double> events;
  for (int i = 1; i <= 99; ++i) events.push_back(static_cast<double>(i));
  const auto knots = place_knots(events, 3, 730.0);
  REQUIRE(knots.size() == 3 + 3 + 3);
  CHECK(knots[3] == doctest::Approx(25.5));   // 0.25 quantile, linear interpolation
  CHECK(knots[4] == doctest::Approx(50.0));
  CHECK(knots[5] == doctest::Approx(74.5));

  // Median of a large uniform sample sits near the middle of the range.
  RngStream rng(11);
  std::vector<double> uniform_days;
  for (int i = 0; i < 20000; ++i) uniform_days.push_back(730.0 * rng.uniform01());
  const auto one = place_knots(uniform_days, 1, 730.0);
  CHECK(std::abs(one[3] - 365.0) < 15.0);

  // Heavily tied data: a single knot lands on the tie, two knots collide.
  const std::vector<double> tied(40, 100.0);
  const auto tied_knots = place_knots(tied, 1, 730.0);
  CHECK(tied_knots[3] == doctest::Approx(100.0));
  CHECK_THROWS_AS(place_knots(tied, 2, 730.0), std::domain_error);
}

TEST_CASE("mspline rejects malformed knot sequences") {
  CHECK_THROWS_AS(mspline_basis(3, std::vector<double>{0, 0, 0, 730, 730, 730}, 731.0),
                  std::domain_error);
  CHECK_THROWS_AS(mspline_basis(3, std::vector<double>{0, 0, 200, 100, 730, 730, 730}, 1.0),
                  std::domain_error);
  CHECK_THROWS_AS(mspline_basis(0, std::vector<double>{0, 730}, 1.0), std::domain_error);
}
