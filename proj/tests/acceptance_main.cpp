// Acceptance suite: one criterion per line, hard pass/fail, wall time shown.
// Run through ctest or directly:
//
//   relrec_acceptance --cli path/to/relrec [--dmv-dir DIR] [--threads N]
//
// The real-data AIC criterion needs the original disengagement CSVs and is
// reported as SKIP when --dmv-dir (or RELREC_DMV_DIR) is absent.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "relrec/cli.hpp"
#include "relrec/relrec.hpp"
#include "test_util.hpp"

using namespace relrec;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
int g_threads = 0;

struct Criterion {
  std::string name;
  std::vector<std::string> problems;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  explicit Criterion(std::string n) : name(std::move(n)) {}

  void require(bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  }
  void require_close(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol)) {
      std::ostringstream os;
      os << what << ": got " << got << ", want " << want << " +- " << tol;
      problems.push_back(os.str());
    }
  }
  void finish(bool skipped = false, const std::string& note = "") {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char timing[32];
    std::snprintf(timing, sizeof(timing), "%.1fs", secs);
    if (skipped) {
      std::cout << "[SKIP] " << name << " (" << note << ")\n";
      return;
    }
    if (problems.empty()) {
      std::cout << "[PASS] " << name << " (" << timing << ")\n";
    } else {
      ++g_failures;
      std::cout << "[FAIL] " << name << " (" << timing << ")\n";
      for (const auto& p : problems) std::cout << "       - " << p << "\n";
    }
  }
};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------

void criterion_summary() {
  Criterion c("1 summary reproduction (events per k-mile to 3 decimals)");
  struct Row {
    const char* name;
    int vehicles, active, events;
    double kmiles, rate;
  };
  const Row rows[] = {
      {"fleet-a", 123, 1550, 224, 2710.136, 0.083},
      {"fleet-b", 304, 2079, 154, 1278.661, 0.120},
      {"fleet-c", 23, 179, 43, 190.871, 0.225},
      {"fleet-d", 32, 280, 58, 97.780, 0.593},
  };
  for (const auto& r : rows) {
    const Fleet f = testutil::totals_fleet(r.vehicles, r.active, r.events, r.kmiles);
    const FleetSummary s = summarize(f);
    c.require(s.n_vehicles == r.vehicles && s.n_events == r.events &&
                  s.active_months == r.active,
              std::string(r.name) + ": counts mismatch");
    c.require_close(s.total_kmiles, r.kmiles, 1e-6, std::string(r.name) + ": total k-miles");
    c.require_close(s.events_per_kmile, r.rate, 5e-4,
                    std::string(r.name) + ": events per k-mile");
  }
  c.finish();
}

void criterion_constant_rate_mle() {
  Criterion c("2 constant-rate MLE identity (theta2 = events / k-miles)");
  ParametricFitOptions opts;
  opts.pin_theta1_zero = true;

  const Fleet zoox_like = testutil::totals_fleet(32, 280, 58, 97.780);
  const auto& theta =
      std::get<ParametricModel>(fit_parametric(zoox_like, Family::MusaOkumoto, opts).model).theta;
  const double closed = 58.0 / 97.780;
  c.require(std::abs(theta[1] - closed) / closed <= 1e-6,
            "58-event fixture: optimizer vs closed form beyond 1e-6");
  c.require_close(theta[1], 0.5932, 5e-5, "58-event fixture rate");

  for (std::uint64_t s = 0; s < 3; ++s) {
    const Fleet f = testutil::random_fleet(700 + s, 20 + 5 * static_cast<int>(s), 0.6);
    const FleetData d = FleetData::build(f);
    const double rate = d.n_events() / d.total_kmiles;
    const auto& th =
        std::get<ParametricModel>(fit_parametric(f, Family::MusaOkumoto, opts).model).theta;
    c.require(std::abs(th[1] - rate) / rate <= 1e-6, "random fleet: identity beyond 1e-6");
  }
  c.finish();
}

void criterion_likelihood_suite() {
  Criterion c("3 likelihood and gradient suite");

  // Weighted likelihood at unit weights is the plain likelihood, exactly.
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Fleet f = testutil::random_fleet(60 + s, 8, 0.5);
    const BcifModel m = ParametricModel{Family::Gompertz, {40.0, 0.995, 0.3}};
    const WeightVector ones(f.units.size(), 1.0);
    c.require(weighted_log_likelihood(f, m, ones) == log_likelihood(f, m),
              "unit-weight identity not exact");
  }

  // Analytic spline gradient vs central differences, 20 random points.
  const Fleet f = testutil::random_fleet(42, 10, 0.6);
  const FleetData d = FleetData::build(f);
  const SplineDesign design(d, 3, place_knots(d.event_day, 3, d.tau()));
  RngStream rng(5);
  const auto nb = static_cast<std::size_t>(design.n_basis());
  for (int p = 0; p < 20; ++p) {
    std::vector<double> beta(nb);
    for (auto& b : beta) b = 0.5 + 8.0 * rng.uniform01();
    std::vector<double> grad(nb);
    design.loglik(beta, {}, grad.data());
    for (std::size_t q = 0; q < nb; ++q) {
      const double fd = testutil::central_diff(
          [&](double v) {
            std::vector<double> bb = beta;
            bb[q] = v;
            return design.loglik(bb, {}, nullptr);
          },
          beta[q], 1e-5 * std::max(1.0, beta[q]));
      c.require(testutil::rel_err(grad[q], fd) < 1e-5, "spline gradient vs FD beyond 1e-5");
    }
  }

  // Intensity vs finite-differenced cumulative intensity, all four kinds.
  SplineModel spl;
  spl.order = 3;
  spl.tau = 730.0;
  spl.interior_knots = {730.0 / 3.0, 2.0 * 730.0 / 3.0};
  spl.coefficients = {6, 16, 23, 11, 4};
  const std::vector<BcifModel> models = {
      ParametricModel{Family::MusaOkumoto, {0.5, 0.8}},
      ParametricModel{Family::Gompertz, {102.2539, 0.9975, 0.1623}},
      ParametricModel{Family::Weibull, {817.203, 0.0474, 0.6304}},
      spl,
  };
  RngStream trng(9);
  for (const auto& model : models) {
    for (int k = 0; k < 100; ++k) {
      const double t = 1.0 + 728.0 * trng.uniform01();
      const double fd =
          testutil::central_diff([&](double s) { return bcif_eval(model, s); }, t, 1e-4);
      const double an = bif_eval(model, t);
      if (std::abs(an) > 1e-12)
        c.require(testutil::rel_err(fd, an) < 1e-5, "bif vs finite-differenced bcif beyond 1e-5");
    }
  }
  c.finish();
}

void criterion_spline_basis() {
  Criterion c("4 spline basis suite");
  const std::vector<std::vector<double>> layouts = {
      {0, 0, 0, 730.0 / 3, 2 * 730.0 / 3, 730, 730, 730},
      {0, 0, 0, 50, 180, 420, 600, 730, 730, 730},
  };
  for (const auto& knots : layouts) {
    const int nb = static_cast<int>(knots.size()) - 3;
    const auto at0 = ispline_basis(3, knots, 0.0);
    for (int q = 0; q < nb; ++q)
      c.require(at0[static_cast<std::size_t>(q)] == 0.0, "I(0) != 0");

    const auto at_tau = ispline_basis(3, knots, 730.0);
    for (int q = 0; q < nb; ++q) {
      c.require(std::abs(at_tau[static_cast<std::size_t>(q)] - 1.0) < 1e-8, "I(tau) off 1");
      const double oracle = testutil::quad_panels(
          [&](double t) { return mspline_basis(3, knots, t)[static_cast<std::size_t>(q)]; },
          knots, 1e-11);
      c.require(std::abs(oracle - 1.0) < 1e-8, "quadrature of M basis off 1");
    }

    std::vector<double> prev(static_cast<std::size_t>(nb), 0.0);
    double prev_comb = 0.0;
    RngStream rng(3);
    std::vector<double> coef(static_cast<std::size_t>(nb));
    for (auto& v : coef) v = 10.0 * rng.uniform01();
    for (int t = 1; t <= 730; ++t) {
      const auto iv = ispline_basis(3, knots, t);
      double comb = 0.0;
      for (std::size_t q = 0; q < iv.size(); ++q) {
        if (iv[q] < prev[q]) c.require(false, "basis not monotone");
        comb += coef[q] * iv[q];
      }
      if (comb < prev_comb) c.require(false, "non-negative combination not monotone");
      prev = iv;
      prev_comb = comb;
    }
  }
  c.finish();
}

void criterion_frailty() {
  Criterion c("5 frailty limit, test size and power");
  Calendar cal;
  for (int l = 1; l <= 12; ++l) cal.month_end_days.push_back(30.0 * l);

  auto make_fleet = [&](int n_units, double rate, double phi, std::uint64_t seed) {
    Fleet f;
    f.calendar = cal;
    RngStream rng(derive_seed(0xacc5, seed));
    const int shape = phi > 0.0 ? static_cast<int>(std::lround(1.0 / phi)) : 0;
    for (int i = 0; i < n_units; ++i) {
      UnitHistory u;
      u.unit_id = "u" + std::to_string(i);
      u.daily_kmiles.assign(12, 0.05);
      const double mult = phi > 0.0 ? testutil::gamma_mean_one(rng, shape) : 1.0;
      for (std::size_t l = 0; l < 12; ++l) {
        const double lo = cal.month_start(l), hi = cal.month_end(l);
        const long long k = rng.poisson(mult * rate * 0.05 * (hi - lo));
        for (long long j = 0; j < k; ++j) u.event_days.push_back(rng.uniform(lo, hi));
      }
      std::sort(u.event_days.begin(), u.event_days.end());
      f.units.push_back(std::move(u));
    }
    return f;
  };

  // Marginal likelihood at phi = 1e-8 meets the plain NHPP likelihood.
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Fleet f = make_fleet(30, 0.35 + 0.03 * static_cast<double>(s), 0.0, s);
    const ParametricModel m{Family::MusaOkumoto, {0.01 + 0.001 * static_cast<double>(s), 0.5}};
    c.require(std::abs(marginal_log_likelihood(f, m, 1e-8) - log_likelihood(f, m)) < 1e-4,
              "phi -> 0 limit beyond 1e-4");
  }

  int size_rejections = 0;
  for (int r = 0; r < 200; ++r) {
    const Fleet f = make_fleet(100, 0.5, 0.0, 10000 + static_cast<std::uint64_t>(r));
    if (heterogeneity_lrt(f, Family::MusaOkumoto).p_value < 0.05) ++size_rejections;
  }
  c.require(size_rejections <= 16, "null rejection rate above 0.08 (" +
                                       std::to_string(size_rejections) + "/200)");

  int power_rejections = 0;
  for (int r = 0; r < 50; ++r) {
    const Fleet f = make_fleet(200, 0.5, 0.5, 20000 + static_cast<std::uint64_t>(r));
    if (heterogeneity_lrt(f, Family::MusaOkumoto).p_value < 0.05) ++power_rejections;
  }
  c.require(power_rejections >= 40, "power below 0.8 at phi = 0.5, n = 200 (" +
                                        std::to_string(power_rejections) + "/50)");
  c.finish();
}

void criterion_simulation() {
  Criterion c("6 simulation study, desk scale (N = 200, B = 500)");
  const auto scenarios = canonical_scenarios();

  auto desk = [&](int scenario_idx, int n_units, std::uint64_t seed) {
    ScenarioSpec spec = scenarios[static_cast<std::size_t>(scenario_idx)];
    spec.n_units = n_units;
    spec.n_repeats = 200;
    spec.n_bootstrap = 500;
    spec.seed = seed;
    spec.threads = g_threads;
    return run_scenario(spec);
  };

  const ScenarioMetrics s1_n200 = desk(0, 200, 61);
  std::cout << "       scenario 1, n=200: cp=" << s1_n200.cp
            << " acceptance=" << s1_n200.acceptance_prob << "\n";
  c.require(s1_n200.cp >= 0.88 && s1_n200.cp <= 0.98,
            "scenario 1, n = 200 coverage " + std::to_string(s1_n200.cp) +
                " outside [0.88, 0.98]");

  auto median_rmse = [](const ScenarioMetrics& m) {
    std::vector<double> vals;
    for (double v : m.rel_rmse)
      if (!std::isnan(v)) vals.push_back(v);
    std::sort(vals.begin(), vals.end());
    return vals[vals.size() / 2];
  };

  const ScenarioMetrics s1_n50 = desk(0, 50, 62);
  const ScenarioMetrics s1_n500 = desk(0, 500, 63);
  const double rmse50 = median_rmse(s1_n50), rmse500 = median_rmse(s1_n500);
  std::cout << "       scenario 1 RelRMSE medians: n=50 " << rmse50 << ", n=500 " << rmse500
            << "\n";
  c.require(rmse500 < rmse50, "RelRMSE did not decrease from n = 50 to n = 500");

  const ScenarioMetrics s3_n500 = desk(2, 500, 64);
  std::cout << "       acceptance at n=500: scenario 1 " << s1_n500.acceptance_prob
            << ", scenario 3 " << s3_n500.acceptance_prob << "\n";
  c.require(s3_n500.acceptance_prob <= s1_n500.acceptance_prob - 0.2,
            "scenario 3 acceptance not at least 0.2 below scenario 1");
  c.finish();
}

void criterion_real_data_aic(const std::string& dmv_dir) {
  Criterion c("7 AIC ordering on the real disengagement data");
  if (dmv_dir.empty() || !fs::exists(dmv_dir)) {
    c.finish(true, "DMV-derived CSVs not supplied; set --dmv-dir or RELREC_DMV_DIR");
    return;
  }
  struct Expect {
    const char* dir;
    Family best;
    int vehicles, events;
    double kmiles, rate;
    bool spline_wins;
  };
  const Expect expects[] = {
      {"waymo", Family::Gompertz, 123, 224, 2710.136, 0.083, true},
      {"cruise", Family::Gompertz, 304, 154, 1278.661, 0.120, true},
      {"ponyai", Family::Weibull, 23, 43, 190.871, 0.225, true},
      {"zoox", Family::MusaOkumoto, 32, 58, 97.780, 0.593, false},
  };
  for (const auto& e : expects) {
    const fs::path base = fs::path(dmv_dir) / e.dir;
    if (!fs::exists(base / "months.csv")) {
      c.require(false, std::string(e.dir) + ": months.csv missing under --dmv-dir");
      continue;
    }
    const Fleet fleet = ingest_csv((base / "months.csv").string(), (base / "events.csv").string(),
                                   (base / "exposure.csv").string());
    const FleetSummary s = summarize(fleet);
    if (s.n_vehicles != e.vehicles || s.n_events != e.events ||
        std::abs(s.total_kmiles - e.kmiles) > 5e-4 ||
        std::abs(s.events_per_kmile - e.rate) > 5e-4) {
      c.require(false, std::string(e.dir) + ": summary does not match the published totals");
      continue;
    }
    FitResult best_param;
    Family best_family = Family::MusaOkumoto;
    bool first = true;
    for (Family fam : {Family::MusaOkumoto, Family::Gompertz, Family::Weibull}) {
      const FitResult fit = fit_parametric(fleet, fam);
      if (first || fit.aic < best_param.aic) {
        best_param = fit;
        best_family = fam;
        first = false;
      }
    }
    c.require(best_family == e.best,
              std::string(e.dir) + ": best parametric is " + family_name(best_family) +
                  ", expected " + family_name(e.best));
    const FitResult spline = select_spline(fleet, default_candidate_b());
    if (e.spline_wins)
      c.require(spline.aic < best_param.aic,
                std::string(e.dir) + ": spline AIC does not beat the best parametric");
  }
  c.finish();
}

void criterion_determinism(const std::string& cli) {
  Criterion c("8 seeded commands re-run byte-identically");
  if (cli.empty()) {
    c.require(false, "--cli not supplied");
    c.finish();
    return;
  }
  const fs::path dir = fs::temp_directory_path() / "relrec_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);

  {
    std::ofstream m(dir / "months.csv");
    m << "month_index,end_day\n";
    const Fleet fixture = testutil::totals_fleet(25, 140, 80, 160.0);
    for (std::size_t l = 0; l < fixture.calendar.n_months(); ++l)
      m << (l + 1) << ',' << fixture.calendar.month_end(l) << "\n";
    std::ofstream ev(dir / "events.csv");
    ev << "unit_id,day\n";
    std::ofstream ex(dir / "exposure.csv");
    ex << "unit_id,month_index,daily_kmiles\n";
    for (const auto& u : fixture.units) {
      for (double d : u.event_days) ev << u.unit_id << ',' << d << "\n";
      for (std::size_t l = 0; l < u.daily_kmiles.size(); ++l)
        if (u.daily_kmiles[l] > 0.0)
          ex << u.unit_id << ',' << (l + 1) << ',' << u.daily_kmiles[l] << "\n";
    }
  }

  auto shell = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  auto hash_dir = [&](const fs::path& p) {
    std::map<std::string, std::uint64_t> hashes;
    for (const auto& entry : fs::directory_iterator(p))
      hashes[entry.path().filename().string()] = fnv1a(slurp(entry.path()));
    return hashes;
  };

  const std::string in = " --months " + (dir / "months.csv").string() + " --events " +
                         (dir / "events.csv").string() + " --exposure " +
                         (dir / "exposure.csv").string();
  c.require(shell("ingest" + in + " --out " + (dir / "i1").string()) == 0, "ingest run 1 failed");
  c.require(shell("ingest" + in + " --out " + (dir / "i2").string()) == 0, "ingest run 2 failed");
  c.require(hash_dir(dir / "i1") == hash_dir(dir / "i2"), "ingest outputs differ");

  const std::string archive = " --archive " + (dir / "i1/fleet.json").string();
  for (const char* spec : {"fit --family auto", "scb --B 200 --alpha 0.1 --seed 7",
                           "simulate --scenario 1 --n 20 --repeats 3 --B 40 --seed 5"}) {
    const bool needs_archive = std::string(spec).rfind("simulate", 0) != 0;
    const std::string common = needs_archive ? archive : "";
    const std::string run1 = std::string(spec) + common + " --out " + (dir / "r1").string();
    const std::string run2 = std::string(spec) + common + " --out " + (dir / "r2").string();
    fs::remove_all(dir / "r1");
    fs::remove_all(dir / "r2");
    c.require(shell(run1) == 0, std::string(spec) + ": run 1 failed");
    c.require(shell(run2) == 0, std::string(spec) + ": run 2 failed");
    c.require(hash_dir(dir / "r1") == hash_dir(dir / "r2"),
              std::string(spec) + ": outputs differ between reruns");
  }
  fs::remove_all(dir);
  c.finish();
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli, dmv_dir;
  if (const char* env = std::getenv("RELREC_DMV_DIR")) dmv_dir = env;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cli" && i + 1 < argc) cli = argv[++i];
    else if (arg == "--dmv-dir" && i + 1 < argc) dmv_dir = argv[++i];
    else if (arg == "--threads" && i + 1 < argc) g_threads = std::atoi(argv[++i]);
  }

  criterion_summary();
  criterion_constant_rate_mle();
  criterion_likelihood_suite();
  criterion_spline_basis();
  criterion_frailty();
  criterion_simulation();
  criterion_real_data_aic(dmv_dir);
  criterion_determinism(cli);

  if (g_failures == 0) {
    std::cout << "acceptance: all criteria passed\n";
    return 0;
  }
  std::cout << "acceptance: " << g_failures << " criteria failed\n";
  return 1;
}
