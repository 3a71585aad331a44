#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "relrec/csv.hpp"
#include "relrec/frailty.hpp"
#include "relrec/inference.hpp"
#include "relrec/serialize.hpp"
#include "relrec/simulation.hpp"

namespace relrec {

// ---------------------------------------------------------------------------
// Command layer. Each command is a pure function of (input files, RunConfig):
// re-running one writes byte-identical artifacts. The canonical CSV formats
// are defined here.
//
//   months.csv    month_index,end_day                       (global calendar)
//   events.csv    unit_id,day                               (integer days)
//   exposure.csv  unit_id,month_index,miles,days_in_month
//              or unit_id,month_index,daily_kmiles          (by header)
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string months_csv, events_csv, exposure_csv;
  std::string archive;          // normalized fleet archive (json)
  std::string out_dir = ".";
  std::string family = "auto";  // musa-okumoto | gompertz | weibull | spline | auto
  std::string knots = "auto";   // auto | integer interior-knot count
  int bootstrap_b = 2000;
  double alpha = 0.05;
  double alpha_p = 0.05;
  double t_lower = -1.0, t_upper = -1.0;  // < 0: [first event day, last event day]
  std::uint64_t seed = 0;
  int threads = 0;
  bool boundary_mix = false;
  bool freeze_knots = false;
  int scenario = 1;
  int n_units = 200;
  int repeats = 200;
};

// ------------------------------ ingestion ----------------------------------

inline Calendar read_months(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_idx = t.column("month_index"), c_end = t.column("end_day");
  if (c_idx < 0 || c_end < 0)
    throw std::runtime_error(path + ": header must be month_index,end_day");
  std::map<long long, double> by_index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const long long idx = csv_integer(t, r, c_idx);
    if (by_index.count(idx))
      throw std::runtime_error(path + ":" + std::to_string(t.line_numbers[r]) +
                               ": duplicate month_index " + std::to_string(idx));
    by_index[idx] = csv_number(t, r, c_end);
  }
  if (by_index.empty()) throw std::runtime_error(path + ": no months");
  Calendar cal;
  long long expect = 1;
  for (const auto& [idx, end] : by_index) {
    if (idx != expect)
      throw std::runtime_error(path + ": month_index values must be 1..n without gaps");
    cal.month_end_days.push_back(end);
    ++expect;
  }
  return cal;
}

inline Fleet ingest_csv(const std::string& months_path, const std::string& events_path,
                        const std::string& exposure_path) {
  Fleet fleet;
  fleet.calendar = read_months(months_path);
  const std::size_t n_months = fleet.calendar.n_months();

  const CsvTable ex = read_csv(exposure_path);
  const int c_unit = ex.column("unit_id"), c_month = ex.column("month_index");
  const bool raw_miles = ex.has_column("miles") && ex.has_column("days_in_month");
  const bool daily = ex.has_column("daily_kmiles");
  if (c_unit < 0 || c_month < 0 || (!raw_miles && !daily))
    throw std::runtime_error(exposure_path +
                             ": header must be unit_id,month_index,miles,days_in_month or "
                             "unit_id,month_index,daily_kmiles");

  std::map<std::string, std::size_t> unit_index;
  for (std::size_t r = 0; r < ex.rows.size(); ++r) {
    const std::string& id = ex.rows[r][static_cast<std::size_t>(c_unit)];
    const long long month = csv_integer(ex, r, c_month);
    if (month < 1 || month > static_cast<long long>(n_months))
      throw std::runtime_error(exposure_path + ":" + std::to_string(ex.line_numbers[r]) +
                               ": month_index " + std::to_string(month) +
                               " outside the calendar");
    auto [it, inserted] = unit_index.try_emplace(id, fleet.units.size());
    if (inserted) {
      UnitHistory u;
      u.unit_id = id;
      u.daily_kmiles.assign(n_months, 0.0);
      fleet.units.push_back(std::move(u));
    }
    double kmiles_per_day;
    if (daily) {
      kmiles_per_day = csv_number(ex, r, ex.column("daily_kmiles"));
    } else {
      const double miles = csv_number(ex, r, ex.column("miles"));
      const double days = csv_number(ex, r, ex.column("days_in_month"));
      if (!(days > 0.0))
        throw std::runtime_error(exposure_path + ":" + std::to_string(ex.line_numbers[r]) +
                                 ": days_in_month must be positive");
      kmiles_per_day = miles / 1000.0 / days;
    }
    auto& slot = fleet.units[it->second].daily_kmiles[static_cast<std::size_t>(month - 1)];
    if (slot != 0.0)
      throw std::runtime_error(exposure_path + ":" + std::to_string(ex.line_numbers[r]) +
                               ": duplicate exposure for unit '" + id + "' month " +
                               std::to_string(month));
    slot = kmiles_per_day;
  }

  const CsvTable ev = read_csv(events_path);
  const int e_unit = ev.column("unit_id"), e_day = ev.column("day");
  if (e_unit < 0 || e_day < 0)
    throw std::runtime_error(events_path + ": header must be unit_id,day");
  for (std::size_t r = 0; r < ev.rows.size(); ++r) {
    const std::string& id = ev.rows[r][static_cast<std::size_t>(e_unit)];
    const auto it = unit_index.find(id);
    if (it == unit_index.end())
      throw std::runtime_error(events_path + ":" + std::to_string(ev.line_numbers[r]) +
                               ": event references unknown unit_id '" + id + "'");
    fleet.units[it->second].event_days.push_back(
        static_cast<double>(csv_integer(ev, r, e_day)));
  }
  for (auto& u : fleet.units) std::sort(u.event_days.begin(), u.event_days.end());
  return fleet;
}

// ------------------------------ helpers ------------------------------------

namespace detail {

inline std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out_dir);
  return std::filesystem::path(cfg.out_dir) / name;
}

inline Fleet load_fleet(const RunConfig& cfg) {
  if (cfg.archive.empty())
    throw std::runtime_error("this command needs --archive (produce one with 'ingest')");
  Fleet fleet = fleet_from_json(read_json_file(cfg.archive));
  const auto violations = validate(fleet);
  if (!violations.empty()) {
    std::ostringstream os;
    os << cfg.archive << ": archive fails validation: " << violations.front().what;
    throw std::runtime_error(os.str());
  }
  return fleet;
}

inline std::pair<double, double> event_range(const Fleet& fleet) {
  double lo = fleet.calendar.tau(), hi = 0.0;
  bool any = false;
  for (const auto& u : fleet.units)
    for (double d : u.event_days) {
      lo = std::min(lo, d);
      hi = std::max(hi, d);
      any = true;
    }
  if (!any) throw std::runtime_error("fleet has no events");
  return {lo, hi};
}

inline std::pair<double, double> resolve_t_range(const RunConfig& cfg, const Fleet& fleet) {
  auto [lo, hi] = event_range(fleet);
  if (cfg.t_lower >= 0.0) lo = cfg.t_lower;
  if (cfg.t_upper >= 0.0) hi = cfg.t_upper;
  return {lo, hi};
}

// Rows over the full grid; band columns may cover only a subrange.
inline void write_band_csv(const std::string& path, std::span<const double> grid,
                           std::span<const double> estimate, const Band* pci, const Band* scb,
                           std::span<const double> expected, std::span<const double> observed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "t,estimate,pci_lo,pci_hi,scb_lo,scb_hi,expected_events,observed_events\n";
  auto offset_of = [&](const Band& band) {
    return static_cast<std::size_t>(
        std::lower_bound(grid.begin(), grid.end(), band.grid.front()) - grid.begin());
  };
  const std::size_t pci_off = pci ? offset_of(*pci) : 0;
  const std::size_t scb_off = scb ? offset_of(*scb) : 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out << format_number(grid[i]) << ',';
    out << (i < estimate.size() ? format_number(estimate[i]) : "") << ',';
    if (pci && i >= pci_off && i - pci_off < pci->grid.size()) {
      out << format_number(pci->lower[i - pci_off]) << ','
          << format_number(pci->upper[i - pci_off]) << ',';
    } else {
      out << ",,";
    }
    if (scb && i >= scb_off && i - scb_off < scb->grid.size()) {
      out << format_number(scb->lower[i - scb_off]) << ','
          << format_number(scb->upper[i - scb_off]) << ',';
    } else {
      out << ",,";
    }
    out << (i < expected.size() ? format_number(expected[i]) : "") << ',';
    out << (i < observed.size() ? format_number(observed[i]) : "");
    out << '\n';
  }
}

inline FitResult fit_family(const Fleet& fleet, const RunConfig& cfg, const std::string& name) {
  if (name == "spline") {
    if (cfg.knots == "auto") {
      const auto cands = default_candidate_b();
      return select_spline(fleet, cands);
    }
    int b = 0;
    try {
      b = std::stoi(cfg.knots);
    } catch (const std::exception&) {
      throw std::runtime_error("--knots must be 'auto' or an interior-knot count, got '" +
                               cfg.knots + "'");
    }
    return fit_spline(fleet, b);
  }
  return fit_parametric(fleet, family_from_name(name));
}

inline FitResult best_parametric(const Fleet& fleet) {
  std::optional<FitResult> best;
  for (const char* name : {"musa-okumoto", "gompertz", "weibull"}) {
    FitResult fit = fit_parametric(fleet, family_from_name(name));
    if (!best || fit.aic < best->aic) best = std::move(fit);
  }
  return *best;
}

inline std::string fit_label(const FitResult& fit) {
  if (const auto* p = std::get_if<ParametricModel>(&fit.model)) return family_name(p->family);
  const auto& s = std::get<SplineModel>(fit.model);
  return "spline(b=" + std::to_string(s.interior_knots.size()) + ")";
}

}  // namespace detail

// ------------------------------ commands -----------------------------------

inline int cmd_ingest(const RunConfig& cfg, std::ostream& log = std::cout) {
  Fleet fleet;
  if (!cfg.archive.empty()) {
    fleet = fleet_from_json(read_json_file(cfg.archive));
  } else {
    if (cfg.months_csv.empty() || cfg.events_csv.empty() || cfg.exposure_csv.empty())
      throw std::runtime_error("ingest needs --months, --events and --exposure (or --archive)");
    fleet = ingest_csv(cfg.months_csv, cfg.events_csv, cfg.exposure_csv);
  }

  const auto violations = validate(fleet);
  if (!violations.empty()) {
    for (const auto& v : violations)
      log << "violation: unit='" << v.unit_id << "' " << v.what << " (at "
          << format_number(v.location) << ")\n";
    log << violations.size() << " validation violation(s); archive not written\n";
    return 1;
  }

  const auto path = detail::out_path(cfg, "fleet.json");
  write_json_file(path.string(), fleet_to_json(fleet));
  const FleetSummary s = summarize(fleet);
  log << "vehicles: " << s.n_vehicles << "\n"
      << "active months: " << s.active_months << " (" << format_number(s.active_months_per_vehicle)
      << " per vehicle)\n"
      << "events: " << s.n_events << "\n"
      << "total k-miles: " << format_number(s.total_kmiles) << "\n"
      << "events per k-mile: " << format_number(s.events_per_kmile) << "\n"
      << "archive: " << path.string() << "\n";
  return 0;
}

inline int cmd_fit(const RunConfig& cfg, std::ostream& log = std::cout) {
  const Fleet fleet = detail::load_fleet(cfg);
  if (cfg.family != "auto") {
    const FitResult fit = detail::fit_family(fleet, cfg, cfg.family);
    write_json_file(detail::out_path(cfg, "fit.json").string(), fit_to_json(fit));
    log << detail::fit_label(fit) << ": loglik=" << format_number(fit.loglik)
        << " df=" << fit.df << " aic=" << format_number(fit.aic) << "\n";
    return 0;
  }

  std::vector<FitResult> fits;
  for (const char* name : {"musa-okumoto", "gompertz", "weibull"})
    fits.push_back(fit_parametric(fleet, family_from_name(name)));
  fits.push_back(select_spline(fleet, default_candidate_b()));

  json out = json::array();
  const FitResult* best_param = nullptr;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    out.push_back(fit_to_json(fits[i]));
    if (i < 3 && (!best_param || fits[i].aic < best_param->aic)) best_param = &fits[i];
  }
  log << "model            loglik        df  aic\n";
  for (const auto& fit : fits) {
    std::ostringstream name;
    name << detail::fit_label(fit);
    log << name.str() << std::string(name.str().size() < 17 ? 17 - name.str().size() : 1, ' ')
        << format_number(fit.loglik) << "  " << fit.df << "  " << format_number(fit.aic) << "\n";
  }
  log << "best parametric: " << detail::fit_label(*best_param) << "\n";
  write_json_file(detail::out_path(cfg, "fits.json").string(),
                  json{{"fits", out},
                       {"best_parametric", detail::fit_label(*best_param)},
                       {"spline_beats_best_parametric", fits[3].aic < best_param->aic}});
  return 0;
}

inline int cmd_bootstrap(const RunConfig& cfg, std::ostream& log = std::cout) {
  const Fleet fleet = detail::load_fleet(cfg);
  BootstrapOptions opts;
  opts.threads = cfg.threads;
  opts.reselect_knots = !cfg.freeze_knots;
  const auto cands = default_candidate_b();
  const BootstrapRun run = bootstrap_with_point(fleet, cfg.bootstrap_b, cands, cfg.seed, opts);
  const Band pci = pointwise_band(run.ensemble, cfg.alpha_p);

  std::map<int, int> b_counts;
  for (int b : run.ensemble.selected_b) ++b_counts[b];
  json counts = json::object();
  for (const auto& [b, c] : b_counts) counts[std::to_string(b)] = c;
  write_json_file(detail::out_path(cfg, "ensemble.json").string(),
                  json{{"B", cfg.bootstrap_b},
                       {"seed", cfg.seed},
                       {"alpha_p", cfg.alpha_p},
                       {"point_b", run.point_b},
                       {"selected_b_counts", counts},
                       {"point_fit", fit_to_json(run.point_fit)}});
  detail::write_band_csv(detail::out_path(cfg, "band.csv").string(), run.ensemble.grid,
                         run.point_curve, &pci, nullptr, {}, {});
  log << "bootstrap: B=" << cfg.bootstrap_b << " point b=" << run.point_b << "\n";
  return 0;
}

inline int cmd_scb(const RunConfig& cfg, std::ostream& log = std::cout) {
  const Fleet fleet = detail::load_fleet(cfg);
  BootstrapOptions opts;
  opts.threads = cfg.threads;
  opts.reselect_knots = !cfg.freeze_knots;
  const auto cands = default_candidate_b();
  const BootstrapRun run = bootstrap_with_point(fleet, cfg.bootstrap_b, cands, cfg.seed, opts);
  const auto [t_lo, t_hi] = detail::resolve_t_range(cfg, fleet);
  const Band pci = pointwise_band(run.ensemble, cfg.alpha_p);
  const Band scb = calibrate_scb(run.ensemble, cfg.alpha, t_lo, t_hi);

  json summary{{"B", cfg.bootstrap_b},
               {"seed", cfg.seed},
               {"alpha", cfg.alpha},
               {"alpha_p", cfg.alpha_p},
               {"alpha_c", scb.achieved_alpha},
               {"t_lower", t_lo},
               {"t_upper", t_hi},
               {"point_b", run.point_b}};
  if (cfg.family != "auto" && cfg.family != "spline") {
    const FitResult pfit = fit_parametric(fleet, family_from_name(cfg.family));
    std::vector<double> curve(scb.grid.size());
    for (std::size_t j = 0; j < scb.grid.size(); ++j)
      curve[j] = bcif_eval(pfit.model, scb.grid[j]);
    summary["parametric_family"] = cfg.family;
    summary["parametric_accepted"] = curve_within_band(scb, curve);
  }
  write_json_file(detail::out_path(cfg, "scb.json").string(), summary);
  detail::write_band_csv(detail::out_path(cfg, "band.csv").string(), run.ensemble.grid,
                         run.point_curve, &pci, &scb, {}, {});
  log << "scb: alpha_c=" << format_number(scb.achieved_alpha) << " on ["
      << format_number(t_lo) << ", " << format_number(t_hi) << "]\n";
  return 0;
}

inline int cmd_frailty(const RunConfig& cfg, std::ostream& log = std::cout) {
  const Fleet fleet = detail::load_fleet(cfg);
  Family family;
  if (cfg.family == "auto") {
    family = std::get<ParametricModel>(detail::best_parametric(fleet).model).family;
  } else if (cfg.family == "spline") {
    throw std::runtime_error("the frailty model applies to parametric families only");
  } else {
    family = family_from_name(cfg.family);
  }
  const FrailtyFit fit = heterogeneity_lrt(fleet, family, cfg.boundary_mix);
  write_json_file(detail::out_path(cfg, "frailty.json").string(), frailty_to_json(fit));
  log << "frailty: family=" << family_name(family) << " phi=" << format_number(fit.phi)
      << " lrt=" << format_number(fit.lrt_statistic)
      << " p=" << format_number(fit.p_value) << "\n";
  return 0;
}

inline int cmd_expected(const RunConfig& cfg, std::ostream& log = std::cout) {
  const Fleet fleet = detail::load_fleet(cfg);
  const std::string family = cfg.family == "auto" ? "spline" : cfg.family;
  const FitResult fit = detail::fit_family(fleet, cfg, family);
  const auto grid = default_grid(fleet.calendar.tau());
  const ExpectedObservedCurve curve = expected_events_curve(fleet, fit.model, grid);
  detail::write_band_csv(detail::out_path(cfg, "expected.csv").string(), grid, {}, nullptr,
                         nullptr, curve.expected, curve.observed);
  log << "expected-events curve written for " << detail::fit_label(fit) << "\n";
  return 0;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& log = std::cout) {
  if (cfg.scenario < 1 || cfg.scenario > 3)
    throw std::runtime_error("scenario must be 1, 2 or 3");
  ScenarioSpec spec = canonical_scenarios()[static_cast<std::size_t>(cfg.scenario - 1)];
  spec.n_units = cfg.n_units;
  spec.n_repeats = cfg.repeats;
  spec.n_bootstrap = cfg.bootstrap_b;
  spec.seed = cfg.seed;
  spec.alpha = cfg.alpha;
  spec.threads = cfg.threads;
  const ScenarioMetrics metrics = run_scenario(spec);

  {
    std::ofstream out(detail::out_path(cfg, "scenario_repeats.csv"), std::ios::binary);
    out << "scenario,n,repeat,covered,accepted,selected_b\n";
    for (const auto& rec : metrics.repeats) {
      out << cfg.scenario << ',' << cfg.n_units << ',' << rec.repeat << ',';
      if (rec.excluded)
        out << ",,";
      else
        out << (rec.covered ? 1 : 0) << ',' << (rec.accepted ? 1 : 0) << ',' << rec.selected_b;
      out << '\n';
    }
  }
  {
    std::ofstream out(detail::out_path(cfg, "rel_rmse.csv"), std::ios::binary);
    out << "scenario,n,t,rel_rmse\n";
    for (std::size_t i = 0; i < metrics.grid.size(); ++i) {
      if (std::isnan(metrics.rel_rmse[i])) continue;
      out << cfg.scenario << ',' << cfg.n_units << ',' << format_number(metrics.grid[i]) << ','
          << format_number(metrics.rel_rmse[i]) << '\n';
    }
  }
  write_json_file(detail::out_path(cfg, "scenario.json").string(),
                  json{{"scenario", cfg.scenario},
                       {"n_units", cfg.n_units},
                       {"n_repeats", cfg.repeats},
                       {"B", cfg.bootstrap_b},
                       {"seed", cfg.seed},
                       {"alpha", cfg.alpha},
                       {"cp", metrics.cp},
                       {"acceptance_prob", metrics.acceptance_prob},
                       {"n_excluded", metrics.n_excluded}});
  log << "scenario " << cfg.scenario << ": cp=" << format_number(metrics.cp)
      << " acceptance=" << format_number(metrics.acceptance_prob)
      << " excluded=" << metrics.n_excluded << "\n";
  return 0;
}

}  // namespace relrec
