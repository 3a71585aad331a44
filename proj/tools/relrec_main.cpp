// relrec: reliability analysis of window-observed recurrent events with
// time-varying exposure. Subcommands cover ingestion, model fitting,
// bootstrap bands, the frailty heterogeneity test, simulation, and
// expected-vs-observed curves.

#include <iostream>

#include <CLI11.hpp>

#include "relrec/cli.hpp"

namespace {

void add_common(CLI::App* cmd, relrec::RunConfig& cfg) {
  cmd->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "RNG seed; a fixed seed makes the run reproducible")
      ->capture_default_str();
  cmd->add_option("--threads", cfg.threads, "worker threads (0 = all cores)")
      ->capture_default_str();
}

void add_archive(CLI::App* cmd, relrec::RunConfig& cfg) {
  cmd->add_option("--archive", cfg.archive, "normalized fleet archive from 'ingest'")
      ->required();
}

void add_family(CLI::App* cmd, relrec::RunConfig& cfg) {
  cmd->add_option("--family", cfg.family,
                  "musa-okumoto | gompertz | weibull | spline | auto")
      ->capture_default_str();
  cmd->add_option("--knots", cfg.knots, "interior knot count for spline fits, or 'auto'")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reliability analysis of window-observed recurrent events"};
  app.require_subcommand(1);
  relrec::RunConfig cfg;

  auto* ingest = app.add_subcommand("ingest", "read CSVs, validate, write a fleet archive");
  ingest->add_option("--months", cfg.months_csv, "months.csv (month_index,end_day)");
  ingest->add_option("--events", cfg.events_csv, "events.csv (unit_id,day)");
  ingest->add_option("--exposure", cfg.exposure_csv, "exposure.csv");
  ingest->add_option("--archive", cfg.archive, "re-ingest an existing archive");
  add_common(ingest, cfg);

  auto* fit = app.add_subcommand("fit", "maximum-likelihood fit of one family or all");
  add_archive(fit, cfg);
  add_family(fit, cfg);
  add_common(fit, cfg);

  auto* boot = app.add_subcommand("bootstrap", "fractional-random-weight bootstrap + PCIs");
  add_archive(boot, cfg);
  boot->add_option("--B", cfg.bootstrap_b, "bootstrap replicates")->capture_default_str();
  boot->add_option("--alpha-p", cfg.alpha_p, "pointwise interval level")->capture_default_str();
  boot->add_flag("--freeze-knots", cfg.freeze_knots,
                 "skip per-replicate knot re-selection (faster, off by default)");
  add_common(boot, cfg);

  auto* scb = app.add_subcommand("scb", "calibrated simultaneous confidence band");
  add_archive(scb, cfg);
  scb->add_option("--B", cfg.bootstrap_b, "bootstrap replicates")->capture_default_str();
  scb->add_option("--alpha", cfg.alpha, "simultaneous band level")->capture_default_str();
  scb->add_option("--alpha-p", cfg.alpha_p, "pointwise interval level")->capture_default_str();
  scb->add_option("--tl", cfg.t_lower, "band lower day (default: first event day)");
  scb->add_option("--tu", cfg.t_upper, "band upper day (default: last event day)");
  scb->add_flag("--freeze-knots", cfg.freeze_knots,
                "skip per-replicate knot re-selection (faster, off by default)");
  add_family(scb, cfg);
  add_common(scb, cfg);

  auto* frailty = app.add_subcommand("frailty", "gamma frailty fit and heterogeneity LRT");
  add_archive(frailty, cfg);
  frailty->add_flag("--boundary-mix", cfg.boundary_mix,
                    "use the 0.5 chi2_0 + 0.5 chi2_1 boundary mixture for the p-value");
  add_family(frailty, cfg);
  add_common(frailty, cfg);

  auto* expected = app.add_subcommand("expected", "expected vs observed cumulative events");
  add_archive(expected, cfg);
  add_family(expected, cfg);
  add_common(expected, cfg);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo scenario study");
  simulate->add_option("--scenario", cfg.scenario, "scenario 1, 2 or 3")->capture_default_str();
  simulate->add_option("--n", cfg.n_units, "units per simulated fleet")->capture_default_str();
  simulate->add_option("--repeats", cfg.repeats, "simulated datasets")->capture_default_str();
  simulate->add_option("--B", cfg.bootstrap_b, "bootstrap replicates per repeat")
      ->capture_default_str();
  simulate->add_option("--alpha", cfg.alpha, "simultaneous band level")->capture_default_str();
  add_common(simulate, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest) return relrec::cmd_ingest(cfg);
    if (*fit) return relrec::cmd_fit(cfg);
    if (*boot) return relrec::cmd_bootstrap(cfg);
    if (*scb) return relrec::cmd_scb(cfg);
    if (*frailty) return relrec::cmd_frailty(cfg);
    if (*expected) return relrec::cmd_expected(cfg);
    if (*simulate) return relrec::cmd_simulate(cfg);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
