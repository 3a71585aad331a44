#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "relrec/dataset.hpp"
#include "relrec/estimation.hpp"
#include "relrec/frailty.hpp"
#include "relrec/models.hpp"

namespace relrec {

using json = nlohmann::json;

// ------------------------------- models ------------------------------------

inline json model_to_json(const BcifModel& model) {
  if (const auto* p = std::get_if<ParametricModel>(&model))
    return json{{"family", family_name(p->family)}, {"theta", p->theta}};
  const auto& s = std::get<SplineModel>(model);
  return json{{"family", "spline"},
              {"order", s.order},
              {"tau", s.tau},
              {"interior_knots", s.interior_knots},
              {"coefficients", s.coefficients}};
}

inline BcifModel model_from_json(const json& j) {
  const std::string family = j.at("family").get<std::string>();
  if (family == "spline") {
    SplineModel s;
    s.order = j.at("order").get<int>();
    s.tau = j.at("tau").get<double>();
    s.interior_knots = j.at("interior_knots").get<std::vector<double>>();
    s.coefficients = j.at("coefficients").get<std::vector<double>>();
    check_spline(s);
    return s;
  }
  ParametricModel p;
  p.family = family_from_name(family);
  p.theta = j.at("theta").get<std::vector<double>>();
  check_parametric(p);
  return p;
}

inline json fit_to_json(const FitResult& fit) {
  json j;
  if (const auto* p = std::get_if<ParametricModel>(&fit.model)) {
    j["model"] = family_name(p->family);
    j["theta"] = p->theta;
    j["knots"] = json::array();
  } else {
    const auto& s = std::get<SplineModel>(fit.model);
    j["model"] = "spline";
    j["coefficients"] = s.coefficients;
    j["knots"] = s.knot_sequence();
    j["order"] = s.order;
    j["tau"] = s.tau;
  }
  j["loglik"] = fit.loglik;
  j["df"] = fit.df;
  j["aic"] = fit.aic;
  j["converged"] = fit.converged;
  return j;
}

inline json frailty_to_json(const FrailtyFit& fit) {
  const auto& m = std::get<ParametricModel>(fit.base.model);
  return json{{"family", family_name(m.family)},
              {"theta", m.theta},
              {"phi", fit.phi},
              {"marginal_loglik", fit.marginal_loglik},
              {"lrt_statistic", fit.lrt_statistic},
              {"p_value", fit.p_value},
              {"phi_at_floor", fit.phi_at_floor}};
}

// ------------------------------- fleets ------------------------------------

inline json summary_to_json(const FleetSummary& s) {
  return json{{"n_vehicles", s.n_vehicles},
              {"active_months", s.active_months},
              {"active_months_per_vehicle", s.active_months_per_vehicle},
              {"n_events", s.n_events},
              {"total_kmiles", s.total_kmiles},
              {"events_per_kmile", s.events_per_kmile}};
}

inline json fleet_to_json(const Fleet& fleet) {
  json units = json::array();
  for (const auto& u : fleet.units)
    units.push_back(json{{"unit_id", u.unit_id},
                         {"event_days", u.event_days},
                         {"daily_kmiles", u.daily_kmiles}});
  return json{{"format", "relrec-fleet-v1"},
              {"month_end_days", fleet.calendar.month_end_days},
              {"units", units},
              {"summary", summary_to_json(summarize(fleet))}};
}

inline Fleet fleet_from_json(const json& j) {
  if (j.value("format", "") != std::string("relrec-fleet-v1"))
    throw std::runtime_error("not a relrec fleet archive (missing format tag)");
  Fleet fleet;
  fleet.calendar.month_end_days = j.at("month_end_days").get<std::vector<double>>();
  for (const auto& ju : j.at("units")) {
    UnitHistory u;
    u.unit_id = ju.at("unit_id").get<std::string>();
    u.event_days = ju.at("event_days").get<std::vector<double>>();
    u.daily_kmiles = ju.at("daily_kmiles").get<std::vector<double>>();
    fleet.units.push_back(std::move(u));
  }
  return fleet;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open file");
  return json::parse(in);
}

}  // namespace relrec
