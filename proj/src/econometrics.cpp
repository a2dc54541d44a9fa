#include "agw/econometrics.hpp"

#include <set>
#include <unordered_map>

#include "agw/csv.hpp"

namespace agw {

std::string spec_name(const RegressionSpec& spec) {
  std::string name = spec.form == ModelForm::Linear ? "linear" : "quad";
  if (spec.fixed_effects == FixedEffects::HouseholdYear) name += "_fe";
  if (spec.controls) name += "_ctrl";
  return name;
}

RegressionSpec parse_spec(std::string_view name) {
  name = trim(name);
  for (ModelForm form : {ModelForm::Linear, ModelForm::Quadratic})
    for (FixedEffects fe : {FixedEffects::None, FixedEffects::HouseholdYear})
      for (bool controls : {false, true}) {
        const RegressionSpec s{form, fe, controls};
        if (spec_name(s) == name) return s;
      }
  throw Error(ErrorCode::InvalidConfig, "unknown specification '" + std::string(name) + "'");
}

std::vector<RegressionSpec> canonical_specs() {
  std::vector<RegressionSpec> out;
  for (ModelForm form : {ModelForm::Linear, ModelForm::Quadratic}) {
    out.push_back({form, FixedEffects::None, false});
    out.push_back({form, FixedEffects::HouseholdYear, false});
    out.push_back({form, FixedEffects::HouseholdYear, true});
  }
  return out;
}

Design<double> build_design(const MergedPanel& panel, const RegressionSpec& spec, Outcome outcome) {
  if (panel.selections.empty()) throw Error(ErrorCode::MissingColumn, "no weather column selected");
  if (panel.columns.size() != panel.selections.size())
    throw Error(ErrorCode::MissingColumn, "weather columns do not match the selection");
  if (panel.rows.empty()) {
    const bool missing = !panel.drops.empty() && std::all_of(panel.drops.begin(), panel.drops.end(), [](const auto& d) {
      return d.reason == "missing_value";
    });
    throw Error(missing ? ErrorCode::AllMissingMetric : ErrorCode::NoData, "merged panel has no rows");
  }
  for (std::size_t k = 0; k < panel.columns.size(); ++k) {
    const auto& col = panel.columns[k];
    if (col.size() != panel.rows.size())
      throw Error(ErrorCode::MissingColumn, "column " + panel.selections[k].label() + " has the wrong length");
    if (std::none_of(col.begin(), col.end(), [](double v) { return std::isfinite(v); }))
      throw Error(ErrorCode::AllMissingMetric, panel.selections[k].label() + " is entirely missing");
  }

  // rows with a non-finite weather value cannot enter the design
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < panel.rows.size(); ++i) {
    bool ok = true;
    for (const auto& col : panel.columns) ok = ok && std::isfinite(col[i]);
    if (ok) rows.push_back(i);
  }

  const bool fe = spec.fixed_effects == FixedEffects::HouseholdYear;
  std::set<int> year_set;
  for (auto i : rows) year_set.insert(panel.rows[i].year);
  const std::vector<int> years(year_set.begin(), year_set.end());

  Design<double> d;
  d.absorb_households = fe;
  if (!fe) d.names.push_back("intercept");
  for (const auto& sel : panel.selections) {
    d.weather_terms.push_back(static_cast<Eigen::Index>(d.names.size()));
    d.names.push_back(std::string(metric_name(sel.metric)));
    if (spec.form == ModelForm::Quadratic) {
      d.weather_terms.push_back(static_cast<Eigen::Index>(d.names.size()));
      d.names.push_back(std::string(metric_name(sel.metric)) + "^2");
    }
  }
  if (spec.controls)
    for (auto name : kInputNames) d.names.emplace_back(name);
  if (fe)
    for (std::size_t t = 1; t < years.size(); ++t) d.names.push_back("year_" + std::to_string(years[t]));

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto k = static_cast<Eigen::Index>(d.names.size());
  d.y.resize(n);
  d.X.resize(n, k);
  std::unordered_map<std::string, int> hh_index;
  hh_index.reserve(rows.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t i = rows[static_cast<std::size_t>(r)];
    const auto& row = panel.rows[i];
    d.y(r) = ihs(row.outcome(outcome));
    Eigen::Index c = 0;
    if (!fe) d.X(r, c++) = 1.0;
    for (std::size_t s = 0; s < panel.selections.size(); ++s) {
      const double raw = panel.columns[s][i];
      const double w = uses_ihs(panel.selections[s].metric) ? ihs(raw) : raw;
      d.X(r, c++) = w;
      if (spec.form == ModelForm::Quadratic) d.X(r, c++) = w * w;
    }
    if (spec.controls)
      for (double x : row.transformed_inputs()) d.X(r, c++) = x;
    if (fe)
      for (std::size_t t = 1; t < years.size(); ++t) d.X(r, c++) = row.year == years[t] ? 1.0 : 0.0;
    const auto key = row.country + "|" + row.hh_id;
    const auto [it, inserted] = hh_index.emplace(key, static_cast<int>(hh_index.size()));
    d.household.push_back(it->second);
    d.cluster.push_back(it->second);
  }
  return d;
}

}  // namespace agw
