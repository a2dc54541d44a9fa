#include "agw/battery.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <thread>

#include "agw/csv.hpp"

namespace agw {

std::vector<CombinationBlock> default_combination_blocks() {
  using M = MetricId;
  return {
      {"mean_mean", {M::RainMean}, {M::TempMean}, true},
      {"median_median", {M::RainMedian}, {M::TempMedian}, false},
      {"total_gdd", {M::RainTotal}, {M::TempGdd}, true},
      {"ztotal_zgdd", {M::RainZTotal}, {M::TempZGdd}, false},
      {"two_moment", {M::RainMean, M::RainVariance}, {M::TempMean, M::TempVariance}, false},
      {"three_moment", {M::RainMean, M::RainVariance, M::RainSkew}, {M::TempMean, M::TempVariance, M::TempSkew}, false},
  };
}

SignificanceRule parse_rule(std::string_view text) {
  text = trim(text);
  if (text == "joint") return SignificanceRule::Joint;
  if (text == "linear") return SignificanceRule::Linear;
  if (text == "either") return SignificanceRule::Either;
  throw Error(ErrorCode::InvalidConfig, "unknown significance rule '" + std::string(text) + "'");
}

std::string RunKey::family() const {
  if (is_combination()) return "combo";
  return std::string(family_name(family_of(parse_metric(metric))));
}

namespace {

void require_nonempty(bool empty, const char* what) {
  if (empty) throw Error(ErrorCode::EmptyDimension, std::string("battery dimension '") + what + "' is empty");
}

bool block_allows(const CombinationBlock& b, const RegressionSpec& s) {
  return s.form == ModelForm::Linear || b.quadratic;
}

}  // namespace

std::vector<RunKey> enumerate_runs(const BatteryConfig& c) {
  require_nonempty(c.countries.empty(), "countries");
  require_nonempty(c.rain_products.empty() && c.temp_products.empty(), "products");
  require_nonempty(c.schemes.empty(), "schemes");
  require_nonempty(c.metrics.empty(), "metrics");
  require_nonempty(c.outcomes.empty(), "outcomes");
  require_nonempty(c.specs.empty(), "specs");

  std::vector<RunKey> keys;
  auto push = [&](RunKey k) {
    k.index = keys.size();
    keys.push_back(std::move(k));
  };
  for (const auto& country : c.countries) {
    for (MetricFamily fam : {MetricFamily::Rain, MetricFamily::Temp}) {
      const auto& products = fam == MetricFamily::Rain ? c.rain_products : c.temp_products;
      for (const auto& product : products)
        for (auto scheme : c.schemes)
          for (auto metric : c.metrics) {
            if (family_of(metric) != fam) continue;
            for (auto outcome : c.outcomes)
              for (const auto& spec : c.specs) {
                RunKey k;
                k.country = country;
                k.product = product;
                k.scheme = scheme;
                k.metric = std::string(metric_name(metric));
                k.outcome = outcome;
                k.spec = spec;
                k.selections = {{product, std::string(scheme_name(scheme)), metric}};
                push(std::move(k));
              }
          }
    }
  }
  if (keys.empty()) throw Error(ErrorCode::EmptyDimension, "no metric matches a configured product family");
  if (!c.combinations) return keys;

  for (const auto& country : c.countries)
    for (const auto& rp : c.rain_products)
      for (const auto& tp : c.temp_products)
        for (auto scheme : c.schemes)
          for (const auto& block : c.blocks)
            for (auto outcome : c.outcomes)
              for (const auto& spec : c.specs) {
                if (!block_allows(block, spec)) continue;
                RunKey k;
                k.country = country;
                k.product = rp + "+" + tp;
                k.scheme = scheme;
                k.metric = "combo:" + block.name;
                k.outcome = outcome;
                k.spec = spec;
                const std::string sname(scheme_name(scheme));
                for (auto m : block.rain) k.selections.push_back({rp, sname, m});
                for (auto m : block.temp) k.selections.push_back({tp, sname, m});
                push(std::move(k));
              }
  return keys;
}

std::size_t expected_run_count(const BatteryConfig& c) {
  std::size_t rain = 0, temp = 0;
  for (auto m : c.metrics) (family_of(m) == MetricFamily::Rain ? rain : temp)++;
  const std::size_t per_cell = c.schemes.size() * c.outcomes.size() * c.specs.size();
  std::size_t total = (rain * c.rain_products.size() + temp * c.temp_products.size()) * c.countries.size() * per_cell;
  if (c.combinations) {
    std::size_t block_specs = 0;
    for (const auto& b : c.blocks)
      for (const auto& s : c.specs) block_specs += block_allows(b, s) ? 1 : 0;
    total += c.countries.size() * c.rain_products.size() * c.temp_products.size() * c.schemes.size() *
             c.outcomes.size() * block_specs;
  }
  return total;
}

namespace {

ResultRow failed(const RunKey& key, const Error& e) {
  ResultRow row;
  row.key = key;
  row.status = std::string(code_name(e.code()));
  return row;
}

ResultRow fit_merged(const RunKey& key, const MergedPanel& merged) {
  ResultRow row;
  row.key = key;
  try {
    const auto design = build_design(merged, key.spec, key.outcome);
    const auto fit = fit_regression(design);
    const auto& terms = fit.weather_terms;
    // beta1: first weather term; beta2: squared term, or the first temperature term of a combination
    Eigen::Index second = -1;
    if (key.is_combination()) {
      const std::size_t stride = key.spec.form == ModelForm::Quadratic ? 2 : 1;
      for (std::size_t s = 0; s < key.selections.size(); ++s)
        if (family_of(key.selections[s].metric) == MetricFamily::Temp) {
          second = terms[s * stride];
          break;
        }
    } else if (key.spec.form == ModelForm::Quadratic) {
      second = terms[1];
    }
    row.beta1 = fit.beta(terms[0]);
    row.se1 = fit.se(terms[0]);
    row.p1 = fit.p(terms[0]);
    if (second >= 0) {
      row.beta2 = fit.beta(second);
      row.se2 = fit.se(second);
      row.p2 = fit.p(second);
    }
    row.p_joint = fit.p_joint;
    row.adj_r2 = fit.adj_r2;
    row.n = fit.n;
    row.g = fit.g;
  } catch (const Error& e) {
    return failed(key, e);
  }
  return row;
}

}  // namespace

ResultRow run_one(const RunKey& key, const std::vector<SurveyRow>& country_rows, const MetricTable& metrics) {
  try {
    return fit_merged(key, merge_weather(country_rows, metrics, key.selections));
  } catch (const Error& e) {
    return failed(key, e);
  }
}

std::vector<ResultRow> run_battery(const BatteryConfig& config, const std::vector<RunKey>& keys,
                                   const BatteryData& data) {
  if (data.survey == nullptr || data.metrics == nullptr || data.survey->empty())
    throw Error(ErrorCode::ProviderUnavailable, "battery needs a survey panel and a metric table");
  std::map<std::string, std::vector<SurveyRow>> by_country;
  for (const auto& r : *data.survey) by_country[r.country].push_back(r);
  const std::vector<SurveyRow> none;

  // consecutive keys with the same country and regressors share one merge
  std::vector<std::pair<std::size_t, std::size_t>> units;
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i + 1;
    while (j < keys.size() && keys[j].country == keys[i].country && keys[j].selections == keys[i].selections) ++j;
    units.emplace_back(i, j);
    i = j;
  }

  std::vector<ResultRow> results(keys.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t u = next.fetch_add(1); u < units.size(); u = next.fetch_add(1)) {
      const auto [first, last] = units[u];
      const auto it = by_country.find(keys[first].country);
      const auto& rows = it == by_country.end() ? none : it->second;
      try {
        const auto merged = merge_weather(rows, *data.metrics, keys[first].selections);
        for (std::size_t i = first; i < last; ++i) results[i] = fit_merged(keys[i], merged);
      } catch (const Error& e) {
        for (std::size_t i = first; i < last; ++i) results[i] = failed(keys[i], e);
      }
    }
  };
  const unsigned threads = std::max(1u, config.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return results;
}

std::vector<ResultRow> run_battery(const BatteryConfig& config, const BatteryData& data) {
  return run_battery(config, enumerate_runs(config), data);
}

// ---------------------------------------------------------------------------
// results.csv

namespace {

constexpr std::string_view kResultsHeader =
    "country,product,scheme,metric,outcome,spec,beta1,beta2,se1,se2,p1,p2,p_joint,adj_r2,n,g,status";

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << r.key.country << ',' << r.key.product << ',' << scheme_name(r.key.scheme) << ',' << r.key.metric << ','
        << outcome_name(r.key.outcome) << ',' << spec_name(r.key.spec) << ',' << format_double(r.beta1) << ','
        << format_double(r.beta2) << ',' << format_double(r.se1) << ',' << format_double(r.se2) << ','
        << format_double(r.p1) << ',' << format_double(r.p2) << ',' << format_double(r.p_joint) << ','
        << format_double(r.adj_r2) << ',' << r.n << ',' << r.g << ',' << r.status << '\n';
  }
}

std::string results_csv_text(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  write_results_csv(out, rows);
  return out.str();
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  const auto table = read_csv(path);
  const auto header = split(kResultsHeader, ',');
  std::vector<std::size_t> col;
  for (const auto& h : header) col.push_back(table.column(h));
  std::vector<ResultRow> rows;
  rows.reserve(table.rows.size());
  for (const auto& cells : table.rows) {
    ResultRow r;
    r.key.index = rows.size();
    r.key.country = cells[col[0]];
    r.key.product = cells[col[1]];
    r.key.scheme = parse_scheme(cells[col[2]]);
    r.key.metric = cells[col[3]];
    r.key.outcome = parse_outcome(cells[col[4]]);
    r.key.spec = parse_spec(cells[col[5]]);
    r.beta1 = parse_double(cells[col[6]]);
    r.beta2 = parse_double(cells[col[7]]);
    r.se1 = parse_double(cells[col[8]]);
    r.se2 = parse_double(cells[col[9]]);
    r.p1 = parse_double(cells[col[10]]);
    r.p2 = parse_double(cells[col[11]]);
    r.p_joint = parse_double(cells[col[12]]);
    r.adj_r2 = parse_double(cells[col[13]]);
    r.n = parse_int(cells[col[14]]);
    r.g = parse_int(cells[col[15]]);
    r.status = cells[col[16]];
    rows.push_back(std::move(r));
  }
  return rows;
}

double significance_p(const ResultRow& row, SignificanceRule rule) {
  if (row.key.is_combination()) return row.p_joint;
  if (row.key.spec.form == ModelForm::Linear) return row.p1;
  switch (rule) {
    case SignificanceRule::Joint: return row.p_joint;
    case SignificanceRule::Linear: return row.p1;
    case SignificanceRule::Either: return std::min(row.p1, row.p2);
  }
  return row.p_joint;
}

// ---------------------------------------------------------------------------
// aggregations

ProportionCI wilson_interval(std::size_t successes, std::size_t n, double z) {
  if (n == 0) throw Error(ErrorCode::EmptyGroup, "proportion of an empty group");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  // the bounds are exactly 0 and 1 at the extremes; rounding would otherwise cross p
  const double lower = successes == 0 ? 0.0 : std::clamp(center - half, 0.0, p);
  const double upper = successes == n ? 1.0 : std::clamp(center + half, p, 1.0);
  return {p, lower, upper};
}

std::string group_value(const ResultRow& row, std::string_view dim) {
  if (dim == "country") return row.key.country;
  if (dim == "product") return row.key.product;
  if (dim == "scheme") return std::string(scheme_name(row.key.scheme));
  if (dim == "metric") return row.key.metric;
  if (dim == "family") return row.key.family();
  if (dim == "outcome") return std::string(outcome_name(row.key.outcome));
  if (dim == "spec") return spec_name(row.key.spec);
  throw Error(ErrorCode::InvalidConfig, "unknown grouping dimension '" + std::string(dim) + "'");
}

namespace {

std::vector<std::string> group_of(const ResultRow& row, const std::vector<std::string>& dims) {
  std::vector<std::string> g;
  for (const auto& d : dims) g.push_back(group_value(row, d));
  return g;
}

// groups in order of first appearance, which follows key order
std::vector<std::pair<std::vector<std::string>, std::vector<const ResultRow*>>> grouped(
    const std::vector<ResultRow>& rows, const std::vector<std::string>& dims) {
  std::vector<std::pair<std::vector<std::string>, std::vector<const ResultRow*>>> out;
  std::map<std::vector<std::string>, std::size_t> where;
  for (const auto& r : rows) {
    auto g = group_of(r, dims);
    auto [it, inserted] = where.emplace(g, out.size());
    if (inserted) out.push_back({std::move(g), {}});
    out[it->second].second.push_back(&r);
  }
  return out;
}

std::string describe(const std::vector<std::string>& group) { return group.empty() ? "(all)" : join(group, "/"); }

}  // namespace

std::vector<ShareRow> significance_shares(const std::vector<ResultRow>& rows, const std::vector<std::string>& group_by,
                                          const std::vector<double>& levels, SignificanceRule rule) {
  if (rows.empty()) throw Error(ErrorCode::EmptyGroup, "no result rows");
  std::vector<ShareRow> out;
  for (const auto& [group, members] : grouped(rows, group_by)) {
    std::size_t ok = 0, errored = 0;
    for (const auto* r : members) (r->ok() ? ok : errored)++;
    if (ok == 0) throw Error(ErrorCode::EmptyGroup, "group " + describe(group) + " has no successful runs");
    for (double level : levels) {
      ShareRow s;
      s.group = group;
      s.level = level;
      s.n_ok = ok;
      s.n_error = errored;
      for (const auto* r : members)
        if (r->ok() && significance_p(*r, rule) < 1.0 - level) ++s.n_significant;
      s.ci = wilson_interval(s.n_significant, ok);
      out.push_back(std::move(s));
    }
  }
  return out;
}

EstimateCI estimate_ci(const ResultRow& row) {
  const double crit = row.g >= 2 ? t_critical<double>(0.95, static_cast<double>(row.g - 1)) : kNaN;
  return {row.beta1, row.beta1 - crit * row.se1, row.beta1 + crit * row.se1};
}

bool weak_test(const EstimateCI& a, const EstimateCI& b) { return a.estimate < b.lower || a.estimate > b.upper; }

bool strong_test(const EstimateCI& a, const EstimateCI& b) {
  return weak_test(a, b) && (a.upper < b.lower || b.upper < a.lower);
}

std::vector<DiffVerdict> reference_comparison(const std::vector<ResultRow>& rows, MetricId reference) {
  const std::string ref_name(metric_name(reference));
  const auto fam = family_of(reference);
  auto cell_of_row = [](const ResultRow& r) {
    return std::vector<std::string>{r.key.country, r.key.product, std::string(scheme_name(r.key.scheme)),
                                    std::string(outcome_name(r.key.outcome)), spec_name(r.key.spec)};
  };
  std::map<std::vector<std::string>, const ResultRow*> ref_rows;
  for (const auto& r : rows)
    if (r.key.metric == ref_name && r.ok()) ref_rows[cell_of_row(r)] = &r;

  std::vector<DiffVerdict> out;
  std::map<std::string, std::size_t> where;
  for (const auto& r : rows) {
    if (r.key.is_combination() || r.key.metric == ref_name) continue;
    if (family_of(parse_metric(r.key.metric)) != fam || !r.ok()) continue;
    const auto cell = cell_of_row(r);
    const auto ref = ref_rows.find(cell);
    if (ref == ref_rows.end())
      throw Error(ErrorCode::MissingReference, ref_name + " absent in cell " + describe(cell));
    auto [it, inserted] = where.emplace(r.key.metric, out.size());
    if (inserted) out.push_back({r.key.metric, ref_name});
    auto& v = out[it->second];
    const auto a = estimate_ci(r);
    const auto b = estimate_ci(*ref->second);
    ++v.cells;
    v.weak += weak_test(a, b) ? 1 : 0;
    v.strong += strong_test(a, b) ? 1 : 0;
  }
  if (out.empty() && ref_rows.empty()) throw Error(ErrorCode::MissingReference, ref_name + " has no ok rows");
  for (auto& v : out) {
    v.weak_majority = 2 * v.weak > v.cells;
    v.strong_majority = 2 * v.strong > v.cells;
  }
  return out;
}

bool RowFilter::matches(const ResultRow& row) const {
  for (const auto& [dim, value] : equals)
    if (group_value(row, dim) != value) return false;
  return true;
}

std::vector<SpecCurvePoint> spec_curve_export(const std::vector<ResultRow>& rows, const RowFilter& filter,
                                              SignificanceRule rule) {
  std::vector<const ResultRow*> kept;
  for (const auto& r : rows)
    if (r.ok() && filter.matches(r)) kept.push_back(&r);
  if (kept.empty()) throw Error(ErrorCode::EmptyGroup, "no ok rows pass the specification-curve filter");
  std::stable_sort(kept.begin(), kept.end(), [](const ResultRow* a, const ResultRow* b) {
    if (a->beta1 != b->beta1) return a->beta1 < b->beta1;
    return a->key.index < b->key.index;
  });
  std::vector<SpecCurvePoint> out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const double p = significance_p(*kept[i], rule);
    out.push_back({i + 1, *kept[i], estimate_ci(*kept[i]), p, p < 0.05});
  }
  return out;
}

std::vector<R2Summary> r2_summary(const std::vector<ResultRow>& rows, const std::vector<std::string>& group_by) {
  auto dims = group_by;
  if (std::find(dims.begin(), dims.end(), "spec") == dims.end()) dims.push_back("spec");
  std::vector<R2Summary> out;
  for (const auto& [group, members] : grouped(rows, dims)) {
    std::vector<double> v;
    for (const auto* r : members)
      if (r->ok() && std::isfinite(r->adj_r2)) v.push_back(r->adj_r2);
    if (v.size() < 2)
      throw Error(ErrorCode::EmptyGroup, "group " + describe(group) + " has fewer than 2 successful runs");
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    const double half = t_critical<double>(0.95, n - 1.0) * sd / std::sqrt(n);
    out.push_back({group, v.size(), mean, mean - half, mean + half});
  }
  return out;
}

void write_shares_csv(std::ostream& out, const std::vector<std::string>& group_by, const std::vector<ShareRow>& rows) {
  for (const auto& g : group_by) out << g << ',';
  out << "level,n_ok,n_error,n_significant,share,ci_lower,ci_upper\n";
  for (const auto& r : rows) {
    for (const auto& g : r.group) out << g << ',';
    out << format_double(r.level) << ',' << r.n_ok << ',' << r.n_error << ',' << r.n_significant << ','
        << format_double(r.ci.share) << ',' << format_double(r.ci.lower) << ',' << format_double(r.ci.upper) << '\n';
  }
}

void write_r2_csv(std::ostream& out, const std::vector<std::string>& group_by, const std::vector<R2Summary>& rows) {
  auto dims = group_by;
  if (std::find(dims.begin(), dims.end(), "spec") == dims.end()) dims.push_back("spec");
  for (const auto& g : dims) out << g << ',';
  out << "n,mean_adj_r2,ci_lower,ci_upper\n";
  for (const auto& r : rows) {
    for (const auto& g : r.group) out << g << ',';
    out << r.n << ',' << format_double(r.mean) << ',' << format_double(r.lower) << ',' << format_double(r.upper)
        << '\n';
  }
}

void write_diff_csv(std::ostream& out, const std::vector<DiffVerdict>& rows) {
  out << "metric,reference,cells,weak,strong,weak_majority,strong_majority\n";
  for (const auto& r : rows)
    out << r.metric << ',' << r.reference << ',' << r.cells << ',' << r.weak << ',' << r.strong << ','
        << (r.weak_majority ? 1 : 0) << ',' << (r.strong_majority ? 1 : 0) << '\n';
}

void write_spec_curve_csv(std::ostream& out, const std::vector<SpecCurvePoint>& rows) {
  out << "rank,country,product,scheme,metric,outcome,spec,beta1,ci_lower,ci_upper,p,significant\n";
  for (const auto& p : rows) {
    const auto& k = p.row.key;
    out << p.rank << ',' << k.country << ',' << k.product << ',' << scheme_name(k.scheme) << ',' << k.metric << ','
        << outcome_name(k.outcome) << ',' << spec_name(k.spec) << ',' << format_double(p.ci.estimate) << ','
        << format_double(p.ci.lower) << ',' << format_double(p.ci.upper) << ','
        << format_double(p.p) << ',' << (p.significant ? 1 : 0) << '\n';
  }
}

}  // namespace agw
