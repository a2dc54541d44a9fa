#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "agw/econometrics.hpp"
#include "agw/survey.hpp"
#include "support.hpp"

using namespace agw;

namespace {

constexpr std::string_view kHeader =
    "country,hh_id,ea_id,admin_id,year,wave,primary_crop_yield,total_farm_value,labor_rate,fertilizer_rate,"
    "seed_rate,pesticide,herbicide,irrigation,mover\n";

std::string six_rows() {
  return std::string(kHeader) +
         "ETH,h1,e1,a1,2011,1,500,200,100,0,10,0,1,0,0\n"
         "ETH,h1,e1,a1,2013,2,650.5,210,120,20,12,1,1,0,0\n"
         "ETH,h2,e1,a1,2011,1,0,0,80,5,8,0,0,1,0\n"
         "ETH,h2,e1,a1,2013,2,300,150,90,5,9,0,0,1,0\n"
         "NGA,h1,e9,a9,2011,1,1000,400,200,50,30,1,0,0,0\n"
         "NGA,h1,e9,a9,2013,2,1100,420,210,55,31,1,0,0,0\n";
}

struct Synth {
  SynthSurveyConfig config;
  GeoContext ctx;
  DriverValues driver;
};

Synth synth_fixture(std::uint64_t seed, int households_per_ea = 10) {
  Synth s;
  s.config.country = "XX";
  s.config.seed = seed;
  s.config.households_per_ea = households_per_ea;
  s.config.driver = MetricId::RainDays;
  std::map<std::string, AdminUnit> admins;
  const auto hh = synth_households(s.config, {30.0, 5.0, 31.0, 6.0}, admins);
  s.ctx = build_geo_context(hh, admins, 5.0, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(1.0, 3.0);
  for (const auto& [id, h] : s.ctx.households)
    for (int y : s.config.waves) s.driver[{id, y}] = u(rng);
  return s;
}

MetricRecord record(std::string hh, int year, MetricId metric, double value, std::string country = "ETH") {
  return {std::move(country), "p", "ModEA_simple", std::move(hh), year, metric, value, false};
}

SurveyRow row(std::string hh, int year, std::string country = "ETH") {
  SurveyRow r;
  r.country = std::move(country);
  r.hh_id = std::move(hh);
  r.year = year;
  r.primary_crop_yield = 100;
  r.total_farm_value = 50;
  return r;
}

}  // namespace

TEST_CASE("ihs") {
  CHECK(ihs(0.0) == 0.0);
  CHECK(std::abs(ihs(1e6) - std::log(2e6)) / std::log(2e6) < 1e-9);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  std::vector<double> xs(1000);
  for (auto& x : xs) {
    x = u(rng);
    CHECK(ihs(-x) == -ihs(x));
    const double a = std::abs(x);  // the closed form cancels badly for large negative x
    CHECK(std::abs(ihs(x)) == doctest::Approx(std::log(a + std::sqrt(a * a + 1.0))).epsilon(1e-12));
  }
  std::sort(xs.begin(), xs.end());
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] > xs[i - 1]) CHECK(ihs(xs[i]) > ihs(xs[i - 1]));
}

TEST_CASE("survey csv") {
  const auto panel = parse_survey_csv(six_rows());
  REQUIRE(panel.rows.size() == 6);
  CHECK(panel.movers_excluded == 0);
  const auto& r = panel.rows[1];
  CHECK(r.country == "ETH");
  CHECK(r.hh_id == "h1");
  CHECK(r.ea_id == "e1");
  CHECK(r.admin_id == "a1");
  CHECK(r.year == 2013);
  CHECK(r.wave == 2);
  CHECK(r.primary_crop_yield == 650.5);
  CHECK(r.total_farm_value == 210);
  CHECK(r.labor_rate == 120);
  CHECK(r.fertilizer_rate == 20);
  CHECK(r.seed_rate == 12);
  CHECK(r.pesticide == 1);
  CHECK(r.herbicide == 1);
  CHECK(r.irrigation == 0);
  // the same household id in another country is a different household
  CHECK(panel.rows[4].hh_id == "h1");

  // write then read is the identity
  CHECK(parse_survey_csv(survey_csv_text(panel.rows)).rows.size() == 6);
  CHECK(survey_csv_text(parse_survey_csv(survey_csv_text(panel.rows)).rows) == survey_csv_text(panel.rows));

  auto movers = six_rows();
  movers.replace(movers.rfind(",0\n"), 3, ",1\n");
  const auto m = parse_survey_csv(movers);
  CHECK(m.rows.size() == 5);
  CHECK(m.movers_excluded == 1);

  CHECK_ERROR(parse_survey_csv(six_rows() + "ETH,h1,e1,a1,2011,1,1,1,1,1,1,0,0,0,0\n"), ErrorCode::DuplicateKey);
  CHECK_ERROR(parse_survey_csv(std::string(kHeader) + "ETH,h1,e1,a1,2011,1,-1,1,1,1,1,0,0,0,0\n"),
              ErrorCode::NegativeOutcome);
  CHECK_ERROR(parse_survey_csv(std::string(kHeader) + "ETH,h1,e1,a1,2011,1,1,1,1,1,1,2,0,0,0\n"),
              ErrorCode::SchemaMismatch);
  CHECK_ERROR(parse_survey_csv("country,hh_id\nETH,h1\n"), ErrorCode::SchemaMismatch);

  const auto dir = test::scratch_dir("survey_csv");
  save_survey_csv(panel.rows, dir / "s.csv");
  CHECK(load_survey_csv(dir / "s.csv").rows.size() == 6);
  CHECK_ERROR(load_survey_csv(dir / "missing.csv"), ErrorCode::IoFailure);
}

TEST_CASE("merge_weather join semantics") {
  std::vector<SurveyRow> panel;
  MetricTable table;
  for (int i = 0; i < 10; ++i) {
    panel.push_back(row("h" + std::to_string(i), 2011));
    if (i < 8) table.add(record("h" + std::to_string(i), 2011, MetricId::RainTotal, 100.0 + i));
  }
  const MetricSelection sel{"p", "ModEA_simple", MetricId::RainTotal};
  const auto merged = merge_weather(panel, table, {sel});
  CHECK(merged.rows.size() == 8);
  REQUIRE(merged.drops.size() == 2);
  CHECK(merged.drops[0].reason == "no_metric");
  CHECK(merged.drops[0].key == "ETH|h8|2011");
  CHECK(merged.columns[0][3] == 103.0);

  table.add(record("h8", 2011, MetricId::RainTotal, kNaN));
  const auto flagged = merge_weather(panel, table, {sel});
  CHECK(flagged.drops[0].reason == "missing_value");

  // repeating the selection is idempotent on rows
  const auto twice = merge_weather(panel, table, {sel, sel});
  CHECK(twice.rows.size() == flagged.rows.size());
  CHECK(twice.columns[0] == twice.columns[1]);
  CHECK(merge_weather(flagged.rows, table, {sel}).rows.size() == flagged.rows.size());

  table.add(record("h0", 2011, MetricId::RainTotal, 1.0));
  CHECK_ERROR(merge_weather(panel, table, {sel}), ErrorCode::AmbiguousJoin);
  // the duplicate does not poison other metrics
  table.add(record("h0", 2011, MetricId::RainDays, 3.0));
  CHECK_NOTHROW(merge_weather(panel, table, {{"p", "ModEA_simple", MetricId::RainDays}}));
}

TEST_CASE("merge_weather matches a set intersection oracle") {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.6);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<SurveyRow> panel;
    MetricTable table;
    std::set<std::tuple<std::string, std::string, int>> survey_keys, metric_keys;
    for (const std::string country : {"A", "B"})
      for (int h = 0; h < 20; ++h)
        for (int y : {2009, 2011}) {
          const auto id = "h" + std::to_string(h);
          if (coin(rng)) {
            panel.push_back(row(id, y, country));
            survey_keys.emplace(country, id, y);
          }
          if (coin(rng)) {
            table.add(record(id, y, MetricId::TempMean, h + 0.5 * y, country));
            metric_keys.emplace(country, id, y);
          }
        }
    const auto merged = merge_weather(panel, table, {{"p", "ModEA_simple", MetricId::TempMean}});
    std::set<std::tuple<std::string, std::string, int>> got;
    for (const auto& r : merged.rows) got.emplace(r.country, r.hh_id, r.year);
    std::set<std::tuple<std::string, std::string, int>> expected;
    std::set_intersection(survey_keys.begin(), survey_keys.end(), metric_keys.begin(), metric_keys.end(),
                          std::inserter(expected, expected.begin()));
    CHECK(got == expected);
    CHECK(merged.rows.size() + merged.drops.size() == panel.size());
    for (std::size_t i = 0; i < merged.rows.size(); ++i) {
      const auto& r = merged.rows[i];
      CHECK(merged.columns[0][i] == std::stoi(r.hh_id.substr(1)) + 0.5 * r.year);
    }
  }
}

TEST_CASE("metrics csv round trip") {
  MetricTable table;
  table.add(record("h1", 2011, MetricId::RainTotal, 12.5));
  table.add(record("h1", 2011, MetricId::TempMaxAvg, 31.0));
  table.add(record("h2", 2011, MetricId::RainTotal, kNaN));
  auto proxy = record("h2", 2011, MetricId::TempMaxAvg, 30.0);
  proxy.proxy = true;
  table.add(proxy);

  const auto dir = test::scratch_dir("metrics_csv");
  {
    std::ofstream out(dir / "metrics.csv");
    write_metrics_csv(out, table.records());
  }
  const auto loaded = load_metrics_csv(dir / "metrics.csv");
  CHECK(loaded.size() == 4);
  const MetricSelection total{"p", "ModEA_simple", MetricId::RainTotal};
  CHECK(loaded.find("ETH", total, "h1", 2011)->value == 12.5);
  CHECK(std::isnan(loaded.find("ETH", total, "h2", 2011)->value));
  CHECK(loaded.find("ETH", {"p", "ModEA_simple", MetricId::TempMaxAvg}, "h2", 2011)->proxy);
  CHECK(loaded.find("ETH", total, "h3", 2011) == nullptr);
  CHECK(loaded.find("NGA", total, "h1", 2011) == nullptr);

  std::ostringstream a, b;
  write_metrics_csv(a, table.records());
  write_metrics_csv(b, loaded.records());
  CHECK(a.str() == b.str());
}

TEST_CASE("synthetic survey") {
  const auto s = synth_fixture(11);
  const auto rows = synth_survey(s.config, s.ctx, s.driver);
  CHECK(rows.size() == 2 * 2 * 5 * 10 * 3);
  CHECK(synth_survey(s.config, s.ctx, s.driver).size() == rows.size());
  CHECK(survey_csv_text(synth_survey(s.config, s.ctx, s.driver)) == survey_csv_text(rows));

  double yield_sum = 0.0;
  std::set<std::pair<std::string, int>> keys;
  for (const auto& r : rows) {
    CHECK(r.primary_crop_yield >= 0.0);
    CHECK(r.total_farm_value >= 0.0);
    CHECK(r.labor_rate >= 0.0);
    CHECK(r.fertilizer_rate >= 0.0);
    CHECK(r.seed_rate >= 0.0);
    CHECK((r.pesticide == 0 || r.pesticide == 1));
    CHECK((r.irrigation == 0 || r.irrigation == 1));
    CHECK(keys.emplace(r.hh_id, r.year).second);
    yield_sum += r.primary_crop_yield;
  }
  const double yield_mean = yield_sum / static_cast<double>(rows.size());
  CHECK(yield_mean >= 60.0);
  CHECK(yield_mean <= 2000.0);

  auto other = s.config;
  other.seed = 12;
  CHECK(survey_csv_text(synth_survey(other, s.ctx, s.driver)) != survey_csv_text(rows));

  auto missing = s.driver;
  missing.erase(missing.begin());
  CHECK_ERROR(synth_survey(s.config, s.ctx, missing), ErrorCode::MissingMetric);
  auto nan = s.driver;
  nan.begin()->second = kNaN;
  CHECK_ERROR(synth_survey(s.config, s.ctx, nan), ErrorCode::MissingMetric);

  auto bad = s.config;
  bad.noise_sd = 0.0;
  CHECK_ERROR(synth_survey(bad, s.ctx, s.driver), ErrorCode::InvalidConfig);
  bad = s.config;
  bad.households_per_ea = 0;
  CHECK_ERROR(validate(bad), ErrorCode::InvalidConfig);
}

TEST_CASE("noiseless synthetic panel identifies the slope exactly") {
  auto s = synth_fixture(13);
  s.config.noise_sd = 1e-300;
  s.config.hh_effect_sd = 0.0;
  s.config.year_effects = {0.0, 0.0, 0.0};
  s.config.pi = {};
  s.config.beta = 1.0;
  const auto rows = synth_survey(s.config, s.ctx, s.driver);
  VectorX<double> y(static_cast<Eigen::Index>(rows.size()));
  MatrixX<double> X(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    y(k) = ihs(rows[i].primary_crop_yield);
    X(k, 0) = 1.0;
    X(k, 1) = s.driver.at({rows[i].hh_id, rows[i].year});
  }
  const auto fit = ols_fit<double>(y, X);
  CHECK(std::abs(fit.beta(1) - 1.0) < 1e-6);
}

TEST_CASE("movers are flagged after the first wave") {
  auto s = synth_fixture(17);
  s.config.mover_share = 0.3;
  const auto rows = synth_survey(s.config, s.ctx, s.driver);
  std::size_t movers = 0;
  for (const auto& r : rows) {
    if (r.wave == 1) CHECK(r.mover == 0);
    movers += static_cast<std::size_t>(r.mover);
  }
  CHECK(movers > 0);
  const auto panel = parse_survey_csv(survey_csv_text(rows));
  CHECK(panel.movers_excluded == movers);
  for (const auto& r : panel.rows) CHECK(r.mover == 0);
}
