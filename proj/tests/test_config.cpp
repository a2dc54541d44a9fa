#include <cstdlib>
#include <string>

#include "agw/pipeline.hpp"
#include "support.hpp"

using namespace agw;

namespace {

const std::filesystem::path kDeskConfig = std::filesystem::path(AGW_SOURCE_DIR) / "config" / "desk_scale.ini";

// Desk config with one section removed.
Config without_section(std::string_view section) {
  const auto desk = Config::load(kDeskConfig);
  auto text = desk.canonical();
  const auto start = text.find("[" + std::string(section) + "]");
  REQUIRE(start != std::string::npos);
  const auto end = text.find("\n[", start + 1);
  text.erase(start, end == std::string::npos ? std::string::npos : end + 1 - start);
  return Config::parse(text);
}

std::string config_error(const Config& c) {
  try {
    (void)pipeline_config(c);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("ini parsing") {
  const auto c = Config::parse(
      "; leading comment\n"
      "[run]\n"
      "seed = 42   # trailing comment\n"
      "  out=  results/x  \n"
      "\n"
      "[countries]\n"
      "use = ETH, NGA,\n"
      "ETH.extent = 1, 2, 3, 4\n");
  CHECK(c.get("run", "seed") == "42");
  CHECK(c.get("run", "out") == "results/x");
  CHECK(c.get_int("run", "seed") == 42);
  CHECK(c.get_list("countries", "use") == std::vector<std::string>{"ETH", "NGA"});
  CHECK(c.get_doubles("countries", "ETH.extent") == std::vector<double>{1, 2, 3, 4});
  CHECK(c.get_or("run", "threads", "1") == "1");
  CHECK(c.get_int_or("run", "threads", 3) == 3);
  CHECK(c.get_bool_or("run", "flag", true));
  CHECK_FALSE(c.find("run", "threads"));
  CHECK(c.has_section("countries"));
  CHECK_FALSE(c.has_section("geo"));

  CHECK_ERROR(c.get("run", "threads"), ErrorCode::InvalidConfig);
  CHECK_ERROR(c.get("geo", "x"), ErrorCode::InvalidConfig);
  CHECK_ERROR(c.get_double("run", "out"), ErrorCode::InvalidConfig);
  CHECK_ERROR(Config::parse("[run\nseed=1\n"), ErrorCode::InvalidConfig);
  CHECK_ERROR(Config::parse("seed = 1\n"), ErrorCode::InvalidConfig);
  CHECK_ERROR(Config::parse("[run]\njust a line\n"), ErrorCode::InvalidConfig);
  CHECK_ERROR(Config::parse("[run]\n = 3\n"), ErrorCode::InvalidConfig);
  CHECK_ERROR(Config::load("/nonexistent/run.ini"), ErrorCode::InvalidConfig);

  try {
    (void)c.get("run", "threads");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("[run] threads") != std::string::npos);
  }
}

TEST_CASE("typed values") {
  const auto c = Config::parse("[a]\nx = 2.5\ny = +3\nz = 1e-3\nbad = 2.5kg\nyes = true\nno = off\nn = 7\n");
  CHECK(c.get_double("a", "x") == 2.5);
  CHECK(c.get_double("a", "y") == 3.0);
  CHECK(c.get_double("a", "z") == 1e-3);
  CHECK(c.get_int("a", "n") == 7);
  CHECK(c.get_bool_or("a", "yes", false));
  CHECK_FALSE(c.get_bool_or("a", "no", true));
  CHECK_ERROR(c.get_double("a", "bad"), ErrorCode::InvalidConfig);
  CHECK_ERROR(c.get_int("a", "x"), ErrorCode::InvalidConfig);
  CHECK_ERROR(c.get_bool_or("a", "x", false), ErrorCode::InvalidConfig);
}

TEST_CASE("overrides and aliases") {
  auto c = Config::parse("[run]\nseed = 1\n[schemes]\nuse = all\n");
  c.apply_override("run.seed=9");
  CHECK(c.get("run", "seed") == "9");
  c.apply_override("products.chirps.cell_size = 0.25");
  CHECK(c.get("products", "chirps.cell_size") == "0.25");
  c.apply_override("battery.schemes=3");
  CHECK(c.get("schemes", "use") == "3");
  c.apply_override("battery.metrics=rain_total,temp_gdd");
  CHECK(c.get("metrics", "use") == "rain_total,temp_gdd");
  c.apply_override("battery.outcomes=yield");
  CHECK(c.get("specs", "outcomes") == "yield");
  c.apply_override("battery.threads=4");
  CHECK(c.get("run", "threads") == "4");
  CHECK_ERROR(c.apply_override("seed=3"), ErrorCode::InvalidConfig);
  CHECK_ERROR(c.apply_override("run.seed"), ErrorCode::InvalidConfig);
  CHECK_ERROR(c.apply_override(".seed=1"), ErrorCode::InvalidConfig);
}

TEST_CASE("canonical text and hash") {
  const auto a = Config::parse("[b]\ny = 2\nx = 1\n[a]\nk = v\n");
  const auto b = Config::parse("; same content, different order\n[a]\nk=v\n[b]\nx=1\ny=2\n");
  CHECK(a.canonical() == b.canonical());
  CHECK(a.hash() == b.hash());
  auto c = b;
  c.set("b", "y", "3");
  CHECK(c.hash() != a.hash());
  CHECK(Config::parse(a.canonical()).canonical() == a.canonical());
}

TEST_CASE("desk configuration") {
  const auto c = Config::load(kDeskConfig);
  const auto p = pipeline_config(c);
  CHECK(p.seed == 20240611);
  CHECK(p.countries.size() == 2);
  CHECK(p.countries[1].name == "NGA");
  CHECK(p.countries[0].season.start_month == 6);
  CHECK(p.products.size() == 3);
  CHECK(p.product("tmx_syn").has_max);
  CHECK_FALSE(p.product("era_syn").has_max);
  CHECK(p.product("chirps_syn").synth.cell_size_lon == 0.05);
  CHECK(p.battery.schemes.size() == 10);
  CHECK(p.battery.metrics.size() == 22);
  CHECK(p.battery.specs.size() == 6);
  CHECK(p.battery.outcomes.size() == 2);
  CHECK(p.battery.combinations);
  CHECK(p.survey.households_per_ea * p.survey.eas_per_admin * p.survey.admin_rows * p.survey.admin_cols == 500);
  CHECK(p.survey.waves == std::vector<int>{2009, 2011, 2013});
  CHECK(p.rain_reference == MetricId::RainMean);
  CHECK(p.temp_reference == MetricId::TempMean);
  CHECK(p.merge_selections.size() == 2);
  CHECK(p.spec_curve_filter.equals.at("country") == "ETH");

  // 22 metrics x 3 products x 2 countries x 10 schemes x 2 outcomes x 6 specs,
  // plus 3 x 3 product pairs x 2 countries x 10 x 2 x (6 x 3 + 2 x 3) combinations
  CHECK(expected_run_count(p.battery) == 15840 + 8640);

  auto small = c;
  small.apply_override("battery.schemes=3");
  small.apply_override("battery.metrics=rain");
  const auto q = pipeline_config(small);
  CHECK(q.battery.schemes == std::vector<ObfuscationScheme>{ObfuscationScheme::ModEA_simple});
  CHECK(q.battery.metrics.size() == 14);
}

TEST_CASE("configuration errors name the offending section or key") {
  CHECK(config_error(without_section("metrics")).find("[metrics]") != std::string::npos);
  CHECK(config_error(without_section("outputs")).find("[outputs]") != std::string::npos);

  auto c = Config::load(kDeskConfig);
  auto with = [&](std::string_view o) {
    auto d = c;
    d.apply_override(o);
    return config_error(d);
  };
  CHECK(with("run.seed=abc").find("[run] seed") != std::string::npos);
  CHECK(with("schemes.use=12").find("[schemes] use") != std::string::npos);
  CHECK(with("metrics.use=rain_foo").find("[metrics] use") != std::string::npos);
  CHECK(with("specs.use=cubic").find("[specs] use") != std::string::npos);
  CHECK(with("specs.rule=sometimes").find("[specs] rule") != std::string::npos);
  CHECK(with("countries.ETH.extent=1,2,3").find("[countries] ETH.extent") != std::string::npos);
  CHECK(with("countries.ETH.season=13-01..01-01").find("[countries] ETH.season") != std::string::npos);
  CHECK(with("weather.end=2000-01-01").find("[weather] end") != std::string::npos);
  CHECK(with("survey.driver_product=nope").find("[survey] driver_product") != std::string::npos);
  CHECK(with("survey.noise_sd=0").find("[survey]") != std::string::npos);
  CHECK(with("metrics.gdd_high_c=5").find("[metrics] gdd_high_c") != std::string::npos);
  CHECK(with("outputs.levels=0.9,1.5").find("[outputs] levels") != std::string::npos);
  CHECK(with("outputs.merge=chirps_syn:3").find("[outputs] merge") != std::string::npos);
  CHECK(with("products.era_syn.correlation_km=0").find("[products] era_syn") != std::string::npos);
}

TEST_CASE("thread count from the environment") {
  auto c = Config::load(kDeskConfig);
  ::setenv("AGW_THREADS", "6", 1);
  CHECK(pipeline_config(c).threads == 6);
  CHECK(pipeline_config(c).battery.threads == 6);
  ::setenv("AGW_THREADS", "zero", 1);
  CHECK_ERROR(pipeline_config(c), ErrorCode::InvalidConfig);
  ::unsetenv("AGW_THREADS");
  c.apply_override("battery.threads=3");
  CHECK(pipeline_config(c).threads == 3);
}
