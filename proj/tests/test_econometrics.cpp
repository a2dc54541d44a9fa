#include <cmath>

#include "agw/econometrics.hpp"
#include "support.hpp"

using namespace agw;
using test::planted_panel;

namespace {

RegressionSpec spec(std::string_view name) { return parse_spec(name); }

}  // namespace

TEST_CASE("specification names") {
  const auto specs = canonical_specs();
  REQUIRE(specs.size() == 6);
  const std::vector<std::string> names = {"linear", "linear_fe", "linear_fe_ctrl", "quad", "quad_fe", "quad_fe_ctrl"};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    CHECK(spec_name(specs[i]) == names[i]);
    CHECK(parse_spec(names[i]) == specs[i]);
  }
  CHECK_ERROR(parse_spec("cubic"), ErrorCode::InvalidConfig);
}

TEST_CASE("design shapes") {
  const auto panel = planted_panel(1);
  const auto lin = build_design(panel, spec("linear"), Outcome::Yield);
  CHECK(lin.names == std::vector<std::string>{"intercept", "rain_days"});
  CHECK(lin.X.rows() == 90);
  CHECK(lin.weather_terms == std::vector<Eigen::Index>{1});
  CHECK_FALSE(lin.absorb_households);
  CHECK(lin.y(0) == doctest::Approx(ihs(panel.rows[0].primary_crop_yield)));

  const auto quad = build_design(panel, spec("quad_fe_ctrl"), Outcome::Value);
  CHECK(quad.names == std::vector<std::string>{"rain_days", "rain_days^2", "labor_rate", "fertilizer_rate",
                                               "seed_rate", "pesticide", "herbicide", "irrigation", "year_2011",
                                               "year_2013"});
  CHECK(quad.weather_terms == std::vector<Eigen::Index>{0, 1});
  CHECK(quad.absorb_households);
  CHECK(quad.X(0, 1) == quad.X(0, 0) * quad.X(0, 0));
  CHECK(quad.X(0, 2) == ihs(panel.rows[0].labor_rate));
  CHECK(quad.y(0) == ihs(panel.rows[0].total_farm_value));
  CHECK(quad.household[0] == quad.household[2]);
  CHECK(quad.household[0] != quad.household[3]);

  // rainfall totals enter through ihs
  auto total = panel;
  total.selections[0].metric = MetricId::RainTotal;
  CHECK(build_design(total, spec("linear"), Outcome::Yield).X(0, 1) == ihs(panel.columns[0][0]));

  auto empty = panel;
  std::fill(empty.columns[0].begin(), empty.columns[0].end(), kNaN);
  CHECK_ERROR(build_design(empty, spec("linear"), Outcome::Yield), ErrorCode::AllMissingMetric);
  auto none = panel;
  none.selections.clear();
  none.columns.clear();
  CHECK_ERROR(build_design(none, spec("linear"), Outcome::Yield), ErrorCode::MissingColumn);
}

TEST_CASE("ols") {
  VectorX<double> x(5), y(5);
  x << 1, 2, 3, 4, 5;
  y = 2.0 * x;
  const auto exact = ols_fit<double>(y, MatrixX<double>(x));
  CHECK(exact.beta(0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(exact.residuals.norm() < 1e-12);

  // 5-point fixture against the hand-solved 2x2 normal equations
  y << 2.1, 3.9, 6.2, 7.8, 10.1;
  MatrixX<double> X(5, 2);
  X.col(0).setOnes();
  X.col(1) = x;
  const auto fit = ols_fit<double>(y, X);
  const double n = 5, sx = x.sum(), sy = y.sum(), sxx = x.squaredNorm(), sxy = x.dot(y);
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  CHECK(std::abs(fit.beta(1) - slope) < 1e-10);
  CHECK(std::abs(fit.beta(0) - intercept) < 1e-10);
  CHECK((X.transpose() * fit.residuals).norm() < 1e-8 * X.norm());
  CHECK((fit.xtx_inverse - (X.transpose() * X).inverse()).norm() < 1e-10);

  MatrixX<double> dup(5, 3);
  dup << X, x;
  const std::vector<std::string> names = {"a", "b", "c"};
  CHECK_ERROR(ols_fit<double>(y, dup, names), ErrorCode::RankDeficient);
  CHECK_ERROR(ols_fit<double>(y.head(1), X.topRows(1)), ErrorCode::DegenerateDof);
}

TEST_CASE("within transform") {
  const auto panel = planted_panel(2);
  const auto d = build_design(panel, spec("linear_fe_ctrl"), Outcome::Yield);
  const auto w = within_transform<double>(d.y, d.X, d.household);
  CHECK(w.absorbed == 30);
  CHECK(w.singletons_dropped == 0);
  for (Eigen::Index h = 0; h < 30; ++h) {
    CHECK(std::abs(w.y.segment(3 * h, 3).sum()) < 1e-12);
    CHECK(w.X.middleRows(3 * h, 3).colwise().sum().cwiseAbs().maxCoeff() < 1e-12);
  }

  std::vector<int> singles(static_cast<std::size_t>(d.y.size()));
  std::iota(singles.begin(), singles.end(), 0);
  CHECK_ERROR(within_transform<double>(d.y, d.X, singles), ErrorCode::NoVariation);

  std::vector<int> one_singleton = d.household;
  one_singleton[0] = 999;
  const auto partial = within_transform<double>(d.y, d.X, one_singleton);
  CHECK(partial.singletons_dropped == 1);
  CHECK(partial.y.size() == d.y.size() - 1);
}

TEST_CASE("within transform equals explicit household dummies") {
  const auto panel = planted_panel(3);
  const auto d = build_design(panel, spec("linear_fe_ctrl"), Outcome::Yield);
  const auto w = within_transform<double>(d.y, d.X, d.household);
  const auto within = ols_fit<double>(w.y, w.X);

  MatrixX<double> dummies = MatrixX<double>::Zero(d.X.rows(), d.X.cols() + 30);
  dummies.leftCols(d.X.cols()) = d.X;
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) dummies(i, d.X.cols() + d.household[static_cast<std::size_t>(i)]) = 1.0;
  const auto full = ols_fit<double>(d.y, dummies);
  for (Eigen::Index j = 0; j < d.X.cols(); ++j) CHECK(std::abs(within.beta(j) - full.beta(j)) < 1e-8);
  CHECK((within.residuals - full.residuals).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("cluster-robust vcov") {
  // six observations in three clusters, sandwich computed by hand
  const double xs[6] = {1, 2, 3, 4, 5, 6};
  const double ys[6] = {1, 3, 2, 5, 4, 6};
  const std::vector<int> cluster = {0, 0, 1, 1, 2, 2};
  MatrixX<double> X(6, 2);
  VectorX<double> y(6);
  for (int i = 0; i < 6; ++i) {
    X.row(i) << 1.0, xs[i];
    y(i) = ys[i];
  }

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < 6; ++i) sx += xs[i], sy += ys[i], sxx += xs[i] * xs[i], sxy += xs[i] * ys[i];
  const double det = 6 * sxx - sx * sx;
  const double b1 = (6 * sxy - sx * sy) / det, b0 = (sy - b1 * sx) / 6;
  const double inv[2][2] = {{sxx / det, -sx / det}, {-sx / det, 6 / det}};
  double meat[2][2] = {};
  for (int g = 0; g < 3; ++g) {
    double s0 = 0, s1 = 0;
    for (int i = 2 * g; i < 2 * g + 2; ++i) {
      const double u = ys[i] - b0 - b1 * xs[i];
      s0 += u, s1 += u * xs[i];
    }
    meat[0][0] += s0 * s0, meat[0][1] += s0 * s1, meat[1][0] += s1 * s0, meat[1][1] += s1 * s1;
  }
  const double scale = 3.0 / 2.0 * 5.0 / 4.0;
  double expected[2][2] = {};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int e = 0; e < 2; ++e) expected[a][e] += scale * inv[a][b] * meat[b][c] * inv[c][e];

  const auto fit = ols_fit<double>(y, X);
  const auto v = cluster_robust_vcov<double>(X, fit.residuals, cluster, {6, 2});
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) CHECK(std::abs(v(a, b) - expected[a][b]) < 1e-10);

  const std::vector<int> one(6, 0);
  CHECK_ERROR(cluster_robust_vcov<double>(X, fit.residuals, one, {6, 2}), ErrorCode::TooFewClusters);
  CHECK_ERROR(cluster_robust_vcov<double>(X, fit.residuals, cluster, {2, 2}), ErrorCode::DegenerateDof);
}

TEST_CASE("singleton clusters reduce to HC1") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index n = 200;
  MatrixX<double> X(n, 3);
  VectorX<double> y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) << 1.0, normal(rng), normal(rng);
    y(i) = 1.0 + 0.5 * X(i, 1) + normal(rng);
  }
  std::vector<int> cluster(static_cast<std::size_t>(n));
  std::iota(cluster.begin(), cluster.end(), 0);
  const auto fit = ols_fit<double>(y, X);
  const auto cr1 = cluster_robust_vcov<double>(X, fit.residuals, cluster, {n, 3});
  const auto hc1 = hc1_vcov<double>(X, fit.residuals);
  CHECK((cr1 - hc1).cwiseAbs().maxCoeff() < 1e-12 * hc1.cwiseAbs().maxCoeff());
}

TEST_CASE("fit statistics") {
  CHECK(t_pvalue(0.0, 30.0) == 1.0);
  CHECK(std::abs(t_pvalue(1.96, 1e6) - 0.05) < 0.002);
  CHECK(t_pvalue(-2.5, 10.0) == doctest::Approx(t_pvalue(2.5, 10.0)));
  CHECK(t_critical(0.95, 2.0) == doctest::Approx(4.302653).epsilon(1e-6));
  CHECK(std::abs(t_pvalue(t_critical(0.95, 12.0), 12.0) - 0.05) < 1e-12);

  const auto panel = planted_panel(4);
  for (const auto& s : canonical_specs()) {
    const auto fit = fit_regression(build_design(panel, s, Outcome::Yield));
    CHECK(fit.adj_r2 <= fit.r2);
    CHECK(fit.r2 <= 1.0);
    CHECK(fit.g == 30);
    CHECK(fit.dof == 29.0);
    CHECK(fit.n == 90);
    CHECK(fit.absorbed == (s.fixed_effects == FixedEffects::HouseholdYear ? 30 : 0));
    CHECK((fit.vcov - fit.vcov.transpose()).norm() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<MatrixX<double>>(fit.vcov).eigenvalues().minCoeff() >= -1e-12);
    for (Eigen::Index j = 0; j < fit.p.size(); ++j) {
      CHECK(fit.p(j) >= 0.0);
      CHECK(fit.p(j) <= 1.0);
    }
    CHECK(fit.n >= fit.k + fit.absorbed + 1);
    if (s.form == ModelForm::Linear) {
      // a single-term Wald test is the squared t test
      const auto j = fit.weather_terms[0];
      CHECK(fit.p_joint == doctest::Approx(fit.p(j)).epsilon(1e-10));
    }
  }
}

TEST_CASE("nested specifications never lower R2") {
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    const auto panel = planted_panel(seed);
    for (auto form : {"linear", "quad"}) {
      const std::string f = form;
      const auto a = fit_regression(build_design(panel, spec(f), Outcome::Yield));
      const auto b = fit_regression(build_design(panel, spec(f + "_fe"), Outcome::Yield));
      const auto c = fit_regression(build_design(panel, spec(f + "_fe_ctrl"), Outcome::Yield));
      CHECK(b.r2 >= a.r2 - 1e-12);
      CHECK(c.r2 >= b.r2 - 1e-12);
    }
    const auto lin = fit_regression(build_design(panel, spec("linear"), Outcome::Value));
    const auto quad = fit_regression(build_design(panel, spec("quad"), Outcome::Value));
    CHECK(quad.r2 >= lin.r2 - 1e-12);
  }
}

TEST_CASE("scale equivariance") {
  for (std::uint64_t seed = 40; seed < 50; ++seed) {
    const auto panel = planted_panel(seed);
    for (const auto& s : canonical_specs()) {
      if (s.form == ModelForm::Quadratic) continue;
      auto scaled = panel;
      const double c = 3.7;
      for (auto& v : scaled.columns[0]) v *= c;
      const auto a = fit_regression(build_design(panel, s, Outcome::Yield));
      const auto b = fit_regression(build_design(scaled, s, Outcome::Yield));
      const auto j = a.weather_terms[0];
      CHECK(std::abs(b.beta(j) * c - a.beta(j)) < 1e-10 * std::abs(a.beta(j)) + 1e-14);
      CHECK(std::abs(b.t(j) - a.t(j)) < 1e-10 * std::max(1.0, std::abs(a.t(j))));
      CHECK(std::abs(b.p(j) - a.p(j)) < 1e-10);
    }
  }
}

TEST_CASE("fit errors") {
  auto panel = planted_panel(5, 1);
  CHECK_ERROR(fit_regression(build_design(panel, spec("linear"), Outcome::Yield)), ErrorCode::TooFewClusters);

  auto constant = planted_panel(6);
  std::fill(constant.columns[0].begin(), constant.columns[0].end(), 5.0);
  CHECK_ERROR(fit_regression(build_design(constant, spec("linear"), Outcome::Yield)), ErrorCode::RankDeficient);

  auto one_wave = planted_panel(7, 30, 1);
  CHECK_ERROR(fit_regression(build_design(one_wave, spec("linear_fe"), Outcome::Yield)), ErrorCode::NoVariation);
}
