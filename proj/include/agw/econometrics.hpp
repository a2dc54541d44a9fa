#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "agw/error.hpp"
#include "agw/survey.hpp"

namespace agw {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class ModelForm : std::uint8_t { Linear, Quadratic };
enum class FixedEffects : std::uint8_t { None, HouseholdYear };

struct RegressionSpec {
  ModelForm form = ModelForm::Linear;
  FixedEffects fixed_effects = FixedEffects::None;
  bool controls = false;

  friend bool operator==(const RegressionSpec&, const RegressionSpec&) = default;
};

/// linear | linear_fe | linear_fe_ctrl | quad | quad_fe | quad_fe_ctrl
std::string spec_name(const RegressionSpec& spec);
RegressionSpec parse_spec(std::string_view name);

/// The six canonical specifications: {linear, quadratic} x {plain, FE, FE + controls}.
std::vector<RegressionSpec> canonical_specs();

template <typename Scalar>
struct Design {
  VectorX<Scalar> y;
  MatrixX<Scalar> X;
  std::vector<std::string> names;
  std::vector<int> cluster;    // household-level clustering
  std::vector<int> household;  // absorbed when fixed effects are on
  std::vector<Eigen::Index> weather_terms;  // columns of X holding weather regressors
  bool absorb_households = false;
};

/// Response ihs(outcome); weather regressors per the IHS policy, squared terms
/// for the quadratic form, controls block, then year dummies (first year as
/// reference) with fixed effects or an intercept without them.
Design<double> build_design(const MergedPanel& panel, const RegressionSpec& spec, Outcome outcome);

template <typename Scalar>
struct WithinResult {
  VectorX<Scalar> y;
  MatrixX<Scalar> X;
  std::vector<Eigen::Index> kept_rows;  // rows of the input that survive singleton removal
  Eigen::Index absorbed = 0;            // households absorbed
  Eigen::Index singletons_dropped = 0;
};

/// Household demeaning. Households observed once are dropped and counted.
template <typename Scalar>
WithinResult<Scalar> within_transform(const VectorX<Scalar>& y, const MatrixX<Scalar>& X,
                                      std::span<const int> household) {
  const Eigen::Index n = y.size();
  std::map<int, std::vector<Eigen::Index>> members;
  for (Eigen::Index i = 0; i < n; ++i) members[household[static_cast<std::size_t>(i)]].push_back(i);

  WithinResult<Scalar> out;
  for (const auto& [h, rows] : members) {
    if (rows.size() < 2) {
      ++out.singletons_dropped;
      continue;
    }
    ++out.absorbed;
  }
  if (out.absorbed == 0) throw Error(ErrorCode::NoVariation, "no household observed more than once");

  for (Eigen::Index i = 0; i < n; ++i)
    if (members[household[static_cast<std::size_t>(i)]].size() >= 2) out.kept_rows.push_back(i);

  std::map<int, Eigen::Index> group_index;
  for (const auto& [h, rows] : members)
    if (rows.size() >= 2) group_index.emplace(h, static_cast<Eigen::Index>(group_index.size()));

  const Eigen::Index m = static_cast<Eigen::Index>(out.kept_rows.size());
  const Eigen::Index g = static_cast<Eigen::Index>(group_index.size());
  VectorX<Scalar> y_sum = VectorX<Scalar>::Zero(g);
  MatrixX<Scalar> x_sum = MatrixX<Scalar>::Zero(g, X.cols());
  VectorX<Scalar> count = VectorX<Scalar>::Zero(g);
  std::vector<Eigen::Index> group(static_cast<std::size_t>(m));
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = out.kept_rows[static_cast<std::size_t>(k)];
    const Eigen::Index gi = group_index.at(household[static_cast<std::size_t>(i)]);
    group[static_cast<std::size_t>(k)] = gi;
    y_sum(gi) += y(i);
    x_sum.row(gi) += X.row(i);
    count(gi) += Scalar(1);
  }
  out.y.resize(m);
  out.X.resize(m, X.cols());
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = out.kept_rows[static_cast<std::size_t>(k)];
    const Eigen::Index gi = group[static_cast<std::size_t>(k)];
    out.y(k) = y(i) - y_sum(gi) / count(gi);
    out.X.row(k) = X.row(i) - x_sum.row(gi) / count(gi);
  }
  return out;
}

template <typename Scalar>
struct OlsFit {
  VectorX<Scalar> beta;
  VectorX<Scalar> residuals;
  VectorX<Scalar> fitted;
  MatrixX<Scalar> xtx_inverse;  // (X'X)^-1 from the QR factor
};

/// Least squares by column-pivoting Householder QR. Throws RankDeficient
/// naming the columns that fall below the rank threshold.
template <typename Scalar>
OlsFit<Scalar> ols_fit(const VectorX<Scalar>& y, const MatrixX<Scalar>& X,
                       std::span<const std::string> names = {}) {
  if (X.rows() < X.cols() || X.cols() == 0)
    throw Error(ErrorCode::DegenerateDof, "design has " + std::to_string(X.rows()) + " rows and " +
                                              std::to_string(X.cols()) + " columns");
  Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(X);
  qr.setThreshold(Scalar(1e-10));
  const Eigen::Index k = X.cols();
  if (qr.rank() < k) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = qr.rank(); j < k; ++j) {
      const auto c = static_cast<std::size_t>(perm(j));
      if (!cols.empty()) cols += ", ";
      cols += c < names.size() ? names[c] : "col" + std::to_string(c);
    }
    throw Error(ErrorCode::RankDeficient, "collinear columns: " + cols);
  }
  OlsFit<Scalar> fit;
  fit.beta = qr.solve(y);
  fit.fitted = X * fit.beta;
  fit.residuals = y - fit.fitted;

  const MatrixX<Scalar> r = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const MatrixX<Scalar> r_inv =
      r.template triangularView<Eigen::Upper>().solve(MatrixX<Scalar>::Identity(k, k));
  const MatrixX<Scalar> inner = r_inv * r_inv.transpose();
  const auto& p = qr.colsPermutation();
  fit.xtx_inverse = p * inner * p.transpose();
  return fit;
}

/// Overload that factors X itself when no OLS fit is at hand.
template <typename Scalar>
MatrixX<Scalar> xtx_inverse(const MatrixX<Scalar>& X) {
  return ols_fit<Scalar>(VectorX<Scalar>::Zero(X.rows()), X).xtx_inverse;
}

struct DofParams {
  Eigen::Index n = 0;  // observations
  Eigen::Index k = 0;  // estimated regressors in X
};

/// Number of distinct cluster labels.
inline Eigen::Index count_clusters(std::span<const int> cluster) {
  std::vector<int> ids(cluster.begin(), cluster.end());
  std::sort(ids.begin(), ids.end());
  return static_cast<Eigen::Index>(std::unique(ids.begin(), ids.end()) - ids.begin());
}

/// CR1 sandwich: (X'X)^-1 (sum_g X_g'u_g u_g'X_g) (X'X)^-1 scaled by
/// G/(G-1) * (N-1)/(N-K).
template <typename Scalar>
MatrixX<Scalar> cluster_robust_vcov(const MatrixX<Scalar>& X, const VectorX<Scalar>& residuals,
                                    std::span<const int> cluster, const DofParams& dof,
                                    const MatrixX<Scalar>* bread = nullptr) {
  const Eigen::Index g = count_clusters(cluster);
  if (g < 2) throw Error(ErrorCode::TooFewClusters, "need at least 2 clusters, got " + std::to_string(g));
  if (dof.n - dof.k <= 0) throw Error(ErrorCode::DegenerateDof, "N - K must be positive");

  std::map<int, Eigen::Index> slot;
  for (int c : cluster) slot.emplace(c, 0);
  Eigen::Index next = 0;
  for (auto& [c, s] : slot) s = next++;
  MatrixX<Scalar> scores = MatrixX<Scalar>::Zero(g, X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    scores.row(slot.at(cluster[static_cast<std::size_t>(i)])) += residuals(i) * X.row(i);
  const MatrixX<Scalar> meat = scores.transpose() * scores;

  const MatrixX<Scalar> b = bread != nullptr ? *bread : xtx_inverse<Scalar>(X);
  const Scalar gs = static_cast<Scalar>(g);
  const Scalar scale = gs / (gs - Scalar(1)) * static_cast<Scalar>(dof.n - 1) / static_cast<Scalar>(dof.n - dof.k);
  MatrixX<Scalar> v = scale * (b * meat * b);
  return Scalar(0.5) * (v + v.transpose());
}

/// HC1 heteroskedasticity-robust vcov, N/(N-K) scaling.
template <typename Scalar>
MatrixX<Scalar> hc1_vcov(const MatrixX<Scalar>& X, const VectorX<Scalar>& residuals) {
  const MatrixX<Scalar> b = xtx_inverse<Scalar>(X);
  const MatrixX<Scalar> meat = X.transpose() * residuals.array().square().matrix().asDiagonal() * X;
  const Scalar n = static_cast<Scalar>(X.rows());
  const Scalar k = static_cast<Scalar>(X.cols());
  return n / (n - k) * (b * meat * b);
}

/// Two-sided p-value of a t statistic.
template <typename Scalar>
Scalar t_pvalue(Scalar t, Scalar dof) {
  if (!std::isfinite(t)) return std::isnan(t) ? t : Scalar(0);
  const boost::math::students_t_distribution<Scalar> dist(dof);
  return Scalar(2) * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

/// t quantile for a two-sided interval of the given coverage.
template <typename Scalar>
Scalar t_critical(Scalar coverage, Scalar dof) {
  const boost::math::students_t_distribution<Scalar> dist(dof);
  return boost::math::quantile(dist, (Scalar(1) + coverage) / Scalar(2));
}

/// Wald test of `terms` jointly zero, referred to F(q, dof).
template <typename Scalar>
Scalar joint_wald_pvalue(const VectorX<Scalar>& beta, const MatrixX<Scalar>& vcov,
                         std::span<const Eigen::Index> terms, Scalar dof) {
  const auto q = static_cast<Eigen::Index>(terms.size());
  VectorX<Scalar> b(q);
  MatrixX<Scalar> v(q, q);
  for (Eigen::Index i = 0; i < q; ++i) {
    b(i) = beta(terms[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < q; ++j)
      v(i, j) = vcov(terms[static_cast<std::size_t>(i)], terms[static_cast<std::size_t>(j)]);
  }
  const Eigen::LDLT<MatrixX<Scalar>> ldlt(v);
  const Scalar wald = b.dot(ldlt.solve(b));
  if (!(wald >= Scalar(0)) || !std::isfinite(wald)) return std::numeric_limits<Scalar>::quiet_NaN();
  const boost::math::fisher_f_distribution<Scalar> dist(static_cast<Scalar>(q), dof);
  return boost::math::cdf(boost::math::complement(dist, wald / static_cast<Scalar>(q)));
}

template <typename Scalar>
struct RegressionFit {
  VectorX<Scalar> beta;
  MatrixX<Scalar> vcov;
  VectorX<Scalar> se;
  VectorX<Scalar> t;
  VectorX<Scalar> p;
  VectorX<Scalar> residuals;
  std::vector<std::string> names;
  std::vector<Eigen::Index> weather_terms;
  Scalar p_joint = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar r2 = 0;
  Scalar adj_r2 = 0;
  Eigen::Index n = 0;
  Eigen::Index g = 0;
  Eigen::Index k = 0;         // regressors estimated explicitly
  Eigen::Index absorbed = 0;  // household effects absorbed
  Scalar dof = 0;             // G - 1
};

struct FitStats {
  double r2 = 0.0;
  double adj_r2 = 0.0;
};

/// R^2 about the mean of y and the adjusted version for `k_total` parameters
/// (absorbed effects included). Throws DegenerateDof when N <= k_total.
template <typename Scalar>
FitStats r2_statistics(const VectorX<Scalar>& y, const VectorX<Scalar>& residuals, Eigen::Index k_total) {
  const Eigen::Index n = y.size();
  if (n - k_total <= 0) throw Error(ErrorCode::DegenerateDof, "no residual degrees of freedom");
  const Scalar tss = (y.array() - y.mean()).square().sum();
  const Scalar ssr = residuals.squaredNorm();
  const Scalar r2 = tss > Scalar(0) ? Scalar(1) - ssr / tss : Scalar(0);
  const Scalar adj = Scalar(1) - (Scalar(1) - r2) * static_cast<Scalar>(n - 1) / static_cast<Scalar>(n - k_total);
  return {static_cast<double>(r2), static_cast<double>(adj)};
}

/// Full estimation: optional household absorption, OLS, CR1 vcov, t tests on
/// G-1 degrees of freedom, joint Wald over the weather terms, adjusted R^2.
template <typename Scalar>
RegressionFit<Scalar> fit_regression(const Design<Scalar>& d) {
  RegressionFit<Scalar> fit;
  fit.names = d.names;
  fit.weather_terms = d.weather_terms;

  VectorX<Scalar> y_level;
  VectorX<Scalar> y;
  MatrixX<Scalar> X;
  std::vector<int> cluster;
  if (d.absorb_households) {
    auto w = within_transform<Scalar>(d.y, d.X, d.household);
    y = std::move(w.y);
    X = std::move(w.X);
    y_level.resize(static_cast<Eigen::Index>(w.kept_rows.size()));
    for (std::size_t k = 0; k < w.kept_rows.size(); ++k) {
      y_level(static_cast<Eigen::Index>(k)) = d.y(w.kept_rows[k]);
      cluster.push_back(d.cluster[static_cast<std::size_t>(w.kept_rows[k])]);
    }
    fit.absorbed = w.absorbed;
  } else {
    y = d.y;
    X = d.X;
    y_level = d.y;
    cluster = d.cluster;
  }

  auto ols = ols_fit<Scalar>(y, X, d.names);
  fit.n = X.rows();
  fit.k = X.cols();
  fit.g = count_clusters(cluster);
  if (fit.g < 2) throw Error(ErrorCode::TooFewClusters, "need at least 2 clusters");
  fit.dof = static_cast<Scalar>(fit.g - 1);
  fit.beta = ols.beta;
  fit.residuals = ols.residuals;
  fit.vcov = cluster_robust_vcov<Scalar>(X, ols.residuals, cluster, {fit.n, fit.k}, &ols.xtx_inverse);
  fit.se = fit.vcov.diagonal().cwiseMax(Scalar(0)).cwiseSqrt();
  fit.t.resize(fit.k);
  fit.p.resize(fit.k);
  for (Eigen::Index j = 0; j < fit.k; ++j) {
    fit.t(j) = fit.se(j) > Scalar(0) ? fit.beta(j) / fit.se(j)
                                     : (fit.beta(j) == Scalar(0) ? Scalar(0) : std::numeric_limits<Scalar>::infinity());
    fit.p(j) = t_pvalue<Scalar>(fit.t(j), fit.dof);
  }
  if (!d.weather_terms.empty())
    fit.p_joint = joint_wald_pvalue<Scalar>(fit.beta, fit.vcov, d.weather_terms, fit.dof);

  const auto stats = r2_statistics<Scalar>(y_level, ols.residuals, fit.k + fit.absorbed);
  fit.r2 = static_cast<Scalar>(stats.r2);
  fit.adj_r2 = static_cast<Scalar>(stats.adj_r2);
  return fit;
}

}  // namespace agw
