#include "landmark/inference.hpp"

#include <cmath>

namespace landmark {

EstimateReport se_ci(const EifSample& e, double level, WarnCounters* warn, bool n_divisor) {
  if (e.n < 2) throw EstimationError("se_ci: need n >= 2");
  const double n = static_cast<double>(e.n);
  double var = sample_variance(e.influence);
  if (n_divisor) var *= (n - 1.0) / n;
  const double se = std::sqrt(var / n);
  if (se == 0.0 && warn) ++warn->degenerate_ci;
  const double m = mean(e.influence);
  const double sd = std::sqrt(var);
  if (std::abs(m) > 1e-8 * std::max(1.0, sd) && warn) {
    // influence values of a one-step estimate must be centered
    ++warn->influence_mean_flags;
  }
  EstimateReport rep;
  rep.estimate = e.point;
  rep.std_error = se;
  rep.level = level;
  const double z = norm_quantile(0.5 + level / 2.0);
  rep.ci_low = e.point - z * se;
  rep.ci_high = e.point + z * se;
  return rep;
}

double wald_p_value(const EifSample& e) {
  const double se = sample_sd(e.influence) / std::sqrt(static_cast<double>(e.n));
  if (se == 0.0) return e.point == 0.0 ? 1.0 : 0.0;
  const double z = std::abs(e.point) / se;
  return 2.0 * norm_sf(z);
}

Eigen::MatrixXd joint_cov(const std::vector<const EifSample*>& samples) {
  const auto m = static_cast<Eigen::Index>(samples.size());
  if (m == 0) return {};
  const std::size_t n = samples[0]->n;
  const std::uint64_t tag = samples[0]->sample_tag;
  for (const auto* s : samples) {
    if (s->n != n) throw EstimationError("joint_cov: sample sizes differ");
    if (s->sample_tag != tag) {
      throw EstimationError("joint_cov: samples come from different datasets or orders");
    }
  }
  Eigen::MatrixXd out(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i; j < m; ++j) {
      const double c =
          sample_covariance(samples[i]->influence, samples[j]->influence) / static_cast<double>(n);
      out(i, j) = c;
      out(j, i) = c;
    }
  }
  return out;
}

SimplexSummary simplex_point(const EifSample& eta, const EifSample& surv, int arm, double level,
                             WarnCounters* warn) {
  SimplexSummary s;
  s.arm = arm;
  s.level = level;
  s.q1 = eta.point;
  s.q0 = surv.point - eta.point;
  s.qd = 1.0 - s.q0 - s.q1;  // exact unit sum by construction
  if (s.q0 < 0.0 || s.q1 < 0.0 || s.qd < 0.0 || s.q1 > 1.0) {
    if (warn) ++warn->rendering_clips;  // clip applied later, numeric fields stay raw
  }
  const Eigen::MatrixXd c = joint_cov({&eta, &surv});
  // QD = 1 - S: flip the sign of the survival influence.
  s.cov(0, 0) = c(0, 0);
  s.cov(0, 1) = -c(0, 1);
  s.cov(1, 0) = -c(1, 0);
  s.cov(1, 1) = c(1, 1);
  return s;
}

std::vector<std::array<double, 3>> confidence_ellipse(const SimplexSummary& summary, int points,
                                                      WarnCounters* warn) {
  if (points < 3) throw UsageError("confidence_ellipse: need at least 3 boundary points");
  const double c = chi2_quantile_df2(summary.level);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(summary.cov);
  Eigen::Vector2d lam = eig.eigenvalues();
  const Eigen::Matrix2d v = eig.eigenvectors();
  bool degenerate = false;
  for (int k = 0; k < 2; ++k) {
    if (!(lam[k] > 0.0)) {
      lam[k] = 0.0;
      degenerate = true;
    }
  }
  if (degenerate && warn) ++warn->degenerate_ci;
  std::vector<std::array<double, 3>> out;
  out.reserve(points);
  for (int k = 0; k < points; ++k) {
    const double phi = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(points);
    const Eigen::Vector2d offset = std::sqrt(c) * (v.col(0) * std::sqrt(lam[0]) * std::cos(phi) +
                                                   v.col(1) * std::sqrt(lam[1]) * std::sin(phi));
    const double q1 = summary.q1 + offset[0];
    const double qd = summary.qd + offset[1];
    out.push_back({1.0 - q1 - qd, q1, qd});
  }
  return out;
}

Eigen::Matrix2d cross_cov_q(const EifSample& eta1, const EifSample& surv1, const EifSample& eta0,
                            const EifSample& surv0) {
  const Eigen::MatrixXd c = joint_cov({&eta1, &surv1, &eta0, &surv0});
  Eigen::Matrix2d out;
  // (Q1_a, QD_a) influences are (eta_a, -surv_a).
  out(0, 0) = c(0, 2);
  out(0, 1) = -c(0, 3);
  out(1, 0) = -c(1, 2);
  out(1, 1) = c(1, 3);
  return out;
}

WaldResult wald_equality(const SimplexSummary& s1, const SimplexSummary& s0,
                         const Eigen::Matrix2d& cross_cov) {
  Eigen::Vector2d d(s1.q1 - s0.q1, s1.qd - s0.qd);
  Eigen::Matrix2d v = s1.cov + s0.cov - cross_cov - cross_cov.transpose();
  const double det = v(0, 0) * v(1, 1) - v(0, 1) * v(1, 0);
  const double scale = std::max(std::abs(v(0, 0)), std::abs(v(1, 1)));
  if (!(std::abs(det) > 1e-14 * scale * scale)) {
    throw EstimationError(
        "wald_equality: singular contrast covariance; consider a pooled or univariate test");
  }
  Eigen::Matrix2d vinv;
  vinv << v(1, 1), -v(0, 1), -v(1, 0), v(0, 0);
  vinv /= det;
  WaldResult res;
  res.statistic = d.dot(vinv * d);
  res.df = 2;
  res.p_value = chi2_sf_df2(res.statistic);
  return res;
}

UtilityResult utility_test(const EifSample& eta_contrast, const EifSample& surv_contrast,
                           double w) {
  if (!(w > 0.0 && w < 1.0)) throw UsageError("utility_test: weight must lie in (0,1)");
  if (eta_contrast.n != surv_contrast.n ||
      eta_contrast.sample_tag != surv_contrast.sample_tag) {
    throw EstimationError("utility_test: contrasts come from different samples");
  }
  UtilityResult res;
  res.weight = w;
  res.point = w * surv_contrast.point + (1.0 - w) * eta_contrast.point;
  std::vector<double> infl(eta_contrast.n);
  for (std::size_t i = 0; i < infl.size(); ++i) {
    infl[i] = w * surv_contrast.influence[i] + (1.0 - w) * eta_contrast.influence[i];
  }
  res.std_error = sample_sd(infl) / std::sqrt(static_cast<double>(infl.size()));
  if (res.std_error > 0.0) {
    res.z = res.point / res.std_error;
    res.p_one_sided = norm_sf(res.z);
  } else {
    res.z = 0.0;
    res.p_one_sided = 0.5;
  }
  return res;
}

std::vector<CurvePoint> eta_curve(const Pipeline& pipeline, std::span<const double> y_grid,
                                  double level, WarnCounters* warn) {
  if (y_grid.empty()) throw UsageError("eta_curve: empty threshold grid");
  std::vector<CurvePoint> out;
  out.reserve(y_grid.size());
  for (double y : y_grid) {
    const EifSample e1 = pipeline.eta(1, y, warn);
    const EifSample e0 = pipeline.eta(0, y, warn);
    CurvePoint pt;
    pt.y = y;
    pt.contrast = se_ci(contrast(e1, e0), level, warn);
    out.push_back(pt);
  }
  return out;
}

}  // namespace landmark
