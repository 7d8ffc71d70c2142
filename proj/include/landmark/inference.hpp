#pragma once

#include <Eigen/Dense>
#include <array>

#include "landmark/crossfit.hpp"

namespace landmark {

// EIF-based standard error and Wald confidence interval.
// SE = sd(influence)/sqrt(n) with the n-1 covariance divisor; the exact
// 1/sqrt(2) width halving under sample duplication holds under the n divisor,
// selectable for that assertion.
EstimateReport se_ci(const EifSample& e, double level = 0.95, WarnCounters* warn = nullptr,
                     bool n_divisor = false);

// Two-sided p-value for H0: point = 0 from the normal approximation.
double wald_p_value(const EifSample& e);

// Empirical covariance of the influence vectors divided by n.
Eigen::MatrixXd joint_cov(const std::vector<const EifSample*>& samples);

// Per-arm simplex coordinates (Q0, Q1, QD) = (S-eta, eta, 1-S) with the 2x2
// covariance of (Q1, QD). Coordinates are kept raw here; clipping into the
// simplex happens only when rendering.
struct SimplexSummary {
  int arm = 0;
  double q0 = 0.0, q1 = 0.0, qd = 0.0;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  double level = 0.95;
};

SimplexSummary simplex_point(const EifSample& eta, const EifSample& surv, int arm,
                             double level = 0.95, WarnCounters* warn = nullptr);

// Boundary of the Wald confidence region {theta : (theta-hat)' Cov^-1
// (theta-hat) = chi2_2(level)} sampled at `points` angles, in barycentric
// coordinates (q0, q1, qd). A singular covariance degenerates to a segment.
std::vector<std::array<double, 3>> confidence_ellipse(const SimplexSummary& summary, int points,
                                                      WarnCounters* warn = nullptr);

struct WaldResult {
  double statistic = 0.0;
  int df = 2;
  double p_value = 1.0;
};

// Cross-arm covariance block Cov((Q1_1, QD_1), (Q1_0, QD_0)) from the four
// one-step samples of the same dataset.
Eigen::Matrix2d cross_cov_q(const EifSample& eta1, const EifSample& surv1, const EifSample& eta0,
                            const EifSample& surv0);

// Wald test of equality of (Q1, QD) across arms, chi-square with 2 df.
WaldResult wald_equality(const SimplexSummary& s1, const SimplexSummary& s0,
                         const Eigen::Matrix2d& cross_cov);

struct UtilityResult {
  double point = 0.0;
  double std_error = 0.0;
  double z = 0.0;
  double p_one_sided = 0.5;
  double weight = 0.5;
};

// One-sided test of H_u: w (QD0 - QD1) + (1-w) (eta1 - eta0) <= 0; note
// QD0 - QD1 = S1 - S0, so the survival contrast enters directly.
UtilityResult utility_test(const EifSample& eta_contrast, const EifSample& surv_contrast,
                           double w);

struct CurvePoint {
  double y = 0.0;
  EstimateReport contrast;
};

// Pointwise one-step contrasts eta_1(y) - eta_0(y) with pointwise CIs along a
// threshold grid; the outcome model is refit at every y.
std::vector<CurvePoint> eta_curve(const Pipeline& pipeline, std::span<const double> y_grid,
                                  double level = 0.95, WarnCounters* warn = nullptr);

}  // namespace landmark
