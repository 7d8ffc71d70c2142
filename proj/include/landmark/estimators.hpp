#pragma once

#include <functional>
#include <string>
#include <vector>

#include "landmark/learners.hpp"
#include "landmark/nuisance.hpp"

namespace landmark {

// A point estimate together with the estimated per-subject efficient
// influence values: the inference currency of the whole artifact. For
// non-cross-fitted one-step estimates the influence values average to zero by
// construction.
struct EifSample {
  std::string label;
  double point = 0.0;
  std::vector<double> influence;
  std::size_t n = 0;
  std::uint64_t sample_tag = 0;

  std::string to_json() const;
};

struct EstimateReport {
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
};

// Plug-in estimator: sample average over all subjects of
// Q_y(a, L_i) = G(y|a,L_i) * S(t|a,L_i).
double plugin_eta(const NuisanceBundle& bundle, const Dataset& data, int a, double t);

// Per-subject censoring-martingale integral
//   int_0^t dM_C(r|A,L) / H(r|A,L),  H(r) = S(r) K(r-),
// evaluated at the subject's own arm and covariates.
double censoring_mart_integral(const NuisanceBundle& bundle, const Dataset& data, std::size_t i,
                               double t, WarnCounters* warn = nullptr);

// Per-subject pieces of the one-step estimators, exposed so the cross-fitting
// layer can evaluate held-out subjects against fold-specific bundles.
struct EtaTerms {
  double q = 0.0;       // plug-in term G(y|a,L_i) S(t|a,L_i)
  double debias = 0.0;  // weighted debiasing term
};
EtaTerms eta_subject_terms(const NuisanceBundle& bundle, const Dataset& data,
                           const std::vector<LandmarkView>& views, std::size_t i, int a, double t,
                           bool mar, WarnCounters* warn);

struct SurvTerms {
  double s = 0.0;     // S(u|a,L_i)
  double corr = 0.0;  // I(A=a)/P(A=a|L) * S * event-martingale integral
};
SurvTerms surv_subject_terms(const NuisanceBundle& bundle, const Dataset& data, std::size_t i,
                             int a, double u, WarnCounters* warn);

// One-step (debiased) estimator of eta_a(y) = P(T > t, Y > y | do(A=a)).
// Views must come from landmark_views(data, t, y, mode matching `mar`).
EifSample onestep_eta(const NuisanceBundle& bundle, const Dataset& data,
                      const std::vector<LandmarkView>& views, int a, double t, double y,
                      bool mar = false, WarnCounters* warn = nullptr);

// Efficient one-step estimator of S_a(u) built on the event-counting-process
// martingale.
EifSample onestep_surv(const NuisanceBundle& bundle, const Dataset& data, int a, double u,
                       WarnCounters* warn = nullptr);

// Unadjusted comparator {K_hat(t|A=a) pi_hat_a}^-1 P_n I(A=a, T*>t, Y>y) with
// a seeded nonparametric bootstrap standard error.
EstimateReport unadjusted_eta(const Dataset& data, const std::vector<LandmarkView>& views, int a,
                              double t, double y, double level = 0.95, int bootstrap_reps = 500,
                              std::uint64_t seed = 1, WarnCounters* warn = nullptr);

// Arm-wise Kaplan-Meier at u with Greenwood standard error.
EstimateReport unadjusted_surv(const Dataset& data, int a, double u, double level = 0.95);

// Pointwise difference e1 - e0 of estimates and influence values.
EifSample contrast(const EifSample& e1, const EifSample& e0);

// Trapezoid integration of a y-indexed family of contrasts over y_grid; the
// callback must return the contrast EifSample at the requested threshold.
// A single-point grid integrates with unit cell width (binary markers).
EifSample mean_psi(std::span<const double> y_grid,
                   const std::function<EifSample(double)>& contrast_at);

}  // namespace landmark
