#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "landmark/data.hpp"

namespace landmark {

enum class Link { logit, probit };
enum class HazardTarget { event, censoring };

struct GlmOptions {
  double tol = 1e-9;
  int max_iter = 100;
  double separation_bound = 30.0;
};

struct GlmFit {
  Eigen::VectorXd beta;
  std::vector<int> kept;  // columns retained after zero-variance drop (intercept always)
  int iterations = 0;
  double grad_norm = 0.0;
  bool degenerate = false;   // all responses identical
  double const_prob = 0.0;   // prediction when degenerate
};

// Binary regression by Fisher scoring with step halving; converges to
// score sup-norm <= tol. Column 0 of X must be the intercept.
GlmFit fit_glm_binary(const Eigen::MatrixXd& X, std::span<const int> y, Link link,
                      const GlmOptions& opt = {}, WarnCounters* warn = nullptr);

double link_inverse(Link link, double eta);

// ---------------------------------------------------------------------------
// Propensity

enum class PropensityKind { known_constant, logistic, cell_means, intercept_only };

class PropensityFit {
 public:
  static PropensityFit known(double prob, double floor);
  static PropensityFit logistic_main(const Dataset& data, std::span<const std::size_t> rows,
                                     double floor, const GlmOptions& opt = {},
                                     WarnCounters* warn = nullptr);
  static PropensityFit intercept_only(const Dataset& data, std::span<const std::size_t> rows,
                                      double floor);

  // P(A=1 | L), clipped to [floor, 1-floor].
  double prob_treated(std::span<const double> l) const;
  // P(A=a | L).
  double prob_arm(int a, std::span<const double> l) const {
    const double p = prob_treated(l);
    return a == 1 ? p : 1.0 - p;
  }

  PropensityKind kind = PropensityKind::logistic;
  double fixed_prob = 0.5;
  GlmFit glm;
  double floor = 0.01;
  // cell-means learner support
  std::vector<double> cell_probs;
  std::vector<double> cell_edges_l;  // used by learners.cpp
  int cell_covariate = -1;
  std::function<double(std::span<const double>)> custom;
};

// ---------------------------------------------------------------------------
// Hazards (Cox / Kaplan-Meier via the zero-covariate path)

struct CoxOptions {
  double tol = 1e-9;
  int max_iter = 100;
  int max_step_halvings = 20;
  SurvivalEvalForm form = SurvivalEvalForm::product_limit;
};

// Per-stratum Breslow baseline: jump times of the target process in composite
// (time, phase) order, phase 0 = events, 1 = censorings. Deaths precede
// censorings at tied timestamps; risk sets follow the composite order.
struct StratumHazard {
  Eigen::VectorXd beta;
  std::vector<int> kept;
  std::vector<double> center;
  std::vector<double> jump_times;
  std::vector<double> dlambda0;
  std::vector<double> cum_lambda0;
  double grad_norm = 0.0;
  int iterations = 0;
};

// One subject's fitted hazard process up to a horizon: jump times, conditional
// increments dLambda(s|a,l), and the survival value at and just before each
// jump under the fit's evaluation form.
struct HazardPath {
  std::vector<double> times;
  std::vector<double> increments;
  std::vector<double> surv_at;      // S(s), includes the jump at s
  std::vector<double> surv_before;  // S(s-)
};

class HazardFit {
 public:
  HazardTarget target = HazardTarget::event;
  bool stratified = true;
  SurvivalEvalForm form = SurvivalEvalForm::product_limit;
  std::vector<int> covariate_idx;  // dataset covariate columns used
  std::array<StratumHazard, 2> strata;  // unstratified fits use slot 0
  // Cell learners route evaluation to per-cell baselines instead of strata.
  std::function<const StratumHazard*(int, std::span<const double>)> cell_lookup;

  const StratumHazard& stratum(int arm) const { return strata[stratified ? arm : 0]; }
  const StratumHazard& stratum_for(int arm, std::span<const double> l) const {
    return cell_lookup ? *cell_lookup(arm, l) : stratum(arm);
  }
  int phase() const { return target == HazardTarget::censoring ? 1 : 0; }

  // exp(beta . (l_kept - center)) for the subject's covariates.
  double risk_score(int arm, std::span<const double> l) const;
  // P(survivor past r | arm, l); left_limit excludes jumps at exactly r.
  double survival(double r, int arm, std::span<const double> l, bool left_limit = false) const;
  double cumhaz(double r, int arm, std::span<const double> l) const;
  std::vector<std::pair<double, double>> increments(int arm, std::span<const double> l,
                                                    double upto) const;
  HazardPath path(int arm, std::span<const double> l, double horizon) const;
};

// Fits a stratified (per-arm) Cox model of the requested target by
// Newton-Raphson on the Breslow partial likelihood; with no covariates the
// result is exactly the stratified Nelson-Aalen / product-limit machinery.
HazardFit fit_hazard(const Dataset& data, std::span<const std::size_t> rows, HazardTarget target,
                     std::span<const int> covariate_idx, bool stratify_by_treatment,
                     const CoxOptions& opt = {}, WarnCounters* warn = nullptr);

// Breslow partial log-likelihood at beta, for cross-checking optimizers.
double cox_partial_loglik(const Dataset& data, std::span<const std::size_t> rows,
                          HazardTarget target, std::span<const int> covariate_idx, int arm,
                          std::span<const double> beta);

// ---------------------------------------------------------------------------
// Outcome tail model G(y | A, L) = P(Y > y | T > t, A, L)

enum class OutcomeDesign { intercept_per_arm, main_effects, treatment_interaction, cell_means };

class OutcomeFit {
 public:
  Link link = Link::probit;
  OutcomeDesign design = OutcomeDesign::treatment_interaction;
  GlmFit glm;
  double threshold_y = 0.0;
  bool degenerate = false;
  double const_prob = 0.0;
  std::function<double(int, std::span<const double>)> custom;

  // G(y | a, l) for the threshold the model was fitted at.
  double prob_above(int a, std::span<const double> l) const;
};

// Fitted on subjects under observation past t with an observed marker.
OutcomeFit fit_outcome(const Dataset& data, std::span<const std::size_t> rows, double t, double y,
                       Link link, OutcomeDesign design, const GlmOptions& opt = {},
                       WarnCounters* warn = nullptr);

// ---------------------------------------------------------------------------
// Marker-missingness model p(A, L) = P(R=1 | A, L, T* > t)

class MissingnessFit {
 public:
  GlmFit glm;
  double floor = 0.01;
  bool all_observed = false;

  double prob_observed(int a, std::span<const double> l) const;
};

MissingnessFit fit_missingness(const Dataset& data, std::span<const std::size_t> rows, double t,
                               double floor, const GlmOptions& opt = {},
                               WarnCounters* warn = nullptr);

// ---------------------------------------------------------------------------

struct NuisanceBundle {
  PropensityFit propensity;
  HazardFit event;
  HazardFit censoring;
  OutcomeFit outcome;
  std::optional<MissingnessFit> missingness;
  double positivity_floor = 0.01;

  std::string to_json() const;
};

}  // namespace landmark
