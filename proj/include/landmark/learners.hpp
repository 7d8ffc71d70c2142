#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "landmark/nuisance.hpp"
#include "landmark/rng.hpp"

namespace landmark {

// Inputs shared by every learner fit.
struct FitContext {
  const Dataset& data;
  double t;
  double floor;
  const AnalysisConfig* config = nullptr;
  WarnCounters* warn = nullptr;
};

// Discrete super-learner: every candidate is trained on K-1 folds and scored
// on the held-out fold with the supplied loss (mean per subject); the
// candidate with minimal cross-validated loss is refit on all rows. Ties break
// to the lower index; candidates that fail to fit on some fold get infinite
// loss. Fold assignment is seeded and reproducible.
template <typename Model>
struct CvChoice {
  int chosen = 0;
  Model model;
  std::vector<double> cv_loss;
};

template <typename Model>
CvChoice<Model> cv_select(
    int n_candidates,
    const std::function<Model(int, std::span<const std::size_t>)>& fit,
    const std::function<double(const Model&, std::span<const std::size_t>,
                               std::span<const std::size_t>)>& loss,
    std::span<const std::size_t> rows, int folds, std::uint64_t seed,
    WarnCounters* warn = nullptr) {
  if (n_candidates < 1) throw EstimationError("cv_select: no candidates");
  if (n_candidates == 1) {
    return {0, fit(0, rows), {0.0}};
  }
  if (folds < 2) throw EstimationError("cv_select: folds must be >= 2");
  if (static_cast<std::size_t>(folds) > rows.size()) {
    throw EstimationError("cv_select: more folds than rows");
  }

  std::vector<std::size_t> order(rows.begin(), rows.end());
  Rng rng(derive_seed(seed, 0x5e1ec7));
  rng.shuffle(order);
  std::vector<int> fold_of(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) fold_of[i] = static_cast<int>(i % folds);

  std::vector<double> total(static_cast<std::size_t>(n_candidates), 0.0);
  std::vector<bool> failed(static_cast<std::size_t>(n_candidates), false);
  for (int k = 0; k < folds; ++k) {
    std::vector<std::size_t> train, valid;
    for (std::size_t i = 0; i < order.size(); ++i) {
      (fold_of[i] == k ? valid : train).push_back(order[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(valid.begin(), valid.end());
    for (int c = 0; c < n_candidates; ++c) {
      if (failed[c]) continue;
      try {
        Model m = fit(c, train);
        const double l = loss(m, train, valid);
        if (!std::isfinite(l)) throw EstimationError("non-finite validation loss");
        total[c] += l * static_cast<double>(valid.size());
      } catch (const EstimationError&) {
        failed[c] = true;
        if (warn) ++warn->cv_candidate_failures;
      }
    }
  }
  int best = -1;
  for (int c = 0; c < n_candidates; ++c) {
    if (failed[c]) continue;
    if (best < 0 || total[c] < total[best]) best = c;
  }
  if (best < 0) throw EstimationError("cv_select: every candidate failed to fit");
  CvChoice<Model> out;
  out.chosen = best;
  out.cv_loss.resize(n_candidates);
  for (int c = 0; c < n_candidates; ++c) {
    out.cv_loss[c] = failed[c] ? HUGE_VAL : total[c] / static_cast<double>(rows.size());
  }
  out.model = fit(best, rows);
  return out;
}

// Named learner fits. Propensity: known, intercept-only, logistic-main,
// cells. Outcome: intercept-per-arm, logit-main, logit-interaction,
// probit-main, probit-interaction, cells. Hazards: km, km-pooled, cox-main,
// cox-main-exp, cellkm.
PropensityFit fit_propensity_named(const std::string& name, const FitContext& ctx,
                                   std::span<const std::size_t> rows);
OutcomeFit fit_outcome_named(const std::string& name, const FitContext& ctx,
                             std::span<const std::size_t> rows, double y);
HazardFit fit_hazard_named(const std::string& name, const FitContext& ctx,
                           std::span<const std::size_t> rows, HazardTarget target);

// Cross-validated losses used by the libraries: mean negative log-likelihood
// for binary nuisances, inverse-probability-of-censoring-weighted Brier score
// at the landmark for the hazard models.
double propensity_nll(const PropensityFit& fit, const FitContext& ctx,
                      std::span<const std::size_t> valid);
double outcome_nll(const OutcomeFit& fit, const FitContext& ctx,
                   std::span<const std::size_t> valid, double y);
double hazard_brier_at_t(const HazardFit& fit, const FitContext& ctx,
                         std::span<const std::size_t> train, std::span<const std::size_t> valid,
                         HazardTarget target);

// Fits every nuisance of the bundle on `rows`, running the discrete
// super-learner wherever the library names several candidates. The outcome
// model is fitted at threshold y (callers refit per y along grids);
// with_outcome=false leaves the outcome slot empty for survival-only use.
NuisanceBundle fit_bundle(const FitContext& ctx, std::span<const std::size_t> rows, double y,
                          const LearnerLibrary& lib, std::uint64_t seed, bool with_outcome = true,
                          bool with_missingness = false);

// Refit only the outcome model (cv-selected when several candidates) at a new
// threshold y; used by threshold grids.
OutcomeFit fit_outcome_library(const FitContext& ctx, std::span<const std::size_t> rows, double y,
                               const LearnerLibrary& lib, std::uint64_t seed);

std::vector<std::size_t> all_rows(const Dataset& data);

}  // namespace landmark
