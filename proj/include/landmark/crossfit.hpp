#pragma once

#include "landmark/estimators.hpp"

namespace landmark {

enum class FoldStratify { none, by_treatment_and_delta };

struct FoldAssignment {
  std::size_t n = 0;
  int K = 1;
  std::vector<int> fold_of;
  std::uint64_t seed = 0;
  bool stratified = false;
};

// Seeded permutation split; the stratified option balances (A, Delta_t) cells
// across folds and falls back to an unstratified split (with a warning) when
// a stratum has fewer than K members. Fold sizes stay within +-1 of n/K,
// per stratum when stratified.
FoldAssignment make_folds(const Dataset& data, double t, int K, std::uint64_t seed,
                          FoldStratify stratify = FoldStratify::by_treatment_and_delta,
                          WarnCounters* warn = nullptr);

// Nuisances fitted once per fold complement (or once overall when folds = 1),
// reusable across thresholds: only the outcome model is refit per y.
class Pipeline {
 public:
  static Pipeline fit(const Dataset& data, const AnalysisConfig& config,
                      WarnCounters* warn = nullptr);

  // One-step eta_a(y) evaluated out-of-fold; with folds = 1 this is exactly
  // the direct estimator path.
  EifSample eta(int a, double y, WarnCounters* warn = nullptr) const;
  EifSample surv(int a, double u, WarnCounters* warn = nullptr) const;

  const FoldAssignment& folds() const { return folds_; }
  const NuisanceBundle& bundle(int k) const { return bundles_[k]; }

 private:
  const Dataset* data_ = nullptr;
  AnalysisConfig config_;
  FoldAssignment folds_;
  std::vector<std::vector<std::size_t>> train_;
  std::vector<std::vector<std::size_t>> test_;
  std::vector<NuisanceBundle> bundles_;  // outcome slot filled per threshold
};

struct EstimandSpec {
  enum class Kind { eta, surv };
  Kind kind = Kind::eta;
  int arm = 1;
  // threshold y for eta; horizon u for surv (defaults to the landmark time)
  std::optional<double> value;
};

// K-fold cross-fitted one-step estimate; folds = 1 dispatches to the
// non-cross-fitted path.
EifSample crossfit_onestep(const Dataset& data, const AnalysisConfig& config,
                           const EstimandSpec& estimand, WarnCounters* warn = nullptr);

}  // namespace landmark
