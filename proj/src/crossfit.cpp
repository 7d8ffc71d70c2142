#include "landmark/crossfit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace landmark {

FoldAssignment make_folds(const Dataset& data, double t, int K, std::uint64_t seed,
                          FoldStratify stratify, WarnCounters* warn) {
  const std::size_t n = data.n();
  if (K < 2) throw UsageError("make_folds: K must be >= 2");
  if (static_cast<std::size_t>(K) > n) throw UsageError("make_folds: K exceeds the sample size");

  FoldAssignment out;
  out.n = n;
  out.K = K;
  out.seed = seed;
  out.fold_of.assign(n, -1);

  // strata: (A, Delta_t) cells; Delta_t = 1 unless censored before or at t.
  std::vector<int> stratum_of(n, 0);
  int n_strata = 1;
  if (stratify == FoldStratify::by_treatment_and_delta) {
    for (std::size_t i = 0; i < n; ++i) {
      const int delta_t = data.time(i) > t ? 1 : data.status(i);
      stratum_of[i] = 2 * data.treatment(i) + delta_t;
    }
    n_strata = 4;
    std::vector<std::size_t> counts(n_strata, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[stratum_of[i]];
    bool ok = true;
    for (int s = 0; s < n_strata; ++s) {
      if (counts[s] > 0 && counts[s] < static_cast<std::size_t>(K)) ok = false;
    }
    if (!ok) {
      if (warn) ++warn->stratification_fallbacks;
      std::fill(stratum_of.begin(), stratum_of.end(), 0);
      n_strata = 1;
    } else {
      out.stratified = true;
    }
  }

  std::size_t offset = 0;
  for (int s = 0; s < n_strata; ++s) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (stratum_of[i] == s) members.push_back(i);
    }
    if (members.empty()) continue;
    Rng rng(derive_seed(seed, 0xf01d, static_cast<std::uint64_t>(s)));
    rng.shuffle(members);
    for (std::size_t p = 0; p < members.size(); ++p) {
      out.fold_of[members[p]] = static_cast<int>((offset + p) % static_cast<std::size_t>(K));
    }
    offset += members.size();
  }
  return out;
}

Pipeline Pipeline::fit(const Dataset& data, const AnalysisConfig& config, WarnCounters* warn) {
  config.validate();
  Pipeline p;
  p.data_ = &data;
  p.config_ = config;

  if (config.folds <= 1) {
    p.folds_.n = data.n();
    p.folds_.K = 1;
    p.folds_.fold_of.assign(data.n(), 0);
    p.folds_.seed = config.seed;
    auto rows = all_rows(data);
    p.train_.push_back(rows);
    p.test_.push_back(rows);
  } else {
    p.folds_ = make_folds(data, config.landmark_t, config.folds, config.seed,
                          FoldStratify::by_treatment_and_delta, warn);
    p.train_.resize(config.folds);
    p.test_.resize(config.folds);
    for (std::size_t i = 0; i < data.n(); ++i) {
      for (int k = 0; k < config.folds; ++k) {
        (p.folds_.fold_of[i] == k ? p.test_[k] : p.train_[k]).push_back(i);
      }
    }
  }

  const FitContext ctx{data, config.landmark_t, config.positivity_floor, &config, warn};
  const bool mar = config.missingness_mode == MissingnessMode::mar;
  for (std::size_t k = 0; k < p.train_.size(); ++k) {
    try {
      p.bundles_.push_back(fit_bundle(ctx, p.train_[k], config.threshold_y, config.learners,
                                      config.seed, /*with_outcome=*/false,
                                      /*with_missingness=*/mar));
    } catch (const EstimationError& e) {
      if (p.train_.size() > 1) {
        throw EstimationError("fold " + std::to_string(k) + ": " + e.what());
      }
      throw;
    }
  }
  return p;
}

EifSample Pipeline::eta(int a, double y, WarnCounters* warn) const {
  const Dataset& data = *data_;
  const std::size_t n = data.n();
  const bool mar = config_.missingness_mode == MissingnessMode::mar;
  const auto views = landmark_views(data, config_.landmark_t, y, config_.missingness_mode);
  const FitContext ctx{data, config_.landmark_t, config_.positivity_floor, &config_, warn};

  std::vector<double> qv(n), debias(n);
  for (std::size_t k = 0; k < bundles_.size(); ++k) {
    NuisanceBundle bundle = bundles_[k];
    try {
      bundle.outcome = fit_outcome_library(ctx, train_[k], y, config_.learners, config_.seed);
    } catch (const EstimationError& e) {
      if (bundles_.size() > 1) {
        throw EstimationError("fold " + std::to_string(k) + ": " + e.what());
      }
      throw;
    }
    for (std::size_t i : test_[k]) {
      const EtaTerms terms =
          eta_subject_terms(bundle, data, views, i, a, config_.landmark_t, mar, warn);
      qv[i] = terms.q;
      debias[i] = terms.debias;
    }
  }
  EifSample out;
  out.label = "eta[a=" + std::to_string(a) + ",y=" + format_double(y, 6) +
              ",t=" + format_double(config_.landmark_t, 6) + "]";
  out.n = n;
  out.sample_tag = data.tag();
  out.point = mean(qv) + mean(debias);
  out.influence.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.influence[i] = qv[i] - out.point + debias[i];
  return out;
}

EifSample Pipeline::surv(int a, double u, WarnCounters* warn) const {
  const Dataset& data = *data_;
  const std::size_t n = data.n();
  double max_fu = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_fu = std::max(max_fu, data.time(i));
  if (u > max_fu) throw EstimationError("surv: u exceeds the maximum follow-up time");

  std::vector<double> sv(n), term(n), corr(n);
  for (std::size_t k = 0; k < bundles_.size(); ++k) {
    for (std::size_t i : test_[k]) {
      const SurvTerms terms = surv_subject_terms(bundles_[k], data, i, a, u, warn);
      sv[i] = terms.s;
      corr[i] = terms.corr;
      term[i] = terms.s - terms.corr;
    }
  }
  EifSample out;
  out.label = "surv[a=" + std::to_string(a) + ",u=" + format_double(u, 6) + "]";
  out.n = n;
  out.sample_tag = data.tag();
  out.point = mean(term);
  out.influence.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.influence[i] = sv[i] - out.point - corr[i];
  return out;
}

EifSample crossfit_onestep(const Dataset& data, const AnalysisConfig& config,
                           const EstimandSpec& estimand, WarnCounters* warn) {
  const Pipeline p = Pipeline::fit(data, config, warn);
  if (estimand.kind == EstimandSpec::Kind::eta) {
    return p.eta(estimand.arm, estimand.value.value_or(config.threshold_y), warn);
  }
  return p.surv(estimand.arm, estimand.value.value_or(config.landmark_t), warn);
}

}  // namespace landmark
