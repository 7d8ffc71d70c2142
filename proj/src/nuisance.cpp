#include "landmark/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace landmark {

double link_inverse(Link link, double eta) {
  if (link == Link::logit) return 1.0 / (1.0 + std::exp(-eta));
  return norm_cdf(eta);
}

namespace {

constexpr double kProbClamp = 1e-12;

double clamp_prob(double p) { return std::min(1.0 - kProbClamp, std::max(kProbClamp, p)); }

double binary_loglik(const Eigen::VectorXd& eta, std::span<const int> y, Link link) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double p = clamp_prob(link_inverse(link, eta[i]));
    ll += y[i] ? std::log(p) : std::log1p(-p);
  }
  return ll;
}

}  // namespace

GlmFit fit_glm_binary(const Eigen::MatrixXd& X, std::span<const int> y, Link link,
                      const GlmOptions& opt, WarnCounters* warn) {
  const Eigen::Index n = X.rows();
  if (n == 0) throw EstimationError("binary regression on an empty sample");
  if (static_cast<std::size_t>(n) != y.size()) {
    throw EstimationError("design/response size mismatch");
  }

  GlmFit fit;
  const int sum_y = std::accumulate(y.begin(), y.end(), 0);
  if (sum_y == 0 || sum_y == static_cast<int>(y.size())) {
    fit.degenerate = true;
    fit.const_prob = static_cast<double>(sum_y) / static_cast<double>(y.size());
    fit.beta = Eigen::VectorXd::Zero(X.cols());
    if (warn) ++warn->degenerate_fits;
    return fit;
  }

  // Drop zero-variance columns (intercept stays).
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (j == 0) {
      fit.kept.push_back(0);
      continue;
    }
    const double lo = X.col(j).minCoeff(), hi = X.col(j).maxCoeff();
    if (hi > lo) {
      fit.kept.push_back(static_cast<int>(j));
    } else if (warn) {
      ++warn->dropped_covariates;
    }
  }
  Eigen::MatrixXd Xk(n, static_cast<Eigen::Index>(fit.kept.size()));
  for (std::size_t j = 0; j < fit.kept.size(); ++j) Xk.col(j) = X.col(fit.kept[j]);

  const Eigen::Index p = Xk.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Xk * beta;
  double ll = binary_loglik(eta, y, link);

  for (int iter = 1; iter <= opt.max_iter; ++iter) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = eta[i];
      const double mu = clamp_prob(link_inverse(link, e));
      double gscale, wscale;
      if (link == Link::logit) {
        gscale = y[i] - mu;
        wscale = mu * (1.0 - mu);
      } else {
        const double phi = std::exp(-0.5 * e * e) / std::sqrt(2.0 * M_PI);
        gscale = phi * (y[i] - mu) / (mu * (1.0 - mu));
        wscale = phi * phi / (mu * (1.0 - mu));
      }
      grad.noalias() += gscale * Xk.row(i).transpose();
      info.noalias() += wscale * Xk.row(i).transpose() * Xk.row(i);
    }
    fit.grad_norm = grad.lpNorm<Eigen::Infinity>();
    fit.iterations = iter;
    if (fit.grad_norm <= opt.tol) break;
    if (iter == opt.max_iter) {
      throw EstimationError("binary regression failed to converge; final gradient sup-norm " +
                            std::to_string(fit.grad_norm));
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) {
      throw EstimationError("binary regression: singular information matrix");
    }
    Eigen::VectorXd step = ldlt.solve(grad);
    double scale = 1.0;
    for (int h = 0; h <= 20; ++h) {
      Eigen::VectorXd cand = beta + scale * step;
      Eigen::VectorXd ceta = Xk * cand;
      const double cll = binary_loglik(ceta, y, link);
      if (std::isfinite(cll) && cll >= ll - 1e-12) {
        beta = cand;
        eta = ceta;
        ll = cll;
        break;
      }
      scale *= 0.5;
      if (h == 20) throw EstimationError("binary regression: step halving failed");
    }
    if (beta.lpNorm<Eigen::Infinity>() > opt.separation_bound) {
      throw EstimationError(
          "binary regression: diverging coefficients (|beta| > " +
          format_double(opt.separation_bound, 0) +
          "), data may be separated; consider known randomization probability or a floor");
    }
  }
  fit.beta = beta;
  return fit;
}

// ---------------------------------------------------------------------------
// Propensity

PropensityFit PropensityFit::known(double prob, double floor) {
  PropensityFit f;
  f.kind = PropensityKind::known_constant;
  f.fixed_prob = prob;
  f.floor = floor;
  return f;
}

PropensityFit PropensityFit::intercept_only(const Dataset& data,
                                            std::span<const std::size_t> rows, double floor) {
  std::size_t treated = 0;
  for (auto i : rows) treated += data.treatment(i);
  if (treated == 0 || treated == rows.size()) {
    throw EstimationError("propensity: only one treatment arm present");
  }
  PropensityFit f;
  f.kind = PropensityKind::intercept_only;
  f.fixed_prob = static_cast<double>(treated) / static_cast<double>(rows.size());
  f.floor = floor;
  return f;
}

PropensityFit PropensityFit::logistic_main(const Dataset& data, std::span<const std::size_t> rows,
                                           double floor, const GlmOptions& opt,
                                           WarnCounters* warn) {
  std::size_t treated = 0;
  for (auto i : rows) treated += data.treatment(i);
  if (treated == 0 || treated == rows.size()) {
    throw EstimationError("propensity: only one treatment arm present");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index p = static_cast<Eigen::Index>(data.n_covariates());
  Eigen::MatrixXd X(n, p + 1);
  std::vector<int> y(rows.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = rows[r];
    X(r, 0) = 1.0;
    auto cov = data.covariates(i);
    for (Eigen::Index j = 0; j < p; ++j) X(r, j + 1) = cov[j];
    y[r] = data.treatment(i);
  }
  PropensityFit f;
  f.kind = PropensityKind::logistic;
  f.floor = floor;
  try {
    f.glm = fit_glm_binary(X, y, Link::logit, opt, warn);
  } catch (const EstimationError& e) {
    throw EstimationError(std::string("propensity: ") + e.what());
  }
  return f;
}

double PropensityFit::prob_treated(std::span<const double> l) const {
  double p;
  switch (kind) {
    case PropensityKind::known_constant:
    case PropensityKind::intercept_only:
      p = fixed_prob;
      break;
    case PropensityKind::cell_means:
      p = custom(l);
      break;
    default: {
      if (glm.degenerate) {
        p = glm.const_prob;
        break;
      }
      double eta = 0.0;
      for (std::size_t j = 0; j < glm.kept.size(); ++j) {
        const int col = glm.kept[j];
        eta += glm.beta[static_cast<Eigen::Index>(j)] * (col == 0 ? 1.0 : l[col - 1]);
      }
      p = link_inverse(Link::logit, eta);
    }
  }
  return std::min(1.0 - floor, std::max(floor, p));
}

// ---------------------------------------------------------------------------
// Cox / product-limit hazards

namespace {

struct CoxSubject {
  double time;
  int phase;  // 0 death, 1 censoring (own exit type)
  std::size_t row;
};

// Composite ordering: deaths precede censorings at tied timestamps.
bool composite_less(const CoxSubject& a, const CoxSubject& b) {
  if (a.time != b.time) return a.time < b.time;
  return a.phase < b.phase;
}

struct StratumData {
  std::vector<CoxSubject> subjects;  // descending composite order
  Eigen::MatrixXd X;                 // centered kept covariates, aligned with subjects
  std::size_t n_target = 0;
};

// Breslow partial log-likelihood over one stratum given linear predictors.
double stratum_loglik(const StratumData& sd, const Eigen::VectorXd& xb, int target_phase) {
  double ll = 0.0;
  double s0 = 0.0;
  std::size_t i = 0;
  const std::size_t m = sd.subjects.size();
  while (i < m) {
    std::size_t j = i;
    double group_lp = 0.0;
    int d = 0;
    while (j < m && sd.subjects[j].time == sd.subjects[i].time &&
           sd.subjects[j].phase == sd.subjects[i].phase) {
      s0 += std::exp(xb[static_cast<Eigen::Index>(j)]);
      if (sd.subjects[j].phase == target_phase) {
        group_lp += xb[static_cast<Eigen::Index>(j)];
        ++d;
      }
      ++j;
    }
    if (d > 0) ll += group_lp - d * std::log(s0);
    i = j;
  }
  return ll;
}

}  // namespace

HazardFit fit_hazard(const Dataset& data, std::span<const std::size_t> rows, HazardTarget target,
                     std::span<const int> covariate_idx, bool stratify_by_treatment,
                     const CoxOptions& opt, WarnCounters* warn) {
  HazardFit fit;
  fit.target = target;
  fit.stratified = stratify_by_treatment;
  fit.form = opt.form;
  fit.covariate_idx.assign(covariate_idx.begin(), covariate_idx.end());
  const int target_phase = fit.phase();
  const int n_strata = stratify_by_treatment ? 2 : 1;

  for (int s = 0; s < n_strata; ++s) {
    StratumData sd;
    for (auto i : rows) {
      if (stratify_by_treatment && data.treatment(i) != s) continue;
      sd.subjects.push_back({data.time(i), data.status(i) == 1 ? 0 : 1, i});
    }
    if (sd.subjects.empty()) {
      if (stratify_by_treatment) {
        throw EstimationError("hazard fit: stratum " + std::to_string(s) + " is empty");
      }
      continue;
    }
    std::sort(sd.subjects.begin(), sd.subjects.end(),
              [](const CoxSubject& a, const CoxSubject& b) { return composite_less(b, a); });
    for (const auto& sub : sd.subjects) sd.n_target += (sub.phase == target_phase);

    StratumHazard& out = fit.strata[s];
    if (sd.n_target == 0) {
      if (target == HazardTarget::event) {
        throw EstimationError("hazard fit: no events in stratum " + std::to_string(s));
      }
      // No censorings: K = 1 identically.
      out.beta = Eigen::VectorXd::Zero(0);
      continue;
    }

    // Keep covariates with in-stratum variation, centered at stratum means.
    for (int col : covariate_idx) {
      double lo = HUGE_VAL, hi = -HUGE_VAL, sum = 0.0;
      for (const auto& sub : sd.subjects) {
        const double v = data.covariates(sub.row)[col];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      if (hi > lo) {
        out.kept.push_back(col);
        out.center.push_back(sum / static_cast<double>(sd.subjects.size()));
      } else if (warn) {
        ++warn->dropped_covariates;
      }
    }
    const Eigen::Index p = static_cast<Eigen::Index>(out.kept.size());
    const Eigen::Index m = static_cast<Eigen::Index>(sd.subjects.size());
    sd.X.resize(m, p);
    for (Eigen::Index r = 0; r < m; ++r) {
      auto cov = data.covariates(sd.subjects[static_cast<std::size_t>(r)].row);
      for (Eigen::Index j = 0; j < p; ++j) {
        sd.X(r, j) = cov[out.kept[static_cast<std::size_t>(j)]] -
                     out.center[static_cast<std::size_t>(j)];
      }
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    if (p > 0) {
      Eigen::VectorXd xb = sd.X * beta;
      double ll = stratum_loglik(sd, xb, target_phase);
      bool converged = false;
      for (int iter = 1; iter <= opt.max_iter; ++iter) {
        // One descending sweep accumulating risk sums and derivatives.
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
        Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
        double s0 = 0.0;
        Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
        Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
        std::size_t i = 0;
        const auto msz = sd.subjects.size();
        while (i < msz) {
          std::size_t j = i;
          Eigen::VectorXd gx = Eigen::VectorXd::Zero(p);
          int d = 0;
          while (j < msz && sd.subjects[j].time == sd.subjects[i].time &&
                 sd.subjects[j].phase == sd.subjects[i].phase) {
            const auto rj = static_cast<Eigen::Index>(j);
            const double w = std::exp(xb[rj]);
            s0 += w;
            s1.noalias() += w * sd.X.row(rj).transpose();
            s2.noalias() += w * sd.X.row(rj).transpose() * sd.X.row(rj);
            if (sd.subjects[j].phase == target_phase) {
              gx += sd.X.row(rj).transpose();
              ++d;
            }
            ++j;
          }
          if (d > 0) {
            const Eigen::VectorXd xbar = s1 / s0;
            grad.noalias() += gx - d * xbar;
            info.noalias() += d * (s2 / s0 - xbar * xbar.transpose());
          }
          i = j;
        }
        out.grad_norm = grad.lpNorm<Eigen::Infinity>();
        out.iterations = iter;
        if (out.grad_norm <= opt.tol) {
          converged = true;
          break;
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success) {
          throw EstimationError("cox fit: singular information matrix");
        }
        Eigen::VectorXd step = ldlt.solve(grad);
        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opt.max_step_halvings; ++h) {
          Eigen::VectorXd cand = beta + scale * step;
          Eigen::VectorXd cxb = sd.X * cand;
          const double cll = stratum_loglik(sd, cxb, target_phase);
          if (std::isfinite(cll) && cll >= ll - 1e-12) {
            beta = cand;
            xb = cxb;
            ll = cll;
            accepted = true;
            break;
          }
          scale *= 0.5;
        }
        if (!accepted) {
          throw EstimationError("cox fit: partial likelihood decreased after " +
                                std::to_string(opt.max_step_halvings) + " step halvings");
        }
      }
      if (!converged) {
        throw EstimationError("cox fit failed to converge; final score sup-norm " +
                              std::to_string(out.grad_norm));
      }
    }
    out.beta = beta;

    // Breslow baseline increments at the target's composite jump times.
    Eigen::VectorXd xb = p > 0 ? Eigen::VectorXd(sd.X * beta) : Eigen::VectorXd::Zero(m);
    double s0 = 0.0;
    std::size_t i = 0;
    const auto msz = sd.subjects.size();
    while (i < msz) {
      std::size_t j = i;
      int d = 0;
      while (j < msz && sd.subjects[j].time == sd.subjects[i].time &&
             sd.subjects[j].phase == sd.subjects[i].phase) {
        s0 += std::exp(xb[static_cast<Eigen::Index>(j)]);
        d += (sd.subjects[j].phase == target_phase);
        ++j;
      }
      if (d > 0) {
        out.jump_times.push_back(sd.subjects[i].time);
        out.dlambda0.push_back(static_cast<double>(d) / s0);
      }
      i = j;
    }
    std::reverse(out.jump_times.begin(), out.jump_times.end());
    std::reverse(out.dlambda0.begin(), out.dlambda0.end());
    out.cum_lambda0.resize(out.dlambda0.size());
    double cum = 0.0;
    for (std::size_t k = 0; k < out.dlambda0.size(); ++k) {
      cum += out.dlambda0[k];
      out.cum_lambda0[k] = cum;
    }
  }
  return fit;
}

namespace {

double stratum_risk_score(const StratumHazard& st, std::span<const double> l) {
  if (st.kept.empty()) return 1.0;
  double eta = 0.0;
  for (std::size_t j = 0; j < st.kept.size(); ++j) {
    eta += st.beta[static_cast<Eigen::Index>(j)] * (l[st.kept[j]] - st.center[j]);
  }
  return std::exp(eta);
}

}  // namespace

double HazardFit::risk_score(int arm, std::span<const double> l) const {
  return stratum_risk_score(stratum_for(arm, l), l);
}

double HazardFit::survival(double r, int arm, std::span<const double> l, bool left_limit) const {
  const StratumHazard& st = stratum_for(arm, l);
  if (st.jump_times.empty()) return 1.0;
  const double w = stratum_risk_score(st, l);
  if (form == SurvivalEvalForm::exponential) {
    auto it = std::upper_bound(st.jump_times.begin(), st.jump_times.end(), r);
    if (left_limit) {
      it = std::lower_bound(st.jump_times.begin(), st.jump_times.end(), r);
    }
    if (it == st.jump_times.begin()) return 1.0;
    const auto k = static_cast<std::size_t>(it - st.jump_times.begin()) - 1;
    return std::exp(-w * st.cum_lambda0[k]);
  }
  double prod = 1.0;
  for (std::size_t k = 0; k < st.jump_times.size(); ++k) {
    const double s = st.jump_times[k];
    if (s > r || (left_limit && s == r)) break;
    const double factor = 1.0 - w * st.dlambda0[k];
    if (factor <= 0.0) {
      throw EstimationError(
          "product-limit survival factor <= 0 at jump time " + std::to_string(s) +
          "; refit with the exponential survival form");
    }
    prod *= factor;
  }
  return prod;
}

double HazardFit::cumhaz(double r, int arm, std::span<const double> l) const {
  const StratumHazard& st = stratum_for(arm, l);
  if (st.jump_times.empty()) return 0.0;
  const double w = stratum_risk_score(st, l);
  auto it = std::upper_bound(st.jump_times.begin(), st.jump_times.end(), r);
  if (it == st.jump_times.begin()) return 0.0;
  const auto k = static_cast<std::size_t>(it - st.jump_times.begin()) - 1;
  return w * st.cum_lambda0[k];
}

std::vector<std::pair<double, double>> HazardFit::increments(int arm, std::span<const double> l,
                                                             double upto) const {
  const StratumHazard& st = stratum_for(arm, l);
  std::vector<std::pair<double, double>> out;
  const double w = stratum_risk_score(st, l);
  for (std::size_t k = 0; k < st.jump_times.size(); ++k) {
    if (st.jump_times[k] > upto) break;
    out.emplace_back(st.jump_times[k], w * st.dlambda0[k]);
  }
  return out;
}

HazardPath HazardFit::path(int arm, std::span<const double> l, double horizon) const {
  const StratumHazard& st = stratum_for(arm, l);
  HazardPath out;
  const double w = stratum_risk_score(st, l);
  double prod = 1.0;
  for (std::size_t k = 0; k < st.jump_times.size(); ++k) {
    const double s = st.jump_times[k];
    if (s > horizon) break;
    const double inc = w * st.dlambda0[k];
    out.times.push_back(s);
    out.increments.push_back(inc);
    out.surv_before.push_back(prod);
    if (form == SurvivalEvalForm::exponential) {
      prod = std::exp(-w * st.cum_lambda0[k]);
    } else {
      const double factor = 1.0 - inc;
      if (factor <= 0.0) {
        throw EstimationError(
            "product-limit survival factor <= 0 at jump time " + std::to_string(s) +
            "; refit with the exponential survival form");
      }
      prod *= factor;
    }
    out.surv_at.push_back(prod);
  }
  return out;
}

double cox_partial_loglik(const Dataset& data, std::span<const std::size_t> rows,
                          HazardTarget target, std::span<const int> covariate_idx, int arm,
                          std::span<const double> beta) {
  const int target_phase = target == HazardTarget::censoring ? 1 : 0;
  std::vector<CoxSubject> subjects;
  for (auto i : rows) {
    if (data.treatment(i) != arm) continue;
    subjects.push_back({data.time(i), data.status(i) == 1 ? 0 : 1, i});
  }
  std::sort(subjects.begin(), subjects.end(),
            [](const CoxSubject& a, const CoxSubject& b) { return composite_less(b, a); });
  double ll = 0.0, s0 = 0.0;
  std::size_t i = 0;
  while (i < subjects.size()) {
    std::size_t j = i;
    double group_lp = 0.0;
    int d = 0;
    while (j < subjects.size() && subjects[j].time == subjects[i].time &&
           subjects[j].phase == subjects[i].phase) {
      auto cov = data.covariates(subjects[j].row);
      double lp = 0.0;
      for (std::size_t k = 0; k < covariate_idx.size(); ++k) lp += beta[k] * cov[covariate_idx[k]];
      s0 += std::exp(lp);
      if (subjects[j].phase == target_phase) {
        group_lp += lp;
        ++d;
      }
      ++j;
    }
    if (d > 0) ll += group_lp - d * std::log(s0);
    i = j;
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Outcome model

namespace {

Eigen::MatrixXd outcome_design(const Dataset& data, std::span<const std::size_t> rows,
                               OutcomeDesign design) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index p = static_cast<Eigen::Index>(data.n_covariates());
  Eigen::Index cols;
  switch (design) {
    case OutcomeDesign::intercept_per_arm: cols = 2; break;
    case OutcomeDesign::main_effects: cols = 2 + p; break;
    default: cols = 2 + 2 * p; break;
  }
  Eigen::MatrixXd X(n, cols);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = rows[static_cast<std::size_t>(r)];
    const double a = data.treatment(i);
    X(r, 0) = 1.0;
    X(r, 1) = a;
    if (design != OutcomeDesign::intercept_per_arm) {
      auto cov = data.covariates(i);
      for (Eigen::Index j = 0; j < p; ++j) X(r, 2 + j) = cov[j];
      if (design == OutcomeDesign::treatment_interaction) {
        for (Eigen::Index j = 0; j < p; ++j) X(r, 2 + p + j) = a * cov[j];
      }
    }
  }
  return X;
}

}  // namespace

OutcomeFit fit_outcome(const Dataset& data, std::span<const std::size_t> rows, double t, double y,
                       Link link, OutcomeDesign design, const GlmOptions& opt,
                       WarnCounters* warn) {
  std::vector<std::size_t> fit_rows;
  std::vector<int> resp;
  for (auto i : rows) {
    if (!(data.time(i) > t) || !data.marker_present(i)) continue;
    fit_rows.push_back(i);
    resp.push_back(data.marker_value(i) > y ? 1 : 0);
  }
  if (fit_rows.empty()) {
    throw EstimationError("outcome model: no uncensored survivors with an observed marker");
  }
  OutcomeFit fit;
  fit.link = link;
  fit.design = design;
  fit.threshold_y = y;
  Eigen::MatrixXd X = outcome_design(data, fit_rows, design);
  try {
    fit.glm = fit_glm_binary(X, resp, link, opt, warn);
  } catch (const EstimationError& e) {
    throw EstimationError(std::string("outcome model: ") + e.what());
  }
  if (fit.glm.degenerate) {
    fit.degenerate = true;
    fit.const_prob = fit.glm.const_prob;
  }
  return fit;
}

double OutcomeFit::prob_above(int a, std::span<const double> l) const {
  if (custom) return custom(a, l);
  if (degenerate) return const_prob;
  const std::size_t p = l.size();
  double eta = 0.0;
  for (std::size_t j = 0; j < glm.kept.size(); ++j) {
    const std::size_t col = static_cast<std::size_t>(glm.kept[j]);
    double v;
    if (col == 0) {
      v = 1.0;
    } else if (col == 1) {
      v = a;
    } else if (col < 2 + p) {
      v = l[col - 2];
    } else {
      v = a * l[col - 2 - p];
    }
    eta += glm.beta[static_cast<Eigen::Index>(j)] * v;
  }
  return link_inverse(link, eta);
}

// ---------------------------------------------------------------------------
// Missingness model

MissingnessFit fit_missingness(const Dataset& data, std::span<const std::size_t> rows, double t,
                               double floor, const GlmOptions& opt, WarnCounters* warn) {
  std::vector<std::size_t> fit_rows;
  std::vector<int> resp;
  for (auto i : rows) {
    if (!(data.time(i) > t)) continue;
    fit_rows.push_back(i);
    resp.push_back(data.marker_observed(i));
  }
  if (fit_rows.empty()) throw EstimationError("missingness model: no survivors at t");

  MissingnessFit fit;
  fit.floor = floor;
  const int sum_r = std::accumulate(resp.begin(), resp.end(), 0);
  if (sum_r == static_cast<int>(resp.size())) {
    fit.all_observed = true;  // reduces to the complete-data analysis
    return fit;
  }
  if (sum_r == 0) {
    throw EstimationError("missingness model: marker missing for every survivor");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(fit_rows.size());
  const Eigen::Index p = static_cast<Eigen::Index>(data.n_covariates());
  Eigen::MatrixXd X(n, 2 + p);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = fit_rows[static_cast<std::size_t>(r)];
    X(r, 0) = 1.0;
    X(r, 1) = data.treatment(i);
    auto cov = data.covariates(i);
    for (Eigen::Index j = 0; j < p; ++j) X(r, 2 + j) = cov[j];
  }
  try {
    fit.glm = fit_glm_binary(X, resp, Link::logit, opt, warn);
  } catch (const EstimationError& e) {
    throw EstimationError(std::string("missingness model: ") + e.what());
  }
  return fit;
}

double MissingnessFit::prob_observed(int a, std::span<const double> l) const {
  if (all_observed) return 1.0;
  double p;
  if (glm.degenerate) {
    p = glm.const_prob;
  } else {
    double eta = 0.0;
    for (std::size_t j = 0; j < glm.kept.size(); ++j) {
      const std::size_t col = static_cast<std::size_t>(glm.kept[j]);
      const double v = col == 0 ? 1.0 : (col == 1 ? a : l[col - 2]);
      eta += glm.beta[static_cast<Eigen::Index>(j)] * v;
    }
    p = link_inverse(Link::logit, eta);
  }
  return std::min(1.0, std::max(floor, p));
}

// ---------------------------------------------------------------------------

std::string NuisanceBundle::to_json() const {
  nlohmann::json j;
  j["positivity_floor"] = positivity_floor;
  {
    nlohmann::json p;
    switch (propensity.kind) {
      case PropensityKind::known_constant: p["kind"] = "known-constant"; break;
      case PropensityKind::intercept_only: p["kind"] = "intercept-only"; break;
      case PropensityKind::cell_means: p["kind"] = "cell-means"; break;
      default: p["kind"] = "logistic";
    }
    if (propensity.kind == PropensityKind::logistic) {
      p["coefficients"] = std::vector<double>(
          propensity.glm.beta.data(), propensity.glm.beta.data() + propensity.glm.beta.size());
    } else {
      p["fixed_prob"] = propensity.fixed_prob;
    }
    j["propensity"] = p;
  }
  auto hazard_json = [](const HazardFit& h) {
    nlohmann::json out;
    out["target"] = h.target == HazardTarget::event ? "event" : "censoring";
    out["stratified"] = h.stratified;
    out["form"] = h.form == SurvivalEvalForm::product_limit ? "product-limit" : "exponential";
    nlohmann::json strata = nlohmann::json::array();
    const int ns = h.stratified ? 2 : 1;
    for (int s = 0; s < ns; ++s) {
      const auto& st = h.strata[s];
      nlohmann::json sj;
      sj["coefficients"] = std::vector<double>(st.beta.data(), st.beta.data() + st.beta.size());
      sj["kept_covariates"] = st.kept;
      sj["center"] = st.center;
      sj["jump_times"] = st.jump_times;
      sj["baseline_increments"] = st.dlambda0;
      strata.push_back(sj);
    }
    out["strata"] = strata;
    return out;
  };
  j["event"] = hazard_json(event);
  j["censoring"] = hazard_json(censoring);
  {
    nlohmann::json o;
    o["link"] = outcome.link == Link::logit ? "logit" : "probit";
    o["threshold_y"] = outcome.threshold_y;
    if (outcome.degenerate) {
      o["constant"] = outcome.const_prob;
    } else {
      o["coefficients"] = std::vector<double>(outcome.glm.beta.data(),
                                              outcome.glm.beta.data() + outcome.glm.beta.size());
    }
    j["outcome"] = o;
  }
  if (missingness) {
    nlohmann::json m;
    if (missingness->all_observed) {
      m["all_observed"] = true;
    } else {
      m["coefficients"] = std::vector<double>(
          missingness->glm.beta.data(), missingness->glm.beta.data() + missingness->glm.beta.size());
    }
    j["missingness"] = m;
  }
  return j.dump(2);
}

}  // namespace landmark
