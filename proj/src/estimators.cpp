#include "landmark/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace landmark {

namespace {

std::string eif_label(const char* what, int a, double x, double t) {
  return std::string(what) + "[a=" + std::to_string(a) + "," +
         (std::string(what) == "surv" ? "u=" : "y=") + format_double(x, 6) +
         ",t=" + format_double(t, 6) + "]";
}

struct SubjectIntegrals {
  double censoring = 0.0;
  double event = 0.0;
};

// Both counting-process martingale integrals for one subject, each against
// 1/H with H(r) = S(r) K(r-). Jump times walk in composite (time, phase)
// order: deaths first at tied timestamps, so S is right-continuous at event
// jumps and K is evaluated by left limits at its own jumps. At-risk rules
// follow the same composite order.
SubjectIntegrals martingale_integrals(const NuisanceBundle& bundle, int arm,
                                      std::span<const double> l, double cens_horizon,
                                      double event_horizon, double tstar, int status,
                                      WarnCounters* warn) {
  const double horizon = std::max(cens_horizon, event_horizon);
  const double floor = bundle.positivity_floor;
  SubjectIntegrals out;
  if (horizon < 0.0) return out;
  const HazardPath ev = bundle.event.path(arm, l, horizon);
  const HazardPath ce = bundle.censoring.path(arm, l, horizon);

  auto floored = [&](double h) {
    if (h < floor) {
      if (warn) ++warn->positivity_floor_hits;
      return floor;
    }
    return h;
  };

  double s_run = 1.0;  // S after processed event jumps
  double k_run = 1.0;  // K after processed censoring jumps
  std::size_t ie = 0, ic = 0;
  while (ie < ev.times.size() || ic < ce.times.size()) {
    const bool take_event =
        ie < ev.times.size() && (ic >= ce.times.size() || ev.times[ie] <= ce.times[ic]);
    if (take_event) {
      const double s = ev.times[ie];
      // At risk for an event jump at s iff T* >= s.
      if (s <= event_horizon && tstar >= s) {
        const double h = floored(ev.surv_at[ie] * k_run);
        out.event -= ev.increments[ie] / h;
      }
      s_run = ev.surv_at[ie];
      ++ie;
    } else {
      const double s = ce.times[ic];
      // At risk for a censoring jump at s iff T* > s, or the subject is
      // itself censored at s (deaths at s have already left).
      if (s <= cens_horizon && (tstar > s || (tstar == s && status == 0))) {
        const double h = floored(s_run * ce.surv_before[ic]);
        out.censoring -= ce.increments[ic] / h;
      }
      k_run = ce.surv_at[ic];
      ++ic;
    }
  }

  if (status == 0 && tstar <= cens_horizon) {
    const double h =
        floored(bundle.event.survival(tstar, arm, l) * bundle.censoring.survival(tstar, arm, l,
                                                                                 true));
    out.censoring += 1.0 / h;
  }
  if (status == 1 && tstar <= event_horizon) {
    const double h =
        floored(bundle.event.survival(tstar, arm, l) * bundle.censoring.survival(tstar, arm, l,
                                                                                 true));
    out.event += 1.0 / h;
  }
  return out;
}

}  // namespace

double plugin_eta(const NuisanceBundle& bundle, const Dataset& data, int a, double t) {
  std::vector<double> q(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto l = data.covariates(i);
    q[i] = bundle.outcome.prob_above(a, l) * bundle.event.survival(t, a, l);
  }
  return mean(q);
}

double censoring_mart_integral(const NuisanceBundle& bundle, const Dataset& data, std::size_t i,
                               double t, WarnCounters* warn) {
  return martingale_integrals(bundle, data.treatment(i), data.covariates(i), t,
                              -HUGE_VAL, data.time(i), data.status(i), warn)
      .censoring;
}

EtaTerms eta_subject_terms(const NuisanceBundle& bundle, const Dataset& data,
                           const std::vector<LandmarkView>& views, std::size_t i, int a, double t,
                           bool mar, WarnCounters* warn) {
  const double floor = bundle.positivity_floor;
  const auto l = data.covariates(i);
  EtaTerms out;
  out.q = bundle.outcome.prob_above(a, l) * bundle.event.survival(t, a, l);
  if (data.treatment(i) != a) return out;
  const double pa = bundle.propensity.prob_arm(a, l);
  const double w = 1.0 / pa;
  // K at t with the left-continuity convention at jumps.
  double kt = bundle.censoring.survival(t, a, l, true);
  if (kt < floor) {
    if (warn) ++warn->positivity_floor_hits;
    kt = floor;
  }
  double indicator_term = 0.0;
  if (views[i].alive_uncensored == 1 && views[i].above_threshold.has_value()) {
    // under MAR an unobserved marker leaves R = 0: the term vanishes and the
    // marker is never read
    indicator_term = (*views[i].above_threshold ? 1.0 : 0.0) / kt;
    if (mar) {
      indicator_term /= bundle.missingness->prob_observed(a, l);
    }
  }
  const double mci =
      martingale_integrals(bundle, a, l, t, -HUGE_VAL, data.time(i), data.status(i), warn)
          .censoring;
  out.debias = w * (indicator_term - out.q * (1.0 - mci));
  return out;
}

SurvTerms surv_subject_terms(const NuisanceBundle& bundle, const Dataset& data, std::size_t i,
                             int a, double u, WarnCounters* warn) {
  const auto l = data.covariates(i);
  SurvTerms out;
  out.s = bundle.event.survival(u, a, l);
  if (data.treatment(i) == a) {
    const double pa = bundle.propensity.prob_arm(a, l);
    const double emi =
        martingale_integrals(bundle, a, l, -HUGE_VAL, u, data.time(i), data.status(i), warn)
            .event;
    out.corr = out.s * emi / pa;
  }
  return out;
}

EifSample onestep_eta(const NuisanceBundle& bundle, const Dataset& data,
                      const std::vector<LandmarkView>& views, int a, double t, double y, bool mar,
                      WarnCounters* warn) {
  const std::size_t n = data.n();
  if (views.size() != n) throw EstimationError("onestep_eta: views/data size mismatch");
  if (mar && !bundle.missingness) {
    throw EstimationError("onestep_eta: mar requested but no missingness fit in the bundle");
  }
  std::vector<double> qv(n), debias(n);
  for (std::size_t i = 0; i < n; ++i) {
    const EtaTerms terms = eta_subject_terms(bundle, data, views, i, a, t, mar, warn);
    qv[i] = terms.q;
    debias[i] = terms.debias;
  }
  EifSample out;
  out.label = eif_label("eta", a, y, t);
  out.n = n;
  out.sample_tag = data.tag();
  out.point = mean(qv) + mean(debias);
  out.influence.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.influence[i] = qv[i] - out.point + debias[i];
  return out;
}

EifSample onestep_surv(const NuisanceBundle& bundle, const Dataset& data, int a, double u,
                       WarnCounters* warn) {
  const std::size_t n = data.n();
  double max_fu = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_fu = std::max(max_fu, data.time(i));
  if (u > max_fu) {
    throw EstimationError("onestep_surv: u exceeds the maximum follow-up time");
  }
  std::vector<double> sv(n), term(n), corr(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SurvTerms terms = surv_subject_terms(bundle, data, i, a, u, warn);
    sv[i] = terms.s;
    corr[i] = terms.corr;
    term[i] = terms.s - terms.corr;
  }
  EifSample out;
  out.label = eif_label("surv", a, u, u);
  out.n = n;
  out.sample_tag = data.tag();
  out.point = mean(term);
  out.influence.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.influence[i] = sv[i] - out.point - corr[i];
  return out;
}

namespace {

// Product-limit curve over (time, is_target_jump) pairs; returns the value at
// horizon. Used by the unadjusted estimators and their bootstrap.
struct KmFlat {
  // subjects sorted by composite (time, phase)
  static double eval(std::vector<std::pair<double, int>>& subs, int target_phase, double horizon,
                     double* greenwood = nullptr) {
    std::sort(subs.begin(), subs.end());
    double surv = 1.0, gw = 0.0;
    std::size_t i = 0;
    const std::size_t m = subs.size();
    while (i < m) {
      std::size_t j = i;
      int d = 0;
      while (j < m && subs[j].first == subs[i].first && subs[j].second == subs[i].second) {
        d += (subs[j].second == target_phase);
        ++j;
      }
      if (subs[i].first > horizon) break;
      if (d > 0) {
        const double at_risk = static_cast<double>(m - i);
        surv *= 1.0 - static_cast<double>(d) / at_risk;
        if (at_risk > d) gw += d / (at_risk * (at_risk - d));
      }
      i = j;
    }
    if (greenwood) *greenwood = surv * surv * gw;
    return surv;
  }
};

}  // namespace

EstimateReport unadjusted_eta(const Dataset& data, const std::vector<LandmarkView>& views, int a,
                              double t, double y, double level, int bootstrap_reps,
                              std::uint64_t seed, WarnCounters* warn) {
  (void)y;
  const std::size_t n = data.n();
  std::vector<double> hit(n);     // I(A=a, T*>t, Y>y)
  std::vector<std::pair<double, int>> arm_subs;
  for (std::size_t i = 0; i < n; ++i) {
    const bool in_arm = data.treatment(i) == a;
    if (in_arm) arm_subs.emplace_back(data.time(i), data.status(i) == 1 ? 0 : 1);
    hit[i] = in_arm && views[i].alive_uncensored == 1 && views[i].above_threshold.has_value() &&
                     *views[i].above_threshold == 1
                 ? 1.0
                 : 0.0;
  }
  if (arm_subs.empty()) throw EstimationError("unadjusted_eta: arm " + std::to_string(a) + " empty");

  auto estimate = [&](std::span<const std::size_t> idx) {
    std::vector<std::pair<double, int>> subs;
    double num = 0.0;
    std::size_t na = 0;
    for (auto i : idx) {
      if (data.treatment(i) == a) {
        subs.emplace_back(data.time(i), data.status(i) == 1 ? 0 : 1);
        ++na;
      }
      num += hit[i];
    }
    if (na == 0) return std::pair<bool, double>{false, 0.0};
    const double k_at_t = KmFlat::eval(subs, 1, t);
    if (k_at_t <= 0.0) return std::pair<bool, double>{false, 0.0};
    const double pi_a = static_cast<double>(na) / static_cast<double>(idx.size());
    return std::pair<bool, double>{true, num / static_cast<double>(idx.size()) / (k_at_t * pi_a)};
  };

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto [ok, est] = estimate(idx);
  if (!ok) {
    throw EstimationError("unadjusted_eta: no subject under observation at t in arm " +
                          std::to_string(a));
  }

  Rng rng(derive_seed(seed, 0xb001));
  std::vector<double> boot;
  boot.reserve(bootstrap_reps);
  std::vector<std::size_t> draw(n);
  int failed = 0;
  for (int b = 0; b < bootstrap_reps; ++b) {
    for (std::size_t i = 0; i < n; ++i) draw[i] = rng.below(n);
    auto [bok, best] = estimate(draw);
    if (bok) {
      boot.push_back(best);
    } else {
      ++failed;
    }
  }
  if (bootstrap_reps > 0 && failed > bootstrap_reps / 10) {
    throw EstimationError("unadjusted_eta: bootstrap failed in " + std::to_string(failed) +
                          " resamples");
  }
  EstimateReport rep;
  rep.estimate = est;
  rep.level = level;
  rep.std_error = boot.size() >= 2 ? sample_sd(boot) : 0.0;
  if (rep.std_error == 0.0 && warn) ++warn->degenerate_ci;
  const double z = norm_quantile(0.5 + level / 2.0);
  rep.ci_low = est - z * rep.std_error;
  rep.ci_high = est + z * rep.std_error;
  return rep;
}

EstimateReport unadjusted_surv(const Dataset& data, int a, double u, double level) {
  std::vector<std::pair<double, int>> subs;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (data.treatment(i) == a) subs.emplace_back(data.time(i), data.status(i) == 1 ? 0 : 1);
  }
  if (subs.empty()) throw EstimationError("unadjusted_surv: arm " + std::to_string(a) + " empty");
  double gw = 0.0;
  const double s = KmFlat::eval(subs, 0, u, &gw);
  EstimateReport rep;
  rep.estimate = s;
  rep.std_error = std::sqrt(gw);
  rep.level = level;
  const double z = norm_quantile(0.5 + level / 2.0);
  rep.ci_low = s - z * rep.std_error;
  rep.ci_high = s + z * rep.std_error;
  return rep;
}

EifSample contrast(const EifSample& e1, const EifSample& e0) {
  if (e1.n != e0.n) throw EstimationError("contrast: sample sizes differ");
  if (e1.sample_tag != e0.sample_tag) {
    throw EstimationError("contrast: samples come from different datasets or orders");
  }
  EifSample out;
  out.label = e1.label + " - " + e0.label;
  out.n = e1.n;
  out.sample_tag = e1.sample_tag;
  out.point = e1.point - e0.point;
  out.influence.resize(e1.n);
  for (std::size_t i = 0; i < e1.n; ++i) out.influence[i] = e1.influence[i] - e0.influence[i];
  return out;
}

EifSample mean_psi(std::span<const double> y_grid,
                   const std::function<EifSample(double)>& contrast_at) {
  if (y_grid.empty()) throw UsageError("mean_psi: empty threshold grid");
  for (std::size_t j = 1; j < y_grid.size(); ++j) {
    if (!(y_grid[j] > y_grid[j - 1])) {
      throw UsageError("mean_psi: threshold grid must be strictly increasing");
    }
  }
  std::vector<double> w(y_grid.size());
  if (y_grid.size() == 1) {
    w[0] = 1.0;  // unit cell width: the binary-marker convention
  } else {
    const std::size_t m = y_grid.size();
    w[0] = (y_grid[1] - y_grid[0]) / 2.0;
    for (std::size_t j = 1; j + 1 < m; ++j) w[j] = (y_grid[j + 1] - y_grid[j - 1]) / 2.0;
    w[m - 1] = (y_grid[m - 1] - y_grid[m - 2]) / 2.0;
  }
  EifSample out;
  bool first = true;
  std::vector<double> point_terms;
  for (std::size_t j = 0; j < y_grid.size(); ++j) {
    EifSample c = contrast_at(y_grid[j]);
    if (first) {
      out.n = c.n;
      out.sample_tag = c.sample_tag;
      out.influence.assign(c.n, 0.0);
      first = false;
    }
    if (c.n != out.n) throw EstimationError("mean_psi: inconsistent sample sizes across grid");
    point_terms.push_back(w[j] * c.point);
    for (std::size_t i = 0; i < out.n; ++i) out.influence[i] += w[j] * c.influence[i];
  }
  out.point = stable_sum(point_terms);
  out.label = "psi[grid n=" + std::to_string(y_grid.size()) + "]";
  return out;
}

std::string EifSample::to_json() const {
  nlohmann::json j;
  j["label"] = label;
  j["point"] = point;
  j["n"] = n;
  j["influence_values"] = influence;
  return j.dump();
}

}  // namespace landmark
