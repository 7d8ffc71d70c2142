#include "landmark/learners.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>

namespace landmark {

std::vector<std::size_t> all_rows(const Dataset& data) {
  std::vector<std::size_t> rows(data.n());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

namespace {

constexpr double kLossClamp = 1e-9;

// Quantile-binned covariate cells shared by the histogram learners. Covariates
// with few distinct values keep their own levels; continuous ones get
// quartile bins from the training rows.
struct CellGrid {
  struct Axis {
    bool discrete;
    std::vector<double> levels;  // discrete values or interior cut points
  };
  std::vector<Axis> axes;
  std::size_t n_cells = 1;

  static CellGrid build(const Dataset& data, std::span<const std::size_t> rows) {
    CellGrid g;
    const std::size_t p = data.n_covariates();
    g.axes.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
      std::vector<double> vals;
      vals.reserve(rows.size());
      for (auto i : rows) vals.push_back(data.covariates(i)[j]);
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      Axis& ax = g.axes[j];
      if (vals.size() <= 4) {
        ax.discrete = true;
        ax.levels = vals;
      } else {
        ax.discrete = false;
        std::vector<double> all;
        all.reserve(rows.size());
        for (auto i : rows) all.push_back(data.covariates(i)[j]);
        std::sort(all.begin(), all.end());
        for (int q = 1; q < 4; ++q) {
          ax.levels.push_back(all[all.size() * q / 4]);
        }
      }
      g.n_cells *= ax.discrete ? std::max<std::size_t>(ax.levels.size(), 1) : ax.levels.size() + 1;
    }
    return g;
  }

  std::size_t cell_of(std::span<const double> l) const {
    std::size_t idx = 0;
    for (std::size_t j = 0; j < axes.size(); ++j) {
      const Axis& ax = axes[j];
      std::size_t b = 0;
      if (ax.discrete) {
        // nearest training level
        double best = HUGE_VAL;
        for (std::size_t k = 0; k < ax.levels.size(); ++k) {
          const double d = std::abs(ax.levels[k] - l[j]);
          if (d < best) {
            best = d;
            b = k;
          }
        }
      } else {
        b = static_cast<std::size_t>(
            std::upper_bound(ax.levels.begin(), ax.levels.end(), l[j]) - ax.levels.begin());
      }
      const std::size_t width =
          ax.discrete ? std::max<std::size_t>(ax.levels.size(), 1) : ax.levels.size() + 1;
      idx = idx * width + std::min(b, width - 1);
    }
    return idx;
  }
};

PropensityFit fit_propensity_cells(const FitContext& ctx, std::span<const std::size_t> rows) {
  std::size_t treated = 0;
  for (auto i : rows) treated += ctx.data.treatment(i);
  if (treated == 0 || treated == rows.size()) {
    throw EstimationError("propensity: only one treatment arm present");
  }
  auto grid = std::make_shared<CellGrid>(CellGrid::build(ctx.data, rows));
  auto counts = std::make_shared<std::vector<std::pair<double, double>>>(grid->n_cells,
                                                                         std::make_pair(0.0, 0.0));
  for (auto i : rows) {
    auto& c = (*counts)[grid->cell_of(ctx.data.covariates(i))];
    c.first += 1.0;
    c.second += ctx.data.treatment(i);
  }
  const double overall = static_cast<double>(treated) / static_cast<double>(rows.size());
  PropensityFit f;
  f.kind = PropensityKind::cell_means;
  f.floor = ctx.floor;
  f.fixed_prob = overall;
  f.custom = [grid, counts, overall](std::span<const double> l) {
    const auto& c = (*counts)[grid->cell_of(l)];
    return c.first > 0.0 ? c.second / c.first : overall;
  };
  return f;
}

OutcomeFit fit_outcome_cells(const FitContext& ctx, std::span<const std::size_t> rows, double y) {
  auto grid = std::make_shared<CellGrid>(CellGrid::build(ctx.data, rows));
  // per arm x cell: (count, above-threshold count)
  auto counts = std::make_shared<std::vector<std::array<double, 4>>>(
      grid->n_cells, std::array<double, 4>{0.0, 0.0, 0.0, 0.0});
  double tot = 0.0, pos = 0.0;
  for (auto i : rows) {
    if (!(ctx.data.time(i) > ctx.t) || !ctx.data.marker_present(i)) continue;
    const int above = ctx.data.marker_value(i) > y ? 1 : 0;
    auto& c = (*counts)[grid->cell_of(ctx.data.covariates(i))];
    const int a = ctx.data.treatment(i);
    c[2 * a] += 1.0;
    c[2 * a + 1] += above;
    tot += 1.0;
    pos += above;
  }
  if (tot == 0.0) throw EstimationError("outcome cells: no eligible survivors");
  const double overall = pos / tot;
  OutcomeFit f;
  f.design = OutcomeDesign::cell_means;
  f.threshold_y = y;
  f.custom = [grid, counts, overall](int a, std::span<const double> l) {
    const auto& c = (*counts)[grid->cell_of(l)];
    return c[2 * a] > 0.0 ? c[2 * a + 1] / c[2 * a] : overall;
  };
  return f;
}

// Plain product-limit baseline for one cell; tolerates zero target events.
StratumHazard km_baseline(const Dataset& data, const std::vector<std::size_t>& rows,
                          int target_phase) {
  struct S {
    double time;
    int phase;
  };
  std::vector<S> subs;
  subs.reserve(rows.size());
  for (auto i : rows) subs.push_back({data.time(i), data.status(i) == 1 ? 0 : 1});
  std::sort(subs.begin(), subs.end(), [](const S& a, const S& b) {
    return a.time != b.time ? a.time > b.time : a.phase > b.phase;
  });
  StratumHazard out;
  double s0 = 0.0;
  std::size_t i = 0;
  while (i < subs.size()) {
    std::size_t j = i;
    int d = 0;
    while (j < subs.size() && subs[j].time == subs[i].time && subs[j].phase == subs[i].phase) {
      s0 += 1.0;
      d += (subs[j].phase == target_phase);
      ++j;
    }
    if (d > 0) {
      out.jump_times.push_back(subs[i].time);
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
  out.beta = Eigen::VectorXd::Zero(0);
  return out;
}

HazardFit fit_hazard_cellkm(const FitContext& ctx, std::span<const std::size_t> rows,
                            HazardTarget target) {
  auto grid = std::make_shared<CellGrid>(CellGrid::build(ctx.data, rows));
  const int phase = target == HazardTarget::censoring ? 1 : 0;
  auto cells =
      std::make_shared<std::vector<std::array<StratumHazard, 2>>>(grid->n_cells);
  auto fallback = std::make_shared<std::array<StratumHazard, 2>>();
  std::vector<std::vector<std::size_t>> members[2];
  members[0].resize(grid->n_cells);
  members[1].resize(grid->n_cells);
  std::vector<std::size_t> arm_rows[2];
  for (auto i : rows) {
    const int a = ctx.data.treatment(i);
    members[a][grid->cell_of(ctx.data.covariates(i))].push_back(i);
    arm_rows[a].push_back(i);
  }
  for (int a = 0; a < 2; ++a) {
    (*fallback)[a] = km_baseline(ctx.data, arm_rows[a], phase);
    for (std::size_t c = 0; c < grid->n_cells; ++c) {
      if (!members[a][c].empty()) {
        (*cells)[c][a] = km_baseline(ctx.data, members[a][c], phase);
      } else {
        (*cells)[c][a] = (*fallback)[a];
      }
    }
  }
  HazardFit fit;
  fit.target = target;
  fit.stratified = true;
  fit.form = SurvivalEvalForm::product_limit;
  fit.cell_lookup = [grid, cells](int a, std::span<const double> l) -> const StratumHazard* {
    return &(*cells)[grid->cell_of(l)][a];
  };
  return fit;
}

std::vector<int> all_covariate_idx(const Dataset& data) {
  std::vector<int> idx(data.n_covariates());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

PropensityFit fit_propensity_named(const std::string& name, const FitContext& ctx,
                                   std::span<const std::size_t> rows) {
  if (name == "known") {
    if (!ctx.config || !ctx.config->known_randomization_prob) {
      throw EstimationError("propensity learner 'known' requires known_randomization_prob");
    }
    return PropensityFit::known(*ctx.config->known_randomization_prob, ctx.floor);
  }
  if (name == "intercept-only") return PropensityFit::intercept_only(ctx.data, rows, ctx.floor);
  if (name == "logistic-main") {
    return PropensityFit::logistic_main(ctx.data, rows, ctx.floor, {}, ctx.warn);
  }
  if (name == "cells") return fit_propensity_cells(ctx, rows);
  throw UsageError("unknown propensity learner '" + name + "'");
}

OutcomeFit fit_outcome_named(const std::string& name, const FitContext& ctx,
                             std::span<const std::size_t> rows, double y) {
  if (name == "cells") return fit_outcome_cells(ctx, rows, y);
  Link link = Link::probit;
  OutcomeDesign design = OutcomeDesign::treatment_interaction;
  if (name == "intercept-per-arm") {
    design = OutcomeDesign::intercept_per_arm;
    link = Link::logit;
  } else if (name == "logit-main") {
    design = OutcomeDesign::main_effects;
    link = Link::logit;
  } else if (name == "logit-interaction") {
    design = OutcomeDesign::treatment_interaction;
    link = Link::logit;
  } else if (name == "probit-main") {
    design = OutcomeDesign::main_effects;
  } else if (name == "probit-interaction") {
    design = OutcomeDesign::treatment_interaction;
  } else {
    throw UsageError("unknown outcome learner '" + name + "'");
  }
  return fit_outcome(ctx.data, rows, ctx.t, y, link, design, {}, ctx.warn);
}

HazardFit fit_hazard_named(const std::string& name, const FitContext& ctx,
                           std::span<const std::size_t> rows, HazardTarget target) {
  CoxOptions opt;
  if (name == "km") {
    return fit_hazard(ctx.data, rows, target, {}, true, opt, ctx.warn);
  }
  if (name == "km-pooled") {
    return fit_hazard(ctx.data, rows, target, {}, false, opt, ctx.warn);
  }
  if (name == "cox-main" || name == "cox-main-exp") {
    if (name == "cox-main-exp") opt.form = SurvivalEvalForm::exponential;
    const auto idx = all_covariate_idx(ctx.data);
    return fit_hazard(ctx.data, rows, target, idx, true, opt, ctx.warn);
  }
  if (name == "cellkm") return fit_hazard_cellkm(ctx, rows, target);
  throw UsageError("unknown hazard learner '" + name + "'");
}

double propensity_nll(const PropensityFit& fit, const FitContext& ctx,
                      std::span<const std::size_t> valid) {
  double total = 0.0;
  for (auto i : valid) {
    const double p =
        std::clamp(fit.prob_arm(ctx.data.treatment(i), ctx.data.covariates(i)), kLossClamp,
                   1.0 - kLossClamp);
    total -= std::log(p);
  }
  return total / static_cast<double>(valid.size());
}

double outcome_nll(const OutcomeFit& fit, const FitContext& ctx,
                   std::span<const std::size_t> valid, double y) {
  double total = 0.0;
  std::size_t m = 0;
  for (auto i : valid) {
    if (!(ctx.data.time(i) > ctx.t) || !ctx.data.marker_present(i)) continue;
    const double g =
        std::clamp(fit.prob_above(ctx.data.treatment(i), ctx.data.covariates(i)), kLossClamp,
                   1.0 - kLossClamp);
    total -= ctx.data.marker_value(i) > y ? std::log(g) : std::log1p(-g);
    ++m;
  }
  if (m == 0) throw EstimationError("outcome loss: no eligible validation rows");
  return total / static_cast<double>(m);
}

double hazard_brier_at_t(const HazardFit& fit, const FitContext& ctx,
                         std::span<const std::size_t> train, std::span<const std::size_t> valid,
                         HazardTarget target) {
  // IPCW weights from the complementary process, fitted covariate-free on the
  // training rows so every candidate is scored with the same weights.
  const HazardTarget other =
      target == HazardTarget::event ? HazardTarget::censoring : HazardTarget::event;
  const HazardFit weight_fit = fit_hazard(ctx.data, train, other, {}, true, {}, nullptr);
  const double t = ctx.t;
  const int own_status = target == HazardTarget::event ? 1 : 0;
  double total = 0.0;
  for (auto i : valid) {
    const int a = ctx.data.treatment(i);
    const auto l = ctx.data.covariates(i);
    const double s_hat = fit.survival(t, a, l);
    const double ft = ctx.data.time(i);
    double w = 0.0, resid = 0.0;
    if (ft > t) {
      const double g = std::max(weight_fit.survival(t, a, l), ctx.floor);
      w = 1.0 / g;
      resid = 1.0 - s_hat;
    } else if (ctx.data.status(i) == own_status) {
      const double g = std::max(weight_fit.survival(ft, a, l, true), ctx.floor);
      w = 1.0 / g;
      resid = 0.0 - s_hat;
    }
    total += w * resid * resid;
  }
  return total / static_cast<double>(valid.size());
}

OutcomeFit fit_outcome_library(const FitContext& ctx, std::span<const std::size_t> rows, double y,
                               const LearnerLibrary& lib, std::uint64_t seed) {
  const auto& names = lib.outcome;
  std::function<OutcomeFit(int, std::span<const std::size_t>)> fitc =
      [&](int c, std::span<const std::size_t> r) { return fit_outcome_named(names[c], ctx, r, y); };
  std::function<double(const OutcomeFit&, std::span<const std::size_t>,
                       std::span<const std::size_t>)>
      loss = [&](const OutcomeFit& m, std::span<const std::size_t>,
                 std::span<const std::size_t> v) { return outcome_nll(m, ctx, v, y); };
  return cv_select<OutcomeFit>(static_cast<int>(names.size()), fitc, loss, rows, lib.cv_folds,
                               derive_seed(seed, 2), ctx.warn)
      .model;
}

NuisanceBundle fit_bundle(const FitContext& ctx, std::span<const std::size_t> rows, double y,
                          const LearnerLibrary& lib, std::uint64_t seed, bool with_outcome,
                          bool with_missingness) {
  NuisanceBundle bundle;
  bundle.positivity_floor = ctx.floor;

  {
    const auto& names = lib.propensity;
    std::function<PropensityFit(int, std::span<const std::size_t>)> fitc =
        [&](int c, std::span<const std::size_t> r) {
          return fit_propensity_named(names[c], ctx, r);
        };
    std::function<double(const PropensityFit&, std::span<const std::size_t>,
                         std::span<const std::size_t>)>
        loss = [&](const PropensityFit& m, std::span<const std::size_t>,
                   std::span<const std::size_t> v) { return propensity_nll(m, ctx, v); };
    bundle.propensity = cv_select<PropensityFit>(static_cast<int>(names.size()), fitc, loss, rows,
                                                 lib.cv_folds, derive_seed(seed, 1), ctx.warn)
                            .model;
  }
  if (with_outcome) {
    bundle.outcome = fit_outcome_library(ctx, rows, y, lib, seed);
  }
  for (HazardTarget target : {HazardTarget::event, HazardTarget::censoring}) {
    const auto& names = target == HazardTarget::event ? lib.event : lib.censoring;
    std::function<HazardFit(int, std::span<const std::size_t>)> fitc =
        [&](int c, std::span<const std::size_t> r) {
          return fit_hazard_named(names[c], ctx, r, target);
        };
    std::function<double(const HazardFit&, std::span<const std::size_t>,
                         std::span<const std::size_t>)>
        loss = [&](const HazardFit& m, std::span<const std::size_t> tr,
                   std::span<const std::size_t> v) {
          return hazard_brier_at_t(m, ctx, tr, v, target);
        };
    auto choice = cv_select<HazardFit>(static_cast<int>(names.size()), fitc, loss, rows,
                                       lib.cv_folds,
                                       derive_seed(seed, target == HazardTarget::event ? 3 : 4),
                                       ctx.warn);
    (target == HazardTarget::event ? bundle.event : bundle.censoring) = choice.model;
  }
  if (with_missingness) {
    bundle.missingness = fit_missingness(ctx.data, rows, ctx.t, ctx.floor, {}, ctx.warn);
  }
  return bundle;
}

}  // namespace landmark
