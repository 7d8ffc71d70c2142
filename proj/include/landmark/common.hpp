#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace landmark {

// Input data failed validation (CLI exit code 2).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model fitting or estimation failed (CLI exit code 3).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flags / configuration (CLI exit code 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Counters for recoverable events surfaced in the run manifest.
struct WarnCounters {
  std::uint64_t positivity_floor_hits = 0;
  std::uint64_t rendering_clips = 0;
  std::uint64_t degenerate_ci = 0;
  std::uint64_t degenerate_fits = 0;
  std::uint64_t dropped_covariates = 0;
  std::uint64_t cv_candidate_failures = 0;
  std::uint64_t stratification_fallbacks = 0;
  std::uint64_t influence_mean_flags = 0;

  void merge(const WarnCounters& o) {
    positivity_floor_hits += o.positivity_floor_hits;
    rendering_clips += o.rendering_clips;
    degenerate_ci += o.degenerate_ci;
    degenerate_fits += o.degenerate_fits;
    dropped_covariates += o.dropped_covariates;
    cv_candidate_failures += o.cv_candidate_failures;
    stratification_fallbacks += o.stratification_fallbacks;
    influence_mean_flags += o.influence_mean_flags;
  }
  std::uint64_t total() const {
    return positivity_floor_hits + rendering_clips + degenerate_ci + degenerate_fits +
           dropped_covariates + cv_candidate_failures + stratification_fallbacks +
           influence_mean_flags;
  }
};

// Neumaier-compensated sum in fixed index order. All estimator reductions go
// through this so results do not depend on how work was partitioned.
double stable_sum(std::span<const double> x);

double mean(std::span<const double> x);
// Sample variance with n-1 divisor.
double sample_variance(std::span<const double> x);
double sample_sd(std::span<const double> x);
// Sample covariance with n-1 divisor.
double sample_covariance(std::span<const double> x, std::span<const double> y);

// Standard normal CDF / upper tail / quantile (Wichura's PPND16).
double norm_cdf(double x);
double norm_sf(double x);
double norm_quantile(double p);

// Chi-square with 2 df: upper tail and quantile (closed form).
inline double chi2_sf_df2(double x) { return x <= 0.0 ? 1.0 : std::exp(-0.5 * x); }
double chi2_quantile_df2(double p);

bool all_finite(std::span<const double> x);

std::string format_double(double v, int precision);

// FNV-1a, used for input hashes and sample identity tags.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace landmark
