#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "landmark/common.hpp"

namespace landmark {

enum class MissingnessMode { none, mar };

// One subject as ingested: follow-up time T* = min(T, C), the event indicator,
// an optional marker (present only when measured), treatment arm and baseline
// covariates.
struct SubjectRecord {
  std::string id;
  double followup_time = 0.0;
  int event_indicator = 0;
  std::optional<double> marker;
  int treatment = 0;
  std::vector<double> covariates;
  std::optional<int> marker_observed;  // defaults to 1 when marker present
};

// Columnar, immutable-after-build dataset. Marker values are reachable only
// through marker_value(), which counts accesses; the truncation-safety tests
// assert the counters stay at zero for subjects dead or censored before t.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> covariate_names) : covariate_names_(std::move(covariate_names)) {}

  void add(const SubjectRecord& rec);
  void finalize();  // computes the identity tag; call after the last add()

  std::size_t n() const { return time_.size(); }
  std::size_t n_covariates() const { return covariate_names_.size(); }

  const std::string& id(std::size_t i) const { return ids_[i]; }
  double time(std::size_t i) const { return time_[i]; }
  int status(std::size_t i) const { return status_[i]; }
  int treatment(std::size_t i) const { return treatment_[i]; }
  bool marker_present(std::size_t i) const { return marker_present_[i] != 0; }
  int marker_observed(std::size_t i) const { return r_observed_[i]; }
  std::span<const double> covariates(std::size_t i) const {
    return {covariates_.data() + i * n_covariates(), n_covariates()};
  }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  // Counted marker access; throws if the marker is absent.
  double marker_value(std::size_t i) const;
  std::uint32_t marker_reads(std::size_t i) const { return marker_reads_[i]; }
  void reset_marker_reads() const;

  std::size_t arm_count(int a) const;
  std::uint64_t tag() const { return tag_; }

  Dataset subset(std::span<const std::size_t> rows) const;

 private:
  std::vector<std::string> ids_;
  std::vector<double> time_;
  std::vector<std::uint8_t> status_;
  std::vector<std::uint8_t> treatment_;
  std::vector<double> marker_;
  std::vector<std::uint8_t> marker_present_;
  std::vector<std::uint8_t> r_observed_;
  std::vector<double> covariates_;
  std::vector<std::string> covariate_names_;
  mutable std::vector<std::uint32_t> marker_reads_;
  std::uint64_t tag_ = 0;
};

// Landmark transformation of one subject at time t (threshold y):
//   t_star_t         = min(t, T*)
//   delta_t          = I(T and t <= C): 1 if followup > t, else the event flag
//   alive_uncensored = I(t < T*), strict
//   above_threshold  = I(Y > y), defined only for alive, marker-observed rows
struct LandmarkView {
  double t_star_t = 0.0;
  int delta_t = 0;
  int alive_uncensored = 0;
  std::optional<int> above_threshold;
};

std::vector<LandmarkView> landmark_views(const Dataset& data, double t, double y,
                                         MissingnessMode mode = MissingnessMode::none);

enum class SurvivalEvalForm { product_limit, exponential };

// Named learner lists per nuisance; a single name means a direct fit, several
// names request discrete cross-validated selection.
struct LearnerLibrary {
  std::vector<std::string> propensity{"logistic-main"};
  std::vector<std::string> outcome{"probit-interaction"};
  std::vector<std::string> event{"cox-main"};
  std::vector<std::string> censoring{"km"};
  int cv_folds = 5;
};

struct AnalysisConfig {
  double landmark_t = 0.0;
  double threshold_y = 0.0;
  int folds = 1;  // 1 = no cross-fitting
  std::uint64_t seed = 1;
  double positivity_floor = 0.01;
  std::optional<double> known_randomization_prob;
  double utility_weight = 0.5;
  double level = 0.95;
  MissingnessMode missingness_mode = MissingnessMode::none;
  LearnerLibrary learners;
  int bootstrap_reps = 500;

  void validate() const;
};

// CSV schema: header row with columns id,time,status,marker,treatment,
// covariates... and an optional missingness indicator column.
struct CsvSchema {
  std::string id = "id";
  std::string time = "time";
  std::string status = "status";
  std::string marker = "marker";
  std::string treatment = "treatment";
  std::vector<std::string> covariates;  // empty = all remaining columns
  std::string r_column;                 // empty = absent
};

Dataset ingest_csv(const std::string& path, const CsvSchema& schema = {});
void write_csv(const Dataset& data, const std::string& path, const CsvSchema& schema = {});

}  // namespace landmark
