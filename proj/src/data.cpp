#include "landmark/data.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace landmark {

void Dataset::add(const SubjectRecord& rec) {
  if (!ids_.empty() && rec.covariates.size() != n_covariates()) {
    throw ValidationError("record '" + rec.id + "': covariate dimension " +
                          std::to_string(rec.covariates.size()) + " != dataset dimension " +
                          std::to_string(n_covariates()));
  }
  if (ids_.empty() && covariate_names_.empty()) {
    for (std::size_t j = 0; j < rec.covariates.size(); ++j) {
      covariate_names_.push_back("L" + std::to_string(j + 1));
    }
  }
  if (!(rec.followup_time >= 0.0) || !std::isfinite(rec.followup_time)) {
    throw ValidationError("record '" + rec.id + "': negative or non-finite time");
  }
  if (rec.event_indicator != 0 && rec.event_indicator != 1) {
    throw ValidationError("record '" + rec.id + "': status must be 0 or 1");
  }
  if (rec.treatment != 0 && rec.treatment != 1) {
    throw ValidationError("record '" + rec.id + "': treatment must be 0 or 1");
  }
  for (double v : rec.covariates) {
    if (!std::isfinite(v)) throw ValidationError("record '" + rec.id + "': non-finite covariate");
  }
  int r = rec.marker_observed.value_or(rec.marker.has_value() ? 1 : 0);
  if (rec.marker.has_value() && r != 1) {
    throw ValidationError("record '" + rec.id + "': marker present requires marker_observed=1");
  }
  ids_.push_back(rec.id);
  time_.push_back(rec.followup_time);
  status_.push_back(static_cast<std::uint8_t>(rec.event_indicator));
  treatment_.push_back(static_cast<std::uint8_t>(rec.treatment));
  marker_.push_back(rec.marker.value_or(std::numeric_limits<double>::quiet_NaN()));
  marker_present_.push_back(rec.marker.has_value() ? 1 : 0);
  r_observed_.push_back(static_cast<std::uint8_t>(r));
  covariates_.insert(covariates_.end(), rec.covariates.begin(), rec.covariates.end());
  marker_reads_.push_back(0);
}

void Dataset::finalize() {
  std::uint64_t h = fnv1a(time_.data(), time_.size() * sizeof(double));
  h = fnv1a(status_.data(), status_.size(), h);
  h = fnv1a(treatment_.data(), treatment_.size(), h);
  h = fnv1a(covariates_.data(), covariates_.size() * sizeof(double), h);
  tag_ = h;
}

double Dataset::marker_value(std::size_t i) const {
  if (!marker_present_[i]) {
    throw ValidationError("marker access on record '" + ids_[i] + "' without a measured marker");
  }
  ++marker_reads_[i];
  return marker_[i];
}

void Dataset::reset_marker_reads() const {
  std::fill(marker_reads_.begin(), marker_reads_.end(), 0u);
}

std::size_t Dataset::arm_count(int a) const {
  std::size_t c = 0;
  for (auto t : treatment_) c += (t == a);
  return c;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out(covariate_names_);
  for (std::size_t r : rows) {
    SubjectRecord rec;
    rec.id = ids_[r];
    rec.followup_time = time_[r];
    rec.event_indicator = status_[r];
    if (marker_present_[r]) rec.marker = marker_[r];
    rec.treatment = treatment_[r];
    auto c = covariates(r);
    rec.covariates.assign(c.begin(), c.end());
    rec.marker_observed = r_observed_[r];
    out.add(rec);
  }
  out.finalize();
  return out;
}

std::vector<LandmarkView> landmark_views(const Dataset& data, double t, double y,
                                         MissingnessMode mode) {
  if (!(t > 0.0)) throw ValidationError("landmark time t must be positive");
  std::vector<LandmarkView> views(data.n());
  std::string missing_alive;
  std::string inconsistent;
  for (std::size_t i = 0; i < data.n(); ++i) {
    LandmarkView& v = views[i];
    const double ft = data.time(i);
    v.t_star_t = std::min(t, ft);
    v.alive_uncensored = ft > t ? 1 : 0;  // strict: a tie at t counts as not past t
    v.delta_t = v.alive_uncensored ? 1 : data.status(i);
    if (v.alive_uncensored) {
      if (data.marker_present(i)) {
        v.above_threshold = data.marker_value(i) > y ? 1 : 0;
      } else if (mode == MissingnessMode::none) {
        missing_alive += missing_alive.empty() ? data.id(i) : ", " + data.id(i);
      }
    } else if (data.marker_present(i)) {
      inconsistent += inconsistent.empty() ? data.id(i) : ", " + data.id(i);
    }
  }
  if (!inconsistent.empty()) {
    throw ValidationError("marker measured for subjects not under observation past t=" +
                          std::to_string(t) + ": " + inconsistent);
  }
  if (!missing_alive.empty()) {
    throw ValidationError(
        "subjects alive and uncensored at t with no marker in a complete-data analysis "
        "(use missingness_mode=mar): " +
        missing_alive);
  }
  return views;
}

void AnalysisConfig::validate() const {
  if (!(landmark_t > 0.0)) throw UsageError("landmark_t must be positive");
  if (folds < 1) throw UsageError("folds must be >= 1");
  if (!(positivity_floor > 0.0 && positivity_floor < 0.5)) {
    throw UsageError("positivity_floor must lie in (0, 0.5)");
  }
  if (known_randomization_prob &&
      !(*known_randomization_prob > 0.0 && *known_randomization_prob < 1.0)) {
    throw UsageError("known_randomization_prob must lie in (0,1)");
  }
  if (!(utility_weight > 0.0 && utility_weight < 1.0)) {
    throw UsageError("utility_weight must lie in (0,1)");
  }
  if (!(level > 0.0 && level < 1.0)) throw UsageError("level must lie in (0,1)");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  out.push_back(field);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
  if (b == e) return false;
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace

Dataset ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty file: " + path);
  const auto header = split_csv_line(line);

  auto col_of = [&](const std::string& name) -> int {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (trim(header[j]) == name) return static_cast<int>(j);
    }
    return -1;
  };
  const int c_id = col_of(schema.id);
  const int c_time = col_of(schema.time);
  const int c_status = col_of(schema.status);
  const int c_marker = col_of(schema.marker);
  const int c_treat = col_of(schema.treatment);
  const int c_r = schema.r_column.empty() ? -1 : col_of(schema.r_column);
  if (c_time < 0) throw ValidationError("missing required column '" + schema.time + "'");
  if (c_status < 0) throw ValidationError("missing required column '" + schema.status + "'");
  if (c_treat < 0) throw ValidationError("missing required column '" + schema.treatment + "'");
  if (!schema.r_column.empty() && c_r < 0) {
    throw ValidationError("missing column '" + schema.r_column + "'");
  }

  std::vector<int> cov_cols;
  std::vector<std::string> cov_names;
  if (schema.covariates.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      const int ji = static_cast<int>(j);
      if (ji == c_id || ji == c_time || ji == c_status || ji == c_marker || ji == c_treat ||
          ji == c_r) {
        continue;
      }
      cov_cols.push_back(ji);
      cov_names.push_back(trim(header[j]));
    }
  } else {
    for (const auto& name : schema.covariates) {
      const int j = col_of(name);
      if (j < 0) throw ValidationError("missing covariate column '" + name + "'");
      cov_cols.push_back(j);
      cov_names.push_back(name);
    }
  }

  Dataset data(cov_names);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ValidationError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
    }
    SubjectRecord rec;
    rec.id = c_id >= 0 ? trim(fields[c_id]) : std::to_string(row - 1);
    double v;
    if (!parse_double(fields[c_time], v)) {
      throw ValidationError("row " + std::to_string(row) + " (id " + rec.id +
                            "): malformed time value '" + fields[c_time] + "'");
    }
    if (v < 0.0) {
      throw ValidationError("row " + std::to_string(row) + " (id " + rec.id +
                            "): negative time " + fields[c_time]);
    }
    rec.followup_time = v;
    if (!parse_double(fields[c_status], v) || (v != 0.0 && v != 1.0)) {
      throw ValidationError("row " + std::to_string(row) + " (id " + rec.id +
                            "): status must be 0 or 1, got '" + fields[c_status] + "'");
    }
    rec.event_indicator = static_cast<int>(v);
    if (!parse_double(fields[c_treat], v) || (v != 0.0 && v != 1.0)) {
      throw ValidationError("row " + std::to_string(row) + " (id " + rec.id +
                            "): treatment must be 0 or 1, got '" + fields[c_treat] + "'");
    }
    rec.treatment = static_cast<int>(v);
    if (c_marker >= 0 && !trim(fields[c_marker]).empty()) {
      if (!parse_double(fields[c_marker], v)) {
        throw ValidationError("row " + std::to_string(row) + " (id " + rec.id +
                              "): malformed marker value '" + fields[c_marker] + "'");
      }
      rec.marker = v;
    }
    if (c_r >= 0 && !trim(fields[c_r]).empty()) {
      if (!parse_double(fields[c_r], v) || (v != 0.0 && v != 1.0)) {
        throw ValidationError("row " + std::to_string(row) + " (id " + rec.id +
                              "): r must be 0 or 1");
      }
      rec.marker_observed = static_cast<int>(v);
      if (rec.marker && *rec.marker_observed == 0) {
        throw ValidationError("row " + std::to_string(row) + " (id " + rec.id +
                              "): marker present but r=0");
      }
    }
    rec.covariates.reserve(cov_cols.size());
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      if (!parse_double(fields[cov_cols[k]], v)) {
        throw ValidationError("row " + std::to_string(row) + " (id " + rec.id +
                              "): malformed numeric in column '" + cov_names[k] + "'");
      }
      rec.covariates.push_back(v);
    }
    data.add(rec);
  }
  data.finalize();
  return data;
}

void write_csv(const Dataset& data, const std::string& path, const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open file for writing: " + path);
  out << schema.id << ',' << schema.time << ',' << schema.status << ',' << schema.marker << ','
      << schema.treatment;
  for (const auto& name : data.covariate_names()) out << ',' << name;
  if (!schema.r_column.empty()) out << ',' << schema.r_column;
  out << '\n';
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (std::size_t i = 0; i < data.n(); ++i) {
    out << data.id(i) << ',';
    num(data.time(i));
    out << ',' << data.status(i) << ',';
    if (data.marker_present(i)) num(data.marker_value(i));
    out << ',' << data.treatment(i);
    for (double v : data.covariates(i)) {
      out << ',';
      num(v);
    }
    if (!schema.r_column.empty()) out << ',' << data.marker_observed(i);
    out << '\n';
  }
}

}  // namespace landmark
