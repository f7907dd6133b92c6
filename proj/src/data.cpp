#include "mcvae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mcvae::data {

// -- Cohort ---------------------------------------------------------------------------

Cohort Cohort::select(const std::vector<std::size_t>& indices) const {
  Cohort out;
  out.dims = dims;
  out.records.reserve(indices.size());
  for (auto i : indices) out.records.push_back(records.at(i));
  return out;
}

std::vector<survival::Outcome> Cohort::outcomes() const {
  std::vector<survival::Outcome> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.outcome());
  return out;
}

double Cohort::censoring_rate() const {
  if (records.empty()) return 0.0;
  const auto censored = std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.event; });
  return static_cast<double>(censored) / static_cast<double>(records.size());
}

// -- generator ------------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (patients == 0) throw DataError("synthetic spec: cohort size must be positive");
  if (factor_dim == 0) throw DataError("synthetic spec: factor dimension must be positive");
  if (!(censoring_rate >= 0.0 && censoring_rate < 1.0)) {
    throw DataError("synthetic spec: censoring target " + std::to_string(censoring_rate) + " is infeasible (need [0, 1))");
  }
  if (missing_rates[0] != 0.0) throw DataError("synthetic spec: clinical missingness must be 0");
  for (std::size_t k = 0; k < kModalities; ++k) {
    if (dims[k] == 0) throw DataError(std::string("synthetic spec: ") + kModalityNames[k] + " dimension must be positive");
    if (!(missing_rates[k] >= 0.0 && missing_rates[k] < 1.0)) throw DataError("synthetic spec: missingness rates must lie in [0, 1)");
    if (noise[k] < 0.0) throw DataError("synthetic spec: noise scales must be non-negative");
    if (!loadings[k].empty() && loadings[k].size() != dims[k] * factor_dim) {
      throw DataError(std::string("synthetic spec: ") + kModalityNames[k] + " loading matrix must be d_k x d_u");
    }
  }
  if (!risk_weights.empty() && risk_weights.size() != factor_dim) {
    throw DataError("synthetic spec: risk weight vector must have d_u entries");
  }
  if (!(baseline_hazard > 0.0)) throw DataError("synthetic spec: baseline hazard must be positive");
}

namespace {

// Censoring rate c such that mean_i c / (c + rate_i) equals the target.
double solve_censoring_rate(const std::vector<double>& event_rates, double target) {
  auto expected = [&](double c) {
    double s = 0.0;
    for (double r : event_rates) s += c / (c + r);
    return s / static_cast<double>(event_rates.size());
  };
  double lo = -60.0;
  double hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(std::exp(mid)) < target ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

}  // namespace

Cohort generate_cohort(const SyntheticSpec& spec) {
  Rng rng(spec.seed, Rng::hash("cohort"));
  return generate_cohort(spec, rng);
}

Cohort generate_cohort(const SyntheticSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t du = spec.factor_dim;

  Rng loading_rng = rng.fork("loadings");
  std::array<std::vector<double>, kModalities> loadings = spec.loadings;
  for (std::size_t k = 0; k < kModalities; ++k) {
    if (!loadings[k].empty()) continue;
    loadings[k].resize(spec.dims[k] * du);
    for (auto& a : loadings[k]) a = loading_rng.normal() / std::sqrt(static_cast<double>(du));
  }
  std::vector<double> w = spec.risk_weights;
  if (w.empty()) {
    Rng risk_rng = rng.fork("risk");
    w.resize(du);
    double norm = 0.0;
    for (auto& v : w) {
      v = risk_rng.normal();
      norm += v * v;
    }
    for (auto& v : w) v *= spec.risk_scale / std::sqrt(norm);
  }

  Cohort cohort;
  cohort.dims = spec.dims;
  cohort.records.resize(spec.patients);
  std::vector<double> rates(spec.patients);
  Rng patient_rng = rng.fork("patients");
  for (std::size_t i = 0; i < spec.patients; ++i) {
    auto& rec = cohort.records[i];
    rec.id = "P" + std::to_string(i);
    std::vector<double> u(du);
    for (auto& v : u) v = patient_rng.normal();
    for (std::size_t k = 0; k < kModalities; ++k) {
      auto& x = rec.features[k];
      x.assign(spec.dims[k], 0.0);
      for (std::size_t r = 0; r < spec.dims[k]; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < du; ++c) s += loadings[k][r * du + c] * u[c];
        x[r] = s + spec.noise[k] * patient_rng.normal();
      }
    }
    const double log_hazard = std::inner_product(w.begin(), w.end(), u.begin(), 0.0);
    rec.oracle_log_hazard = log_hazard;
    rates[i] = spec.baseline_hazard * std::exp(log_hazard);
  }

  const double censor_rate = spec.censoring_rate > 0.0 ? solve_censoring_rate(rates, spec.censoring_rate) : 0.0;
  Rng time_rng = rng.fork("times");
  Rng missing_rng = rng.fork("missingness");
  for (std::size_t i = 0; i < spec.patients; ++i) {
    auto& rec = cohort.records[i];
    const double event_time = time_rng.exponential(rates[i]);
    const double censor_time = censor_rate > 0.0 ? time_rng.exponential(censor_rate) : INFINITY;
    rec.event = event_time <= censor_time ? 1 : 0;
    rec.time = std::min(event_time, censor_time);
    Mask mask{1, 1, 1, 1};
    for (std::size_t k = 1; k < kModalities; ++k) mask[k] = missing_rng.bernoulli(spec.missing_rates[k]) ? 0 : 1;
    apply_mask(rec, mask);
  }
  return cohort;
}

// -- cohort files -----------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(std::string_view s, std::size_t line_no, std::string_view column) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("row " + std::to_string(line_no) + ": column '" + std::string(column) + "' is not a number: '" +
                    std::string(s) + "'");
  }
  return v;
}

std::uint8_t parse_flag(std::string_view s, std::size_t line_no, std::string_view column) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw DataError("row " + std::to_string(line_no) + ": column '" + std::string(column) + "' must be 0 or 1, got '" +
                  std::string(s) + "'");
}

}  // namespace

void save_cohort(const std::filesystem::path& path, const Cohort& cohort) {
  const bool with_oracle = !cohort.records.empty() &&
                           std::all_of(cohort.records.begin(), cohort.records.end(),
                                       [](const auto& r) { return r.oracle_log_hazard.has_value(); });
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "# " << kCohortSchema << '\n';
  out << "patient_id,time,event";
  for (auto name : kModalityNames) out << ",has_" << name;
  for (std::size_t k = 0; k < kModalities; ++k) {
    for (std::size_t j = 0; j < cohort.dims[k]; ++j) out << ',' << kModalityNames[k] << '_' << j;
  }
  if (with_oracle) out << ",oracle_log_hazard";
  out << '\n';
  for (const auto& r : cohort.records) {
    out << r.id << ',' << format_double(r.time) << ',' << int(r.event);
    for (auto a : r.available) out << ',' << int(a);
    for (std::size_t k = 0; k < kModalities; ++k) {
      for (std::size_t j = 0; j < cohort.dims[k]; ++j) {
        out << ',';
        if (r.available[k]) out << format_double(r.features[k][j]);
      }
    }
    if (with_oracle) out << ',' << format_double(*r.oracle_log_hazard);
    out << '\n';
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Cohort load_cohort(const std::filesystem::path& path,
                   const std::optional<std::array<std::size_t, kModalities>>& expected_dims) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cohort file '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string text = line.substr(1);
      text.erase(0, text.find_first_not_of(' '));
      if (text.find("mcvae-cohort") != std::string::npos && text.find(kCohortSchema) == std::string::npos) {
        throw DataError("unsupported cohort schema '" + text + "' (expected '" + kCohortSchema + "')");
      }
      continue;
    }
    for (auto col : split(line, ',')) header.emplace_back(col);
    break;
  }
  if (header.size() < 7 || header[0] != "patient_id" || header[1] != "time" || header[2] != "event") {
    throw DataError("cohort file '" + path.string() + "' lacks the patient_id,time,event header");
  }
  for (std::size_t k = 0; k < kModalities; ++k) {
    if (header[3 + k] != std::string("has_") + kModalityNames[k]) {
      throw DataError("header column " + std::to_string(4 + k) + " must be 'has_" + kModalityNames[k] + "'");
    }
  }

  Cohort cohort;
  std::array<std::size_t, kModalities> offsets{};
  std::size_t col = 7;
  for (std::size_t k = 0; k < kModalities; ++k) {
    offsets[k] = col;
    const std::string prefix = std::string(kModalityNames[k]) + "_";
    while (col < header.size() && header[col] == prefix + std::to_string(cohort.dims[k])) {
      ++cohort.dims[k];
      ++col;
    }
    if (cohort.dims[k] == 0) throw DataError(std::string("cohort header has no ") + kModalityNames[k] + " columns");
  }
  bool with_oracle = false;
  if (col < header.size() && header[col] == "oracle_log_hazard") {
    with_oracle = true;
    ++col;
  }
  if (col != header.size()) throw DataError("unexpected header column '" + header[col] + "'");
  if (expected_dims && *expected_dims != cohort.dims) {
    throw DataError("cohort feature dimensions do not match the expected schema");
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " columns, found " + std::to_string(cells.size()));
    }
    PatientRecord rec;
    rec.id = std::string(cells[0]);
    if (rec.id.empty()) throw DataError("row " + std::to_string(line_no) + ": empty patient id");
    rec.time = parse_double(cells[1], line_no, "time");
    if (!(rec.time > 0.0)) throw DataError("row " + std::to_string(line_no) + ": time must be positive");
    rec.event = parse_flag(cells[2], line_no, "event");
    for (std::size_t k = 0; k < kModalities; ++k) {
      rec.available[k] = parse_flag(cells[3 + k], line_no, header[3 + k]);
      rec.features[k].assign(cohort.dims[k], 0.0);
      if (!rec.available[k]) continue;
      for (std::size_t j = 0; j < cohort.dims[k]; ++j) {
        const auto cell = cells[offsets[k] + j];
        if (cell.empty()) {
          throw DataError("row " + std::to_string(line_no) + ": " + kModalityNames[k] +
                          " is flagged present but its feature block is empty");
        }
        rec.features[k][j] = parse_double(cell, line_no, header[offsets[k] + j]);
      }
    }
    if (!rec.available[0]) throw DataError("row " + std::to_string(line_no) + ": clinical features must be present");
    if (with_oracle && !cells.back().empty()) rec.oracle_log_hazard = parse_double(cells.back(), line_no, "oracle_log_hazard");
    cohort.records.push_back(std::move(rec));
  }
  return cohort;
}

// -- folds ---------------------------------------------------------------------------------

FoldLayout stratified_folds(const Cohort& cohort, std::size_t k, std::uint64_t seed) {
  const std::size_t n = cohort.size();
  if (k < 2) throw DataError("stratified_folds: need at least 2 folds");
  if (n < 2 * k) throw DataError("stratified_folds: " + std::to_string(n) + " patients is too few for " + std::to_string(k) + " folds");

  std::vector<double> times;
  for (const auto& r : cohort.records) times.push_back(r.time);
  std::sort(times.begin(), times.end());
  const double median = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);

  FoldLayout layout;
  layout.strata.resize(n);
  std::array<std::size_t, 3> counts{};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = cohort.records[i];
    layout.strata[i] = !r.event ? 2 : (r.time <= median ? 0 : 1);
    ++counts[static_cast<std::size_t>(layout.strata[i])];
  }
  // Merge undersized strata into a neighbour.
  for (bool changed = true; changed;) {
    changed = false;
    for (int s = 0; s < 3; ++s) {
      const auto c = counts[static_cast<std::size_t>(s)];
      if (c == 0 || c >= k) continue;
      int target = s == 1 ? (counts[0] >= counts[2] ? 0 : 2) : 1;
      if (counts[static_cast<std::size_t>(target)] == 0) {
        target = s == 1 ? (target == 0 ? 2 : 0) : (s == 0 ? 2 : 0);
      }
      if (counts[static_cast<std::size_t>(target)] == 0) break;
      layout.warnings.push_back("stratum " + std::to_string(s) + " has " + std::to_string(c) +
                                " patients (< " + std::to_string(k) + "); merged into stratum " + std::to_string(target));
      for (auto& st : layout.strata) {
        if (st == s) st = target;
      }
      counts[static_cast<std::size_t>(target)] += c;
      counts[static_cast<std::size_t>(s)] = 0;
      changed = true;
    }
  }

  Rng rng(seed, Rng::hash("folds"));
  std::vector<std::size_t> order;
  for (int s = 0; s < 3; ++s) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (layout.strata[i] == s) members.push_back(i);
    }
    shuffle(members, rng);
    order.insert(order.end(), members.begin(), members.end());
  }

  const auto n_val = static_cast<std::size_t>(std::llround(0.16 * static_cast<double>(n)));
  for (std::size_t f = 0; f < k; ++f) {
    FoldPlan plan;
    plan.fold = f;
    plan.seed = seed;
    std::vector<std::size_t> rest;
    for (std::size_t p = 0; p < n; ++p) {
      (p % k == f ? plan.test : rest).push_back(order[p]);
    }
    // Systematic sampling over the stratum-ordered remainder keeps strata within one patient.
    const std::size_t len = rest.size();
    for (std::size_t p = 0; p < len; ++p) {
      const bool pick = (p + 1) * n_val / len > p * n_val / len;
      (pick ? plan.validation : plan.train).push_back(rest[p]);
    }
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.validation.begin(), plan.validation.end());
    std::sort(plan.test.begin(), plan.test.end());
    layout.folds.push_back(std::move(plan));
  }
  return layout;
}

// -- masks --------------------------------------------------------------------------------

Mask modality_dropout_mask(const Mask& available, double p_drop, Rng& rng) {
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw std::invalid_argument("modality dropout rate must lie in [0, 1]");
  Mask out = available;
  out[0] = 1;
  for (std::size_t k = 1; k < kModalities; ++k) {
    const bool keep = rng.uniform() >= p_drop;
    out[k] = static_cast<std::uint8_t>(available[k] && keep);
  }
  return out;
}

void apply_mask(PatientRecord& record, const Mask& mask) {
  for (std::size_t k = 0; k < kModalities; ++k) {
    const bool keep = k == 0 || (record.available[k] && mask[k]);
    record.available[k] = keep ? 1 : 0;
    if (!keep) std::fill(record.features[k].begin(), record.features[k].end(), 0.0);
  }
}

Cohort missingness_sweep_mask(const Cohort& cohort, double level, Rng& rng) {
  if (!(level >= 0.0 && level < 1.0)) throw std::invalid_argument("missingness level must lie in [0, 1)");
  Cohort out = cohort;
  for (auto& rec : out.records) apply_mask(rec, modality_dropout_mask(rec.available, level, rng));
  return out;
}

Cohort restrict_modalities(const Cohort& cohort, const std::string& codes) {
  if (codes.find('C') == std::string::npos) throw std::invalid_argument("modality combinations must include clinical (C)");
  Mask mask{};
  for (std::size_t k = 0; k < kModalities; ++k) mask[k] = codes.find(kModalityCodes[k]) != std::string::npos;
  Cohort out = cohort;
  for (auto& rec : out.records) apply_mask(rec, mask);
  return out;
}

double mean_available_modalities(const Cohort& cohort) {
  if (cohort.records.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : cohort.records) total += std::accumulate(r.available.begin(), r.available.end(), 0.0);
  return total / static_cast<double>(cohort.size());
}

// -- scaling ---------------------------------------------------------------------------------

namespace {
double quantile(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}
}  // namespace

void RobustScaler::fit(const Cohort& train) {
  for (std::size_t k = 0; k < kModalities; ++k) {
    const std::size_t d = train.dims[k];
    median_[k].assign(d, 0.0);
    scale_[k].assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<double> column;
      for (const auto& r : train.records) {
        if (r.available[k]) column.push_back(r.features[k][j]);
      }
      if (column.empty()) continue;
      median_[k][j] = quantile(column, 0.5);
      const double iqr = quantile(column, 0.75) - quantile(column, 0.25);
      scale_[k][j] = iqr > 1e-12 ? iqr : 1.0;
    }
  }
}

void RobustScaler::transform(Cohort& cohort) const {
  for (auto& r : cohort.records) {
    for (std::size_t k = 0; k < kModalities; ++k) {
      if (!r.available[k]) continue;
      if (median_[k].size() != r.features[k].size()) throw DataError("robust scaler was fitted on different dimensions");
      for (std::size_t j = 0; j < r.features[k].size(); ++j) {
        r.features[k][j] = (r.features[k][j] - median_[k][j]) / scale_[k][j];
      }
    }
  }
}

}  // namespace mcvae::data
