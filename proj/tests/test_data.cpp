#include <doctest/doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "mcvae/data.hpp"

using namespace mcvae;
using data::Mask;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mcvae_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

data::Cohort small_cohort(std::size_t n, std::uint64_t seed) {
  data::SyntheticSpec spec;
  spec.patients = n;
  spec.dims = {3, 4, 2, 5};
  spec.seed = seed;
  return data::generate_cohort(spec);
}

}  // namespace

TEST_CASE("noise-free identity loadings give deterministic views of u") {
  data::SyntheticSpec spec;
  spec.patients = 20;
  spec.factor_dim = 3;
  spec.dims = {3, 3, 3, 3};
  spec.noise = {0, 0, 0, 0};
  spec.missing_rates = {0, 0, 0, 0};
  const std::vector<double> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
  spec.loadings = {eye, eye, eye, eye};
  const auto c = data::generate_cohort(spec);
  for (const auto& r : c.records)
    for (std::size_t k = 1; k < 4; ++k) CHECK(r.features[k] == r.features[0]);
}

TEST_CASE("zero censoring target gives all events") {
  data::SyntheticSpec spec;
  spec.patients = 200;
  spec.censoring_rate = 0.0;
  const auto c = data::generate_cohort(spec);
  for (const auto& r : c.records) CHECK(r.event == 1);
}

TEST_CASE("censoring calibration over 10^4 patients") {
  data::SyntheticSpec spec;
  spec.patients = 10000;
  spec.dims = {2, 2, 2, 2};
  spec.censoring_rate = 0.4;
  spec.seed = 3;
  const auto c = data::generate_cohort(spec);
  CHECK(std::abs(c.censoring_rate() - 0.4) < 0.02);
}

TEST_CASE("infeasible censoring target is rejected") {
  data::SyntheticSpec spec;
  spec.censoring_rate = 1.0;
  CHECK_THROWS_AS((void)data::generate_cohort(spec), data::DataError);
}

TEST_CASE("oracle risk ceiling on the default cohort") {
  data::SyntheticSpec spec;
  for (std::uint64_t seed : {0, 1, 2}) {
    spec.seed = seed;
    const auto c = data::generate_cohort(spec);
    std::vector<double> risk;
    for (const auto& r : c.records) risk.push_back(*r.oracle_log_hazard);
    CHECK(*survival::c_index(risk, c.outcomes()) >= 0.75);
  }
}

TEST_CASE("generated masks keep clinical and zero placeholders") {
  const auto c = small_cohort(500, 4);
  std::array<std::size_t, 4> missing{};
  for (const auto& r : c.records) {
    CHECK(r.available[0] == 1);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(r.features[k].size() == c.dims[k]);
      if (!r.available[k]) {
        ++missing[k];
        CHECK(std::all_of(r.features[k].begin(), r.features[k].end(), [](double v) { return v == 0.0; }));
      }
    }
  }
  CHECK(missing[3] > missing[2]);  // methylation 15% vs WSI 3%
}

TEST_CASE("cohort file round trip is bit-identical") {
  const auto c = small_cohort(40, 5);
  const auto path = temp_file("roundtrip.csv");
  data::save_cohort(path, c);
  const auto back = data::load_cohort(path, c.dims);
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& a = c.records[i];
    const auto& b = back.records[i];
    CHECK(a.id == b.id);
    CHECK(std::memcmp(&a.time, &b.time, sizeof(double)) == 0);
    CHECK(a.event == b.event);
    CHECK(a.available == b.available);
    CHECK(a.features == b.features);
    CHECK(*a.oracle_log_hazard == *b.oracle_log_hazard);
  }
}

TEST_CASE("loader handles absent blocks and rejects malformed rows") {
  const auto path = temp_file("rows.csv");
  const std::string header =
      "# mcvae-cohort v1\npatient_id,time,event,has_clinical,has_transcriptomics,has_wsi,has_methylation,"
      "clinical_0,transcriptomics_0,transcriptomics_1,wsi_0,methylation_0\n";
  {
    std::ofstream out(path);
    out << header << "a,1.5,1,1,0,1,1,0.1,,,0.2,0.3\n";
  }
  const auto c = data::load_cohort(path);
  CHECK(c.dims == std::array<std::size_t, 4>{1, 2, 1, 1});
  CHECK(c.records[0].available == Mask{1, 0, 1, 1});
  CHECK(c.records[0].features[1] == std::vector<double>{0.0, 0.0});

  auto expect_error = [&](const std::string& row, const std::string& fragment) {
    {
      std::ofstream out(path);
      out << header << "a,1.5,1,1,1,1,1,0.1,0.5,0.5,0.2,0.3\n" << row << "\n";
    }
    try {
      (void)data::load_cohort(path);
      FAIL("expected rejection of " << row);
    } catch (const data::DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(fragment) != std::string::npos);
    }
  };
  expect_error("b,2.0,0,1,1,1,1,0.1,,,0.2,0.3", "row 4");       // flag 1, empty block
  expect_error("b,2.0,0,1,1,1,1,0.1,0.5,0.2,0.3", "row 4");     // short row
  expect_error("b,-2.0,0,1,1,1,1,0.1,0.5,0.5,0.2,0.3", "row 4");  // bad time
  expect_error("b,2.0,0,0,1,1,1,,0.5,0.5,0.2,0.3", "row 4");    // clinical absent
  CHECK_THROWS_AS((void)data::load_cohort(path, std::array<std::size_t, 4>{1, 3, 1, 1}), data::DataError);
}

TEST_CASE("stratified folds sizes, determinism and balance") {
  const auto c = small_cohort(100, 6);
  const auto a = data::stratified_folds(c, 5, 11);
  const auto b = data::stratified_folds(c, 5, 11);
  REQUIRE(a.folds.size() == 5);
  std::set<std::size_t> tested;
  const double event_rate = 1.0 - c.censoring_rate();
  for (std::size_t f = 0; f < 5; ++f) {
    const auto& p = a.folds[f];
    CHECK(p.test.size() == 20);
    CHECK(p.validation.size() == 16);
    CHECK(p.train.size() == 64);
    CHECK(p.test == b.folds[f].test);
    CHECK(p.train == b.folds[f].train);
    CHECK(p.validation == b.folds[f].validation);
    for (auto i : p.test) CHECK(tested.insert(i).second);
    std::set<std::size_t> all(p.train.begin(), p.train.end());
    all.insert(p.validation.begin(), p.validation.end());
    all.insert(p.test.begin(), p.test.end());
    CHECK(all.size() == 100);
    std::size_t events = 0;
    for (auto i : p.test) events += c.records[i].event;
    CHECK(std::abs(static_cast<double>(events) - event_rate * 20.0) <= 1.0 + 1e-9);
  }
  CHECK(tested.size() == 100);
  const auto other = data::stratified_folds(c, 5, 12);
  CHECK(other.folds[0].test != a.folds[0].test);
}

TEST_CASE("stratified folds reject tiny cohorts and merge small strata") {
  CHECK_THROWS_AS((void)data::stratified_folds(small_cohort(9, 1), 5, 0), data::DataError);
  data::SyntheticSpec spec;
  spec.patients = 30;
  spec.dims = {2, 2, 2, 2};
  spec.censoring_rate = 0.05;  // censored stratum below k
  spec.seed = 2;
  const auto c = data::generate_cohort(spec);
  const auto layout = data::stratified_folds(c, 5, 0);
  if (c.censoring_rate() * 30 < 5) CHECK_FALSE(layout.warnings.empty());
  for (const auto& f : layout.folds) CHECK(f.test.size() == 6);
}

TEST_CASE("modality dropout mask contract") {
  Rng rng(7);
  const Mask full{1, 1, 1, 1};
  const Mask partial{1, 0, 1, 1};
  CHECK(data::modality_dropout_mask(partial, 0.0, rng) == partial);
  CHECK(data::modality_dropout_mask(full, 1.0, rng) == Mask{1, 0, 0, 0});
  std::array<std::size_t, 4> dropped{};
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto m = data::modality_dropout_mask(full, 0.3, rng);
    CHECK(m[0] == 1);
    for (std::size_t k = 1; k < 4; ++k) dropped[k] += m[k] == 0;
  }
  for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(static_cast<double>(dropped[k]) / draws - 0.3) < 0.01);
  for (int i = 0; i < 1000; ++i) CHECK(data::modality_dropout_mask(partial, 0.5, rng)[1] == 0);
  CHECK_THROWS_AS((void)data::modality_dropout_mask(full, 1.5, rng), std::invalid_argument);
}

TEST_CASE("apply_mask is idempotent") {
  auto c = small_cohort(10, 8);
  Rng rng(1);
  for (auto& r : c.records) {
    const auto m = data::modality_dropout_mask(Mask{1, 1, 1, 1}, 0.5, rng);
    auto once = r;
    data::apply_mask(once, m);
    auto twice = once;
    data::apply_mask(twice, m);
    CHECK(once.available == twice.available);
    CHECK(once.features == twice.features);
    CHECK(once.available[0] == 1);
  }
}

TEST_CASE("missingness sweep masks") {
  const auto c = small_cohort(2000, 9);
  Rng rng(2);
  const auto same = data::missingness_sweep_mask(c, 0.0, rng);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(same.records[i].available == c.records[i].available);

  const auto heavy = data::missingness_sweep_mask(c, 0.9, rng);
  std::size_t clinical_only = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& r = heavy.records[i];
    CHECK(r.available[0] == 1);
    for (std::size_t k = 1; k < 4; ++k) {
      if (!c.records[i].available[k]) CHECK(r.available[k] == 0);
      if (!r.available[k])
        CHECK(std::all_of(r.features[k].begin(), r.features[k].end(), [](double v) { return v == 0.0; }));
    }
    clinical_only += r.available[1] + r.available[2] + r.available[3] == 0;
  }
  CHECK(clinical_only > c.size() / 2);
  // expected count 1 + 0.1 * sum of natural availability
  double natural = 0.0;
  for (const auto& r : c.records) natural += r.available[1] + r.available[2] + r.available[3];
  const double expected = 1.0 + 0.1 * natural / static_cast<double>(c.size());
  CHECK(std::abs(data::mean_available_modalities(heavy) - expected) < 0.03);
  // originals untouched
  CHECK(c.records[0].features[1].size() == c.dims[1]);
  CHECK_THROWS_AS((void)data::missingness_sweep_mask(c, 1.0, rng), std::invalid_argument);
}

TEST_CASE("restrict_modalities") {
  const auto c = small_cohort(50, 10);
  const auto only_c = data::restrict_modalities(c, "C");
  for (const auto& r : only_c.records) CHECK(r.available == Mask{1, 0, 0, 0});
  const auto ctm = data::restrict_modalities(c, "CTM");
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(ctm.records[i].available[2] == 0);
    CHECK(ctm.records[i].available[1] == c.records[i].available[1]);
  }
  CHECK_THROWS_AS((void)data::restrict_modalities(c, "TW"), std::invalid_argument);
}

TEST_CASE("robust scaler uses train statistics only") {
  data::Cohort train;
  train.dims = {1, 1, 1, 1};
  for (double v : {1.0, 2.0, 3.0, 4.0, 5.0}) {
    data::PatientRecord r;
    r.id = "x";
    r.features = {std::vector<double>{v}, {v}, {v}, {v}};
    train.records.push_back(r);
  }
  data::RobustScaler s;
  s.fit(train);
  auto test = train;
  test.records[0].features[0][0] = 103.0;
  test.records[1].available[1] = 0;
  test.records[1].features[1] = {0.0};
  s.transform(test);
  // median 3, IQR 2 (quartiles 2 and 4)
  CHECK(test.records[0].features[0][0] == doctest::Approx(50.0));
  CHECK(test.records[4].features[2][0] == doctest::Approx(1.0));
  CHECK(test.records[1].features[1][0] == 0.0);  // placeholder stays zero
}
