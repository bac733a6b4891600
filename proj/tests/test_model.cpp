#include <doctest.h>

#include <cmath>
#include <vector>

#include "darkmix/error.hpp"
#include "darkmix/model.hpp"
#include "darkmix/rng.hpp"

using namespace darkmix;

namespace {

ExperimentDesign paper_design(int replicates = 10) {
  std::vector<Condition> conditions{{-10.0, 0.01}};
  for (double t : {-10.0, 0.0, 10.0}) {
    for (double d : {3.0, 300.0, 600.0}) conditions.push_back({t, d});
  }
  return build_design(conditions, replicates);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("build_design: the 10-condition layout") {
  const ExperimentDesign design = paper_design();
  CHECK(design.n_conditions() == 10);
  CHECK(design.replicates() == 10);
  CHECK(design.width() == 100);
  CHECK(design.column_of(3, 2) == 32);
}

TEST_CASE("build_design: minimal single condition") {
  const ExperimentDesign design = build_design({{0.0, 3.0}}, 1);
  CHECK(design.n_conditions() == 1);
  CHECK(design.covariate_rows()(0, 0) == 1.0);
  CHECK(design.covariate_rows()(0, 1) == 0.0);
  CHECK(design.covariate_rows()(0, 2) == 3.0);
}

TEST_CASE("build_design: duplicate condition is rejected with its index") {
  try {
    build_design({{0.0, 3.0}, {10.0, 300.0}, {0.0, 3.0}}, 2);
    FAIL("expected rejection");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::duplicate_condition);
    CHECK(std::string(err.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("build_design: non-positive duration is rejected") {
  CHECK_THROWS_AS(build_design({{0.0, 0.0}}, 1), Error);
  CHECK_THROWS_AS(build_design({{0.0, -5.0}}, 1), Error);
}

TEST_CASE("sigma_vector: constant link") {
  const ExperimentDesign design = paper_design();
  Vector alpha(3);
  alpha << std::log(16.0), 0.0, 0.0;
  const Vector sigma = sigma_vector(alpha, design);
  for (int e = 0; e < 10; ++e) CHECK(sigma[e] == doctest::Approx(16.0));

  alpha << 0.0, 0.0, 0.0;
  const Vector unit = sigma_vector(alpha, design);
  for (int e = 0; e < 10; ++e) CHECK(unit[e] == doctest::Approx(1.0));
}

TEST_CASE("sigma_vector: direct scalar evaluation") {
  const ExperimentDesign design = build_design({{10.0, 600.0}}, 1);
  Vector alpha(3);
  alpha << 2.0, 0.05, 0.001;
  const Vector sigma = sigma_vector(alpha, design);
  CHECK(sigma[0] == doctest::Approx(std::exp(3.1)).epsilon(1e-12));
  CHECK(sigma[0] == doctest::Approx(22.19795128).epsilon(1e-8));
}

TEST_CASE("tau_vector: limiting and scalar cases") {
  const ExperimentDesign design = paper_design();
  Vector gamma(3);
  gamma << 0.0, 0.0, 0.0;
  const Vector ones = tau_vector(gamma, design);
  for (int e = 0; e < 10; ++e) CHECK(ones[e] == doctest::Approx(1.0));

  gamma << -40.0, 0.0, 0.0;
  const Vector tiny = tau_vector(gamma, design);
  for (int e = 0; e < 10; ++e) {
    CHECK(tiny[e] == doctest::Approx(4.248354255e-18).epsilon(1e-8));
    CHECK(tiny[e] > 0.0);
  }

  const ExperimentDesign single = build_design({{-10.0, 300.0}}, 1);
  gamma << 1.0, 0.1, 0.002;
  CHECK(tau_vector(gamma, single)[0] ==
        doctest::Approx(std::exp(0.6)).epsilon(1e-12));
  CHECK(tau_vector(gamma, single)[0] == doctest::Approx(1.8221188).epsilon(1e-7));
}

TEST_CASE("mean_vector: NPM passthrough") {
  const ExperimentDesign design = build_design({{0.0, 3.0}, {0.0, 300.0}}, 2);
  Vector values(2);
  values << 265.0, 290.0;
  ComponentParameters comp;
  comp.mean = NpmMeans{values};
  const Vector mu = mean_vector(comp, design);
  CHECK(mu[0] == 265.0);
  CHECK(mu[1] == 290.0);
}

TEST_CASE("mean_vector: LEI direct evaluation") {
  const ExperimentDesign design = paper_design();
  int n_groups = 0;
  LeiMeans lei;
  lei.condition_group = lei_duration_groups(design, n_groups);
  CHECK(n_groups == 3);  // durations {3, 300, 600}; 0.01 s joins group 1
  lei.beta1 = 263.0;
  lei.log_rate = std::log(0.01);
  lei.deltas = Vector::Zero(3);
  lei.beta_temp = 0.0;
  ComponentParameters comp;
  comp.mean = lei;
  const Vector mu = mean_vector(comp, design);
  // any condition with duration 300 s: 263 + 0.01*300 + exp(0) = 267
  for (int e = 0; e < design.n_conditions(); ++e) {
    if (design.conditions()[e].duration_s == 300.0) {
      CHECK(mu[e] == doctest::Approx(267.0).epsilon(1e-12));
    }
  }
  CHECK(comp.mean_param_count() == 6);
}

TEST_CASE("mean_vector: unmapped LEI condition is rejected") {
  const ExperimentDesign design = paper_design();
  LeiMeans lei;
  lei.condition_group.assign(10, 0);
  lei.condition_group[4] = 7;  // out of range
  lei.deltas = Vector::Zero(3);
  ComponentParameters comp;
  comp.mean = lei;
  CHECK_THROWS_AS(mean_vector(comp, design), Error);
}

TEST_CASE("weights: symmetric logits and paper proportions") {
  Vector theta = Vector::Zero(2);
  const Vector pi = weights_from_logits(theta);
  for (int k = 0; k < 3; ++k) CHECK(pi[k] == doctest::Approx(1.0 / 3.0));

  Vector paper_pi(3);
  paper_pi << 0.9858, 0.0123, 0.0019;
  const Vector logits = logits_from_weights(paper_pi);
  CHECK(logits[0] == doctest::Approx(std::log(0.0123 / 0.9858)).epsilon(1e-12));
  CHECK(logits[1] == doctest::Approx(std::log(0.0019 / 0.9858)).epsilon(1e-12));
  CHECK(logits[0] == doctest::Approx(-4.3838).epsilon(1e-4));
  CHECK(logits[1] == doctest::Approx(-6.2519).epsilon(1e-4));
}

TEST_CASE("weights: degenerate K = 1") {
  Vector one(1);
  one << 1.0;
  const Vector theta = logits_from_weights(one);
  CHECK(theta.size() == 0);
  const Vector pi = weights_from_logits(theta);
  CHECK(pi.size() == 1);
  CHECK(pi[0] == 1.0);
}

TEST_CASE("weights: exact zero or one rejected for K > 1") {
  Vector bad(2);
  bad << 1.0, 0.0;
  CHECK_THROWS_AS(logits_from_weights(bad), Error);
}

TEST_CASE("property: weights round-trip to 1e-12") {
  const RngStream rng(2024, 0, RngDomain::generic);
  std::uint64_t slot = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 4;
    Vector theta(k - 1);
    for (int j = 0; j < k - 1; ++j) {
      theta[j] = 8.0 * (rng.uniform(slot++) - 0.5);
    }
    const Vector round_trip = logits_from_weights(weights_from_logits(theta));
    for (int j = 0; j < k - 1; ++j) {
      CHECK(round_trip[j] == doctest::Approx(theta[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: links are strictly positive") {
  const ExperimentDesign design = paper_design();
  const RngStream rng(77, 0, RngDomain::generic);
  std::uint64_t slot = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Vector coeffs(3);
    coeffs << 10.0 * (rng.uniform(slot++) - 0.5),
        0.2 * (rng.uniform(slot++) - 0.5), 0.02 * (rng.uniform(slot++) - 0.5);
    const Vector sigma = sigma_vector(coeffs, design);
    const Vector tau = tau_vector(coeffs, design);
    for (int e = 0; e < design.n_conditions(); ++e) {
      CHECK(sigma[e] > 0.0);
      CHECK(tau[e] > 0.0);
    }
  }
}

TEST_CASE("property: LEI is nested in NPM by evaluation") {
  const ExperimentDesign design = paper_design();
  int n_groups = 0;
  LeiMeans lei;
  lei.condition_group = lei_duration_groups(design, n_groups);
  lei.beta1 = 250.0;
  lei.log_rate = std::log(0.4);
  lei.deltas = Vector(3);
  lei.deltas << 1.0, 2.0, 2.5;
  lei.beta_temp = 0.05;
  ComponentParameters as_lei;
  as_lei.mean = lei;

  ComponentParameters as_npm;
  as_npm.mean = NpmMeans{mean_vector(as_lei, design)};
  const Vector a = mean_vector(as_lei, design);
  const Vector b = mean_vector(as_npm, design);
  for (int e = 0; e < design.n_conditions(); ++e) CHECK(a[e] == b[e]);
}

TEST_CASE("property: condition-order equivariance for NPM means") {
  const std::vector<Condition> base{{-10.0, 3.0}, {0.0, 300.0}, {10.0, 600.0}};
  const std::vector<int> perm{2, 0, 1};
  std::vector<Condition> permuted;
  for (int p : perm) permuted.push_back(base[static_cast<std::size_t>(p)]);

  Vector values(3);
  values << 100.0, 200.0, 300.0;
  Vector values_perm(3);
  for (int i = 0; i < 3; ++i) values_perm[i] = values[perm[static_cast<std::size_t>(i)]];

  ComponentParameters comp_a;
  comp_a.mean = NpmMeans{values};
  ComponentParameters comp_b;
  comp_b.mean = NpmMeans{values_perm};

  const Vector mu_a = mean_vector(comp_a, build_design(base, 2));
  const Vector mu_b = mean_vector(comp_b, build_design(permuted, 2));
  for (int i = 0; i < 3; ++i) {
    CHECK(mu_b[i] == mu_a[perm[static_cast<std::size_t>(i)]]);
  }
}

TEST_CASE("standardized coefficients describe the same link") {
  const ExperimentDesign design = paper_design();
  Vector raw(3);
  raw << 2.5, 0.03, 0.001;
  const Vector standardized = to_standardized_coeffs(raw, design);
  const Vector linear_raw = design.covariate_rows() * raw;
  const Vector linear_std = design.covariate_rows_std() * standardized;
  for (int e = 0; e < design.n_conditions(); ++e) {
    CHECK(linear_std[e] == doctest::Approx(linear_raw[e]).epsilon(1e-12));
  }
  const Vector back = to_raw_coeffs(standardized, design);
  for (int q = 0; q < 3; ++q) {
    CHECK(back[q] == doctest::Approx(raw[q]).epsilon(1e-12));
  }
}

TEST_CASE("label convention: components sorted by grand mean") {
  const ExperimentDesign design = build_design({{0.0, 3.0}, {0.0, 300.0}}, 2);
  MixtureModel model;
  model.design = design;
  ComponentParameters hot, ordinary;
  Vector hi(2), lo(2);
  hi << 400.0, 500.0;
  lo << 263.0, 265.0;
  hot.mean = NpmMeans{hi};
  ordinary.mean = NpmMeans{lo};
  model.components = {hot, ordinary};
  Vector pi(2);
  pi << 0.1, 0.9;
  model.weights.theta = logits_from_weights(pi);

  sort_components_by_grand_mean(model);
  CHECK(grand_mean(model.components[0], design) <
        grand_mean(model.components[1], design));
  const Vector pi_sorted = model.mixing_proportions();
  CHECK(pi_sorted[0] == doctest::Approx(0.9));
  CHECK(pi_sorted[1] == doctest::Approx(0.1));
}

}  // TEST_SUITE
