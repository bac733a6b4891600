#include "darkmix/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "darkmix/error.hpp"

namespace darkmix {

ExperimentDesign build_design(std::vector<Condition> conditions,
                              int replicates) {
  require(!conditions.empty(), ErrorCode::invalid_argument,
          "design needs at least one condition");
  require(replicates >= 1, ErrorCode::invalid_argument,
          "replicates must be >= 1");
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    if (!(conditions[i].duration_s > 0.0)) {
      fail(ErrorCode::nonpositive_duration,
           "condition " + std::to_string(i + 1) + " has non-positive duration " +
               std::to_string(conditions[i].duration_s));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (conditions[i] == conditions[j]) {
        fail(ErrorCode::duplicate_condition,
             "condition " + std::to_string(i + 1) + " duplicates condition " +
                 std::to_string(j + 1));
      }
    }
  }

  ExperimentDesign design;
  design.conditions_ = std::move(conditions);
  design.replicates_ = replicates;

  const int e_count = design.n_conditions();
  design.z_raw_.resize(e_count, 3);
  for (int e = 0; e < e_count; ++e) {
    design.z_raw_(e, 0) = 1.0;
    design.z_raw_(e, 1) = design.conditions_[e].temp_c;
    design.z_raw_(e, 2) = design.conditions_[e].duration_s;
  }

  const auto moments = [e_count](const Eigen::VectorXd& v, double& mean,
                                 double& scale) {
    mean = v.mean();
    const double var = (v.array() - mean).square().sum() / e_count;
    scale = var > 0.0 ? std::sqrt(var) : 1.0;
  };
  moments(design.z_raw_.col(1), design.temp_mean_, design.temp_scale_);
  moments(design.z_raw_.col(2), design.dur_mean_, design.dur_scale_);

  design.z_std_.resize(e_count, 3);
  design.z_std_.col(0).setOnes();
  design.z_std_.col(1) =
      (design.z_raw_.col(1).array() - design.temp_mean_) / design.temp_scale_;
  design.z_std_.col(2) =
      (design.z_raw_.col(2).array() - design.dur_mean_) / design.dur_scale_;
  return design;
}

Vector to_standardized_coeffs(const Vector& raw,
                              const ExperimentDesign& design) {
  require(raw.size() == 3, ErrorCode::dimension_mismatch,
          "link coefficients must have length 3");
  Vector out(3);
  out[0] = raw[0] + raw[1] * design.temp_mean() + raw[2] * design.duration_mean();
  out[1] = raw[1] * design.temp_scale();
  out[2] = raw[2] * design.duration_scale();
  return out;
}

Vector to_raw_coeffs(const Vector& standardized,
                     const ExperimentDesign& design) {
  require(standardized.size() == 3, ErrorCode::dimension_mismatch,
          "link coefficients must have length 3");
  Vector out(3);
  out[1] = standardized[1] / design.temp_scale();
  out[2] = standardized[2] / design.duration_scale();
  out[0] = standardized[0] - out[1] * design.temp_mean() -
           out[2] * design.duration_mean();
  return out;
}

std::vector<int> lei_duration_groups(const ExperimentDesign& design,
                                     int& n_groups_out, double merge_below) {
  std::map<double, int> group_of;
  for (const auto& c : design.conditions()) {
    if (c.duration_s >= merge_below) group_of[c.duration_s] = 0;
  }
  if (group_of.empty()) {
    // All exposures are sub-threshold: a single group.
    for (const auto& c : design.conditions()) group_of[c.duration_s] = 0;
  }
  int next = 0;
  for (auto& [dur, g] : group_of) g = next++;
  n_groups_out = next;

  std::vector<int> assignment(design.n_conditions());
  const double shortest_grouped = group_of.begin()->first;
  for (int e = 0; e < design.n_conditions(); ++e) {
    const double d = design.conditions()[e].duration_s;
    const auto it = group_of.find(d);
    assignment[e] =
        it != group_of.end() ? it->second : group_of.at(shortest_grouped);
  }
  return assignment;
}

static Vector link_vector(const Vector& coeffs, const ExperimentDesign& design,
                          const char* name) {
  require(coeffs.size() == 3, ErrorCode::dimension_mismatch,
          std::string(name) + " must have length 3");
  return (design.covariate_rows() * coeffs).array().exp().matrix();
}

Vector sigma_vector(const Vector& alpha, const ExperimentDesign& design) {
  return link_vector(alpha, design, "alpha");
}

Vector tau_vector(const Vector& gamma, const ExperimentDesign& design) {
  return link_vector(gamma, design, "gamma");
}

Vector mean_vector(const ComponentParameters& component,
                   const ExperimentDesign& design) {
  const int e_count = design.n_conditions();
  if (component.is_npm()) {
    const auto& npm = std::get<NpmMeans>(component.mean);
    require(npm.values.size() == e_count, ErrorCode::dimension_mismatch,
            "NPM mean values must match the number of conditions");
    return npm.values;
  }
  const auto& lei = std::get<LeiMeans>(component.mean);
  require(static_cast<int>(lei.condition_group.size()) == e_count,
          ErrorCode::dimension_mismatch,
          "LEI duration-group assignment must cover every condition");
  Vector mu(e_count);
  const double rate = std::exp(lei.log_rate);
  for (int e = 0; e < e_count; ++e) {
    const int g = lei.condition_group[e];
    if (g < 0 || g >= lei.n_groups()) {
      fail(ErrorCode::invalid_argument,
           "condition " + std::to_string(e + 1) +
               " is not mapped to a LEI duration group");
    }
    const auto& c = design.conditions()[e];
    mu[e] = lei.beta1 + rate * c.duration_s +
            std::exp(lei.deltas[g] + lei.beta_temp * c.temp_c);
  }
  return mu;
}

Vector weights_from_logits(const Vector& theta) {
  const int k = static_cast<int>(theta.size()) + 1;
  Vector logits(k);
  logits[0] = 0.0;
  logits.tail(k - 1) = theta;
  const double m = logits.maxCoeff();
  Vector pi = (logits.array() - m).exp().matrix();
  pi /= pi.sum();
  return pi;
}

Vector logits_from_weights(const Vector& pi) {
  require(pi.size() >= 1, ErrorCode::invalid_argument, "pi must be non-empty");
  double total = 0.0;
  for (int k = 0; k < pi.size(); ++k) {
    require((pi[k] > 0.0 && pi[k] < 1.0) || pi.size() == 1,
            ErrorCode::invalid_argument,
            "pi entries must lie strictly inside (0, 1)");
    total += pi[k];
  }
  require(std::abs(total - 1.0) < 1e-8, ErrorCode::invalid_argument,
          "pi must sum to 1");
  Vector theta(pi.size() - 1);
  for (int k = 1; k < pi.size(); ++k) theta[k - 1] = std::log(pi[k] / pi[0]);
  return theta;
}

double grand_mean(const ComponentParameters& component,
                  const ExperimentDesign& design) {
  return mean_vector(component, design).mean();
}

std::vector<int> sort_components_by_grand_mean(MixtureModel& model) {
  const int k = model.n_components();
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> gm(k);
  for (int i = 0; i < k; ++i) gm[i] = grand_mean(model.components[i], model.design);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return gm[a] < gm[b]; });

  const Vector pi = model.mixing_proportions();
  Vector pi_sorted(k);
  std::vector<ComponentParameters> sorted;
  sorted.reserve(k);
  for (int i = 0; i < k; ++i) {
    sorted.push_back(std::move(model.components[order[i]]));
    pi_sorted[i] = pi[order[i]];
  }
  model.components = std::move(sorted);
  if (k > 1) model.weights.theta = logits_from_weights(pi_sorted);
  return order;
}

void validate_model(const MixtureModel& model) {
  require(model.n_components() >= 1, ErrorCode::invalid_argument,
          "model needs at least one component");
  require(model.weights.n_components() == model.n_components(),
          ErrorCode::dimension_mismatch,
          "weights and component count disagree");
  for (const auto& comp : model.components) {
    mean_vector(comp, model.design);  // throws on any inconsistency
    require(comp.alpha.size() == 3 && comp.gamma.size() == 3,
            ErrorCode::dimension_mismatch, "link coefficients must be length 3");
  }
}

}  // namespace darkmix
