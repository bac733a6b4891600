#pragma once

#include <Eigen/Dense>
#include <variant>
#include <vector>

namespace darkmix {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One experimental condition: sensor temperature and exposure duration.
struct Condition {
  double temp_c = 0.0;
  double duration_s = 0.0;

  bool operator==(const Condition&) const = default;
};

/// The layout of a measurement campaign: E distinct conditions, r replicate
/// images per condition. A panel cell (e, j) lives in column e*r + j
/// (replicates vary fastest).
///
/// Two covariate parameterizations are kept: raw rows (1, t_e, d_e) define
/// the public variance links, and standardized rows (zero mean, unit spread
/// over conditions) are what the fitting engine differentiates against,
/// since raw durations span 0.01..600 s.
class ExperimentDesign {
 public:
  ExperimentDesign() = default;

  const std::vector<Condition>& conditions() const { return conditions_; }
  int n_conditions() const { return static_cast<int>(conditions_.size()); }
  int replicates() const { return replicates_; }
  int width() const { return n_conditions() * replicates_; }

  /// Raw covariate rows, E x 3: (1, t_e, d_e).
  const Matrix& covariate_rows() const { return z_raw_; }
  /// Centered/scaled covariate rows, E x 3: (1, t~_e, d~_e).
  const Matrix& covariate_rows_std() const { return z_std_; }

  double temp_mean() const { return temp_mean_; }
  double temp_scale() const { return temp_scale_; }
  double duration_mean() const { return dur_mean_; }
  double duration_scale() const { return dur_scale_; }

  int column_of(int condition, int replicate) const {
    return condition * replicates_ + replicate;
  }

  bool operator==(const ExperimentDesign& other) const {
    return conditions_ == other.conditions_ && replicates_ == other.replicates_;
  }

  friend ExperimentDesign build_design(std::vector<Condition> conditions,
                                       int replicates);

 private:
  std::vector<Condition> conditions_;
  int replicates_ = 0;
  Matrix z_raw_;
  Matrix z_std_;
  double temp_mean_ = 0.0, temp_scale_ = 1.0;
  double dur_mean_ = 0.0, dur_scale_ = 1.0;
};

/// Validates conditions (pairwise distinct, positive durations) and derives
/// both covariate parameterizations.
ExperimentDesign build_design(std::vector<Condition> conditions,
                              int replicates);

/// Convert link coefficients between the raw (1, t, d) basis and the
/// design's standardized basis. The linear predictor is identical in both.
Vector to_standardized_coeffs(const Vector& raw, const ExperimentDesign& design);
Vector to_raw_coeffs(const Vector& standardized, const ExperimentDesign& design);

/// Free per-condition means ("non-parametric" mean model): E stored values.
struct NpmMeans {
  Vector values;
};

/// Parametric mean model with log-scale intercepts by duration group:
///   mu_e = beta1 + exp(log_rate) * d_e + exp(delta[g(e)] + beta_temp * t_e)
/// g maps each condition to one of D duration groups.
struct LeiMeans {
  double beta1 = 0.0;
  double log_rate = 0.0;          // log of the per-second linear slope
  Vector deltas;                  // one log-intercept per duration group
  double beta_temp = 0.0;         // temperature slope inside the exponential
  std::vector<int> condition_group;  // length E, values in [0, deltas.size())

  int n_groups() const { return static_cast<int>(deltas.size()); }
  int n_params() const { return 3 + n_groups(); }
};

enum class MeanSpec { npm, lei };

/// Duration-group assignment for LEI: one group per distinct duration, with
/// sub-second "dark-free" exposures merged into the shortest group at or
/// above merge_below seconds.
std::vector<int> lei_duration_groups(const ExperimentDesign& design,
                                     int& n_groups_out,
                                     double merge_below = 1.0);

/// All parameters of one mixture component.
struct ComponentParameters {
  std::variant<NpmMeans, LeiMeans> mean;
  Vector alpha{Vector::Zero(3)};  // log-link coefficients for sigma, raw basis
  Vector gamma{Vector::Zero(3)};  // log-link coefficients for tau, raw basis

  bool is_npm() const { return std::holds_alternative<NpmMeans>(mean); }
  int mean_param_count() const {
    return is_npm() ? static_cast<int>(std::get<NpmMeans>(mean).values.size())
                    : std::get<LeiMeans>(mean).n_params();
  }
};

/// sigma_e = exp(z_e' alpha) evaluated over the design's raw covariate rows.
Vector sigma_vector(const Vector& alpha, const ExperimentDesign& design);
/// tau_e = exp(z_e' gamma), same link.
Vector tau_vector(const Vector& gamma, const ExperimentDesign& design);
/// The component's mean over conditions (length E, condition order).
Vector mean_vector(const ComponentParameters& component,
                   const ExperimentDesign& design);

/// Mixing weights stored as logits relative to component 1 (whose logit is
/// fixed at zero), so the K-vector pi is always a valid probability vector.
struct MixtureWeights {
  Vector theta;  // length K-1

  int n_components() const { return static_cast<int>(theta.size()) + 1; }
};

Vector weights_from_logits(const Vector& theta);
Vector logits_from_weights(const Vector& pi);

struct MixtureModel {
  ExperimentDesign design;
  std::vector<ComponentParameters> components;
  MixtureWeights weights;

  int n_components() const { return static_cast<int>(components.size()); }
  Vector mixing_proportions() const { return weights_from_logits(weights.theta); }
};

/// Grand mean of a component's mean vector; defines the label convention
/// (components sorted ascending, so component 1 is "ordinary pixels").
double grand_mean(const ComponentParameters& component,
                  const ExperimentDesign& design);

/// Sort components ascending by grand mean; returns the permutation applied
/// (new index -> old index) and rewrites the weights to match.
std::vector<int> sort_components_by_grand_mean(MixtureModel& model);

void validate_model(const MixtureModel& model);

}  // namespace darkmix
