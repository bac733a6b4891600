#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "darkmix/em.hpp"

namespace darkmix {

/// One row of a model-selection table. BIC = -2L + p log n (smaller is
/// better), ICL = BIC + 2 * entropy, NEC(K) = entropy(K) / (L(K) - L(1)).
struct CriteriaRow {
  int k = 0;
  double loglik = 0.0;
  int params = 0;
  double bic = 0.0;
  double icl = 0.0;
  double entropy = 0.0;
  std::optional<double> nec;     // empty for K = 1 (undefined)
  bool fitted = true;            // false when the sweep flagged this K
  std::string failure;           // populated when fitted == false
};

/// Posterior entropy -sum_ik E_ki log E_ki with 0 log 0 = 0.
double posterior_entropy(const Responsibilities& resp);

/// Parameter count: (K-1) mixing logits plus, per component, the mean
/// parameters and the 3+3 link coefficients.
int parameter_count(const MixtureModel& model);

/// Criteria for one fit. NEC needs the K = 1 log-likelihood on the same
/// data and requires L(K) > L(1).
CriteriaRow criteria(const FitResult& fit_result, long n_pixels,
                     std::optional<double> loglik_k1 = std::nullopt);

struct SweepResult {
  std::vector<CriteriaRow> rows;  // K = 1 baseline first, then each requested K
  std::optional<int> best_bic;
  std::optional<int> best_icl;
  std::optional<int> best_nec;
};

/// Fit each requested K (plus the implicit K = 1 baseline) and tabulate the
/// criteria. A K that fails to fit is flagged and the sweep continues.
SweepResult sweep_k(const PanelStats& stats, const ExperimentDesign& design,
                    const std::vector<int>& ks, MeanSpec mean_spec,
                    const FitConfig& config);

struct LrTestResult {
  double statistic = 0.0;  // 2 (L_NPM - L_LEI), clamped at zero
  int df = 0;              // K (E - LEI mean-parameter count)
  double p_value = 1.0;
  /// Set when the unclamped statistic fell below -1e-4: the NPM fit did not
  /// dominate its nested LEI fit, i.e. it is under-converged.
  bool under_converged_warning = false;
};

/// Likelihood-ratio test of the free-means model against the nested
/// parametric mean model, fitted on the same data with the same K.
LrTestResult lr_test(const FitResult& fit_npm, const FitResult& fit_lei);

struct BootstrapTable {
  std::vector<std::string> names;
  Vector estimates;        // point estimates from the reference model
  Vector standard_errors;
  int replicates_requested = 0;
  int replicates_used = 0;
  int failures = 0;
};

/// Draws a replicate's resampled pixel rows; injectable for tests.
using Resampler = std::function<std::vector<long>(int replicate, long n)>;

struct BootstrapConfig {
  int b = 200;
  std::uint64_t seed = 0;
  /// Refits start from the point estimate by default; cold starts rerun the
  /// configured initialization on each replicate.
  bool warm_start = true;
  FitConfig fit;
  Resampler resampler;  // optional override
};

/// Non-parametric bootstrap standard errors: resample pixels with
/// replacement, refit, align component labels to the reference model by
/// nearest grand mean, and report the SD of each parameter across
/// replicates. Fully reproducible for a fixed seed; replicate RNG streams
/// are keyed by replicate index so parallel and serial runs agree.
BootstrapTable bootstrap_se(const PanelStats& stats, const MixtureModel& model,
                            const BootstrapConfig& config);
BootstrapTable bootstrap_se(const Panel& panel, const MixtureModel& model,
                            const BootstrapConfig& config);

/// Flat parameter vector (and matching names) used by the bootstrap table:
/// mixing proportions, then per-component mean parameters, alpha, gamma.
Vector flatten_parameters(const MixtureModel& model,
                          std::vector<std::string>* names = nullptr);

/// Chi-square upper tail P(X > x) with df degrees of freedom.
double chi_squared_upper_tail(double x, int df);

}  // namespace darkmix
