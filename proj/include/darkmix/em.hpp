#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "darkmix/model.hpp"
#include "darkmix/panel.hpp"
#include "darkmix/structured_cov.hpp"

namespace darkmix {

/// Posterior membership probabilities (n x K) plus the manifest
/// log-likelihood of the model that produced them.
struct Responsibilities {
  Matrix e;
  double manifest_loglik = 0.0;

  long n_pixels() const { return e.rows(); }
  int n_components() const { return static_cast<int>(e.cols()); }
};

enum class InitStrategy { quantile, random };

struct FitConfig {
  int max_em_iters = 500;
  double rel_tol = 1e-8;         // relative manifest-LL change
  int scoring_max_iters = 10;    // scoring passes per component per M-step
  double scoring_grad_tol = 1e-6;
  double scoring_ridge = 1e-8;   // scaled by mean(diag(information))
  std::uint64_t seed = 0;
  InitStrategy init_strategy = InitStrategy::quantile;
  int restarts = 1;
  int threads = 0;
};

struct FitResult {
  MixtureModel model;
  Responsibilities responsibilities;
  std::vector<double> trace;  // manifest LL after every E-step
  bool converged = false;
  int iterations = 0;
};

/// Exact multivariate normal log-density of one pixel row under a
/// component: -0.5 [log|Sigma| + resid' Sigma^{-1} resid + E r log(2 pi)].
double component_loglik(const Vector& y_row, const Vector& mean_vec,
                        const StructuredCov& cov);

/// Log-domain E-step: responsibilities via log-sum-exp, never exponentiating
/// raw densities. Also returns the manifest log-likelihood.
Responsibilities e_step(const PanelStats& stats, const MixtureModel& model,
                        int threads = 0);
Responsibilities e_step(const Panel& panel, const MixtureModel& model,
                        int threads = 0);

/// Closed-form weight update: pi_k = column mean of responsibilities.
MixtureWeights m_step_weights(const Responsibilities& resp);

/// The per-component optimization works on a packed parameter vector
/// [mean parameters, alpha_std, gamma_std]; link coefficients are carried
/// in the design's standardized covariate basis, where the scoring problem
/// is well conditioned. pack/unpack are exact inverses up to rounding.
Vector pack_component(const ComponentParameters& component,
                      const ExperimentDesign& design);
ComponentParameters unpack_component(const Vector& packed,
                                     const ComponentParameters& prototype,
                                     const ExperimentDesign& design);

struct ScoreResult {
  Vector gradient;            // d L_k / d packed parameters
  Matrix information;         // empirical information sum_i w_i s_i s_i'
  double weighted_loglik = 0.0;  // L_k = sum_i w_i l_ki
  double weight_sum = 0.0;
};

/// Gradient (and optionally empirical information) of
/// L_k = sum_i w_i l_ki at the component's current parameters.
ScoreResult weighted_score(const ComponentParameters& component,
                           const PanelStats& stats,
                           const ExperimentDesign& design,
                           const Vector& resp_column, int threads = 0,
                           bool with_information = true);

/// Modified Fisher scoring with the empirical information matrix and step
/// halving; never accepts a step that lowers L_k. Returns the updated
/// component.
ComponentParameters scoring_update(const ComponentParameters& component,
                                   const PanelStats& stats,
                                   const ExperimentDesign& design,
                                   const Vector& resp_column,
                                   const FitConfig& config);

/// Moment-based starting model (quantile or random strategy).
MixtureModel initialize_model(const PanelStats& stats,
                              const ExperimentDesign& design, int k,
                              MeanSpec mean_spec, InitStrategy strategy,
                              std::uint64_t seed);

/// Full EM driver: E-step / weight update / per-component scoring until the
/// relative manifest-LL change drops below rel_tol. Components are
/// relabeled ascending by grand mean on exit. An explicit initial model
/// (e.g. for warm-started bootstrap refits) bypasses initialization.
FitResult fit(const Panel& panel, const ExperimentDesign& design, int k,
              MeanSpec mean_spec, const FitConfig& config = {},
              const std::optional<MixtureModel>& initial = std::nullopt);
FitResult fit(const PanelStats& stats, const ExperimentDesign& design, int k,
              MeanSpec mean_spec, const FitConfig& config = {},
              const std::optional<MixtureModel>& initial = std::nullopt);

}  // namespace darkmix
