#pragma once

#include <Eigen/Dense>

#include "darkmix/model.hpp"

namespace darkmix {

/// Factored form of the per-component covariance
///
///   Sigma = diag(sigma^2) (x) I_r  +  (tau tau') (x) J_r
///
/// over E conditions with r replicates each (dimension E*r). Writing
/// u = tau (x) 1_r this is diag + u u', so determinant, solves and traces
/// all cost O(E*r) via the rank-one update identities instead of anything
/// cubic. The dense layout exists only as a test oracle (materialize).
class StructuredCov {
 public:
  /// sigma must be strictly positive; tau may contain zeros.
  StructuredCov(Vector sigma, Vector tau, int replicates);

  int n_conditions() const { return static_cast<int>(sigma_.size()); }
  int replicates() const { return r_; }
  int dim() const { return n_conditions() * r_; }

  const Vector& sigma() const { return sigma_; }
  const Vector& tau() const { return tau_; }

  /// 1/sigma_e^2, tau_e/sigma_e^2 and the capacitance 1 + r sum tau^2/sigma^2
  /// are precomputed; exposed for the likelihood kernels.
  const Vector& inv_sigma2() const { return inv_sigma2_; }
  const Vector& tau_over_sigma2() const { return tau_over_sigma2_; }
  double capacitance() const { return capacitance_; }

  double log_det() const;

  /// Sigma^{-1} v for a vector of length E*r.
  Vector solve(const Vector& v) const;

  /// resid' Sigma^{-1} resid.
  double quad_form(const Vector& resid) const;

  /// Dense symmetric matrix; entry ((e,j),(f,j')) =
  /// sigma_e^2 [e=f][j=j'] + tau_e tau_f. Test oracle only; guarded by a
  /// dimension cap.
  Matrix materialize(int max_dim = 1000) const;

  /// Derivative families for the log-link coefficients:
  ///   diag_sigma: dSigma = diag(2 sigma_e^2 z_e) (x) I_r
  ///   tau_outer:  dSigma = (w tau' + tau w') (x) J_r with w_e = tau_e z_e
  enum class DerivFamily { diag_sigma, tau_outer };

  /// tr(Sigma^{-1} dSigma) for the family evaluated at covariate column z
  /// (length E).
  double directional_trace(DerivFamily family, const Vector& z) const;

 private:
  Vector sigma_;
  Vector tau_;
  int r_;
  Vector inv_sigma2_;
  Vector tau_over_sigma2_;
  double capacitance_;
  double sum_log_sigma2_;
};

/// Convenience: the covariance implied by a component's links on a design.
StructuredCov component_cov(const ComponentParameters& component,
                            const ExperimentDesign& design);

}  // namespace darkmix
