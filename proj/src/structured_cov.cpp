#include "darkmix/structured_cov.hpp"

#include <cmath>
#include <string>

#include "darkmix/error.hpp"

namespace darkmix {

StructuredCov::StructuredCov(Vector sigma, Vector tau, int replicates)
    : sigma_(std::move(sigma)), tau_(std::move(tau)), r_(replicates) {
  require(sigma_.size() == tau_.size(), ErrorCode::dimension_mismatch,
          "sigma and tau must have equal length");
  require(sigma_.size() >= 1, ErrorCode::dimension_mismatch,
          "covariance needs at least one condition");
  require(r_ >= 1, ErrorCode::invalid_argument, "replicates must be >= 1");
  for (int e = 0; e < sigma_.size(); ++e) {
    if (!(sigma_[e] > 0.0)) {
      fail(ErrorCode::singular_covariance,
           "sigma[" + std::to_string(e + 1) +
               "] must be strictly positive (diagonal would be singular)");
    }
    require(tau_[e] >= 0.0, ErrorCode::invalid_argument,
            "tau entries must be non-negative");
  }
  inv_sigma2_ = sigma_.array().square().inverse().matrix();
  tau_over_sigma2_ = (tau_.array() * inv_sigma2_.array()).matrix();
  capacitance_ =
      1.0 + r_ * (tau_.array().square() * inv_sigma2_.array()).sum();
  sum_log_sigma2_ = 2.0 * sigma_.array().log().sum();
}

double StructuredCov::log_det() const {
  // Matrix determinant lemma on Sigma = D + u u'.
  return r_ * sum_log_sigma2_ + std::log(capacitance_);
}

Vector StructuredCov::solve(const Vector& v) const {
  require(v.size() == dim(), ErrorCode::dimension_mismatch,
          "solve: vector length " + std::to_string(v.size()) +
              " does not match covariance dimension " + std::to_string(dim()));
  // Sherman-Morrison: D^{-1}v - D^{-1}u (u' D^{-1} v) / capacitance.
  double u_dinv_v = 0.0;
  for (int e = 0; e < n_conditions(); ++e) {
    double block_sum = 0.0;
    for (int j = 0; j < r_; ++j) block_sum += v[e * r_ + j];
    u_dinv_v += tau_over_sigma2_[e] * block_sum;
  }
  const double scale = u_dinv_v / capacitance_;
  Vector out(dim());
  for (int e = 0; e < n_conditions(); ++e) {
    for (int j = 0; j < r_; ++j) {
      const int idx = e * r_ + j;
      out[idx] = v[idx] * inv_sigma2_[e] - tau_over_sigma2_[e] * scale;
    }
  }
  return out;
}

double StructuredCov::quad_form(const Vector& resid) const {
  require(resid.size() == dim(), ErrorCode::dimension_mismatch,
          "quad_form: vector length does not match covariance dimension");
  double dinv_quad = 0.0;
  double u_dinv_r = 0.0;
  for (int e = 0; e < n_conditions(); ++e) {
    double block_sum = 0.0, block_sq = 0.0;
    for (int j = 0; j < r_; ++j) {
      const double x = resid[e * r_ + j];
      block_sum += x;
      block_sq += x * x;
    }
    dinv_quad += block_sq * inv_sigma2_[e];
    u_dinv_r += tau_over_sigma2_[e] * block_sum;
  }
  return dinv_quad - u_dinv_r * u_dinv_r / capacitance_;
}

Matrix StructuredCov::materialize(int max_dim) const {
  require(dim() <= max_dim, ErrorCode::materialize_cap_exceeded,
          "materialize: dimension " + std::to_string(dim()) +
              " exceeds cap " + std::to_string(max_dim));
  Matrix dense = Matrix::Zero(dim(), dim());
  for (int e = 0; e < n_conditions(); ++e) {
    for (int f = 0; f < n_conditions(); ++f) {
      const double cross = tau_[e] * tau_[f];
      for (int j = 0; j < r_; ++j) {
        for (int jp = 0; jp < r_; ++jp) {
          double value = cross;
          if (e == f && j == jp) value += sigma_[e] * sigma_[e];
          dense(e * r_ + j, f * r_ + jp) = value;
        }
      }
    }
  }
  return dense;
}

double StructuredCov::directional_trace(DerivFamily family,
                                        const Vector& z) const {
  require(z.size() == n_conditions(), ErrorCode::dimension_mismatch,
          "directional_trace: covariate column length must equal E");
  switch (family) {
    case DerivFamily::diag_sigma: {
      // tr(Sigma^{-1} diag(2 sigma^2 z) (x) I_r); diag(Sigma^{-1}) is
      // closed-form under Sherman-Morrison.
      double trace = 0.0;
      for (int e = 0; e < n_conditions(); ++e) {
        const double diag_inv =
            inv_sigma2_[e] -
            tau_over_sigma2_[e] * tau_over_sigma2_[e] / capacitance_;
        trace += r_ * diag_inv * 2.0 * z[e] / inv_sigma2_[e];
      }
      return trace;
    }
    case DerivFamily::tau_outer: {
      // dSigma = a u' + u a' with a = (tau .* z) (x) 1_r, so the trace is
      // 2 u' Sigma^{-1} a = 2 (u' D^{-1} a) / capacitance.
      double u_dinv_a = 0.0;
      for (int e = 0; e < n_conditions(); ++e) {
        u_dinv_a += r_ * tau_over_sigma2_[e] * tau_[e] * z[e];
      }
      return 2.0 * u_dinv_a / capacitance_;
    }
  }
  fail(ErrorCode::invalid_argument, "unknown derivative family");
}

StructuredCov component_cov(const ComponentParameters& component,
                            const ExperimentDesign& design) {
  return StructuredCov(sigma_vector(component.alpha, design),
                       tau_vector(component.gamma, design),
                       design.replicates());
}

}  // namespace darkmix
