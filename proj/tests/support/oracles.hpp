#pragma once

// Test-only reference implementations, deliberately independent of the
// library's fast paths: dense covariance algebra in long double precision,
// assembled straight from the model definition. Used to freeze expected
// values and to cross-check determinants, solves, quadratic forms, traces,
// log-densities and finite-difference gradients.

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "darkmix/em.hpp"
#include "darkmix/model.hpp"
#include "darkmix/panel.hpp"

namespace oracle {

using LongMatrix =
    Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LongVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

constexpr long double kLog2PiL = 1.83787706640934548356065947281123527972L;

/// Dense Sigma built entrywise from the definition:
/// ((e,j),(f,j')) = sigma_e^2 [e=f][j=j'] + tau_e tau_f.
inline LongMatrix dense_cov(const Eigen::VectorXd& sigma,
                            const Eigen::VectorXd& tau, int r) {
  const int e_count = static_cast<int>(sigma.size());
  const int dim = e_count * r;
  LongMatrix out(dim, dim);
  for (int e = 0; e < e_count; ++e) {
    for (int f = 0; f < e_count; ++f) {
      for (int j = 0; j < r; ++j) {
        for (int jp = 0; jp < r; ++jp) {
          long double v = static_cast<long double>(tau[e]) * tau[f];
          if (e == f && j == jp) {
            v += static_cast<long double>(sigma[e]) * sigma[e];
          }
          out(e * r + j, f * r + jp) = v;
        }
      }
    }
  }
  return out;
}

/// Lower-triangular Cholesky factor; throws if the matrix is not PD.
inline LongMatrix cholesky(const LongMatrix& a) {
  const long n = a.rows();
  LongMatrix l = LongMatrix::Zero(n, n);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j <= i; ++j) {
      long double sum = a(i, j);
      for (long k = 0; k < j; ++k) sum -= l(i, k) * l(j, k);
      if (i == j) {
        if (sum <= 0.0L) throw std::runtime_error("oracle: matrix not PD");
        l(i, i) = std::sqrt(sum);
      } else {
        l(i, j) = sum / l(j, j);
      }
    }
  }
  return l;
}

inline long double chol_log_det(const LongMatrix& l) {
  long double acc = 0.0L;
  for (long i = 0; i < l.rows(); ++i) acc += std::log(l(i, i));
  return 2.0L * acc;
}

inline LongVector chol_solve(const LongMatrix& l, const LongVector& b) {
  const long n = l.rows();
  LongVector y(n);
  for (long i = 0; i < n; ++i) {
    long double sum = b[i];
    for (long k = 0; k < i; ++k) sum -= l(i, k) * y[k];
    y[i] = sum / l(i, i);
  }
  LongVector x(n);
  for (long i = n - 1; i >= 0; --i) {
    long double sum = y[i];
    for (long k = i + 1; k < n; ++k) sum -= l(k, i) * x[k];
    x[i] = sum / l(i, i);
  }
  return x;
}

/// Dense multivariate normal log-density of a pixel row.
inline long double dense_loglik(const Eigen::VectorXd& y,
                                const Eigen::VectorXd& mu,
                                const Eigen::VectorXd& sigma,
                                const Eigen::VectorXd& tau, int r) {
  const LongMatrix cov = dense_cov(sigma, tau, r);
  const LongMatrix l = cholesky(cov);
  const int dim = static_cast<int>(y.size());
  LongVector resid(dim);
  const int e_count = static_cast<int>(mu.size());
  for (int e = 0; e < e_count; ++e) {
    for (int j = 0; j < r; ++j) {
      resid[e * r + j] =
          static_cast<long double>(y[e * r + j]) - mu[e];
    }
  }
  const LongVector solved = chol_solve(l, resid);
  long double quad = 0.0L;
  for (int i = 0; i < dim; ++i) quad += resid[i] * solved[i];
  return -0.5L * (chol_log_det(l) + quad + dim * kLog2PiL);
}

/// Weighted component objective L_k = sum_i w_i l_ki straight from the raw
/// panel, all in long double. The workhorse behind finite differences.
inline long double dense_weighted_loglik(const darkmix::ComponentParameters& comp,
                                         const darkmix::Panel& panel,
                                         const darkmix::ExperimentDesign& design,
                                         const Eigen::VectorXd& weights) {
  const Eigen::VectorXd mu = darkmix::mean_vector(comp, design);
  const Eigen::VectorXd sigma = darkmix::sigma_vector(comp.alpha, design);
  const Eigen::VectorXd tau = darkmix::tau_vector(comp.gamma, design);
  const int r = design.replicates();

  const LongMatrix cov = dense_cov(sigma, tau, r);
  const LongMatrix l = cholesky(cov);
  const long double log_det = chol_log_det(l);
  const int dim = design.width();
  const int e_count = design.n_conditions();

  long double total = 0.0L;
  for (long i = 0; i < panel.n_pixels(); ++i) {
    if (weights[i] == 0.0) continue;
    LongVector resid(dim);
    for (int e = 0; e < e_count; ++e) {
      for (int j = 0; j < r; ++j) {
        resid[e * r + j] =
            static_cast<long double>(panel.data(i, e * r + j)) - mu[e];
      }
    }
    const LongVector solved = chol_solve(l, resid);
    long double quad = 0.0L;
    for (int c = 0; c < dim; ++c) quad += resid[c] * solved[c];
    total += static_cast<long double>(weights[i]) *
             (-0.5L * (log_det + quad + dim * kLog2PiL));
  }
  return total;
}

/// Central finite differences of the weighted objective with respect to the
/// packed parameter vector (step on the standardized scale).
inline Eigen::VectorXd fd_gradient(const darkmix::ComponentParameters& comp,
                                   const darkmix::Panel& panel,
                                   const darkmix::ExperimentDesign& design,
                                   const Eigen::VectorXd& weights,
                                   double step = 1e-5) {
  const Eigen::VectorXd x0 = darkmix::pack_component(comp, design);
  Eigen::VectorXd grad(x0.size());
  for (long q = 0; q < x0.size(); ++q) {
    Eigen::VectorXd xp = x0, xm = x0;
    xp[q] += step;
    xm[q] -= step;
    const long double fp = dense_weighted_loglik(
        darkmix::unpack_component(xp, comp, design), panel, design, weights);
    const long double fm = dense_weighted_loglik(
        darkmix::unpack_component(xm, comp, design), panel, design, weights);
    grad[q] = static_cast<double>((fp - fm) / (2.0L * step));
  }
  return grad;
}

}  // namespace oracle
