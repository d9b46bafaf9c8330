#pragma once

// Nuclear norm, its smoothed (Huber-on-singular-values) variant, and the
// Euclidean projection onto the nuclear-norm ball.
//
// The smoothed norm is defined as
//     ||A||_{*mu} = sup_{||Z||_2 <= 1} Tr(A^T Z) - mu/2 ||Z||_F^2.
// The sup separates over singular values, giving sum_i h_mu(sigma_i) with
//     h_mu(s) = s^2 / (2 mu)   if s <= mu,
//               s - mu / 2     otherwise,
// attained at Z = U diag(min(sigma / mu, 1)) V^T, which is also the gradient.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "ccnn/error.hpp"
#include "ccnn/types.hpp"

namespace ccnn {

struct SpectralConfig {
  double mu = 0.1;
  /// Singular values below svd_tolerance * sigma_max count as zero.
  double svd_tolerance = 1e-10;
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived> &a) {
  require(a.allFinite(), ErrorKind::non_finite_input, "matrix has non-finite entries");
}

template <typename Derived>
auto thin_svd(const Eigen::MatrixBase<Derived> &a) {
  using Plain = typename Derived::PlainObject;
  return Eigen::BDCSVD<Plain>(a.eval(), Eigen::ComputeThinU | Eigen::ComputeThinV);
}

} // namespace detail

template <typename Derived>
VectorX<typename Derived::Scalar> singular_values(const Eigen::MatrixBase<Derived> &a) {
  detail::require_finite(a);
  if (a.size() == 0)
    return VectorX<typename Derived::Scalar>();
  return Eigen::BDCSVD<typename Derived::PlainObject>(a.eval()).singularValues();
}

template <typename Derived>
typename Derived::Scalar nuclear_norm(const Eigen::MatrixBase<Derived> &a) {
  return singular_values(a).sum();
}

template <typename Scalar>
Scalar huber(Scalar sigma, Scalar mu) {
  return sigma <= mu ? sigma * sigma / (2 * mu) : sigma - mu / 2;
}

template <typename Derived>
typename Derived::Scalar smoothed_nuclear_norm(const Eigen::MatrixBase<Derived> &a,
                                               typename Derived::Scalar mu) {
  require(mu > 0, ErrorKind::nonpositive_mu, "smoothing mu must be positive");
  const auto sigma = singular_values(a);
  typename Derived::Scalar total = 0;
  for (Index i = 0; i < sigma.size(); ++i)
    total += huber(sigma(i), mu);
  return total;
}

template <typename Derived>
typename Derived::PlainObject
smoothed_nuclear_norm_grad(const Eigen::MatrixBase<Derived> &a,
                           typename Derived::Scalar mu) {
  require(mu > 0, ErrorKind::nonpositive_mu, "smoothing mu must be positive");
  detail::require_finite(a);
  if (a.size() == 0)
    return a.eval();
  const auto svd = detail::thin_svd(a);
  const auto weights = (svd.singularValues() / mu).cwiseMin(1).eval();
  return svd.matrixU() * weights.asDiagonal() * svd.matrixV().transpose();
}

/// Euclidean projection of `v` onto {x >= 0, sum x = radius}.
///
/// Sort-and-threshold: with u sorted descending, rho is the last index with
/// u_rho > (sum_{j<=rho} u_j - radius) / rho, and theta is that average.
template <typename Derived>
VectorX<typename Derived::Scalar> project_simplex(const Eigen::MatrixBase<Derived> &v,
                                                  typename Derived::Scalar radius) {
  using Scalar = typename Derived::Scalar;
  require(radius > 0, ErrorKind::nonpositive_radius, "radius must be positive");
  const Index k = v.size();
  const VectorX<Scalar> values = v;
  std::vector<Scalar> u(values.data(), values.data() + k);
  std::sort(u.begin(), u.end(), std::greater<>());
  Scalar running = 0;
  Scalar theta = 0;
  for (Index j = 0; j < k; ++j) {
    running += u[j];
    const Scalar candidate = (running - radius) / static_cast<Scalar>(j + 1);
    if (u[j] - candidate > 0)
      theta = candidate;
  }
  return (values.array() - theta).cwiseMax(Scalar(0)).matrix();
}

/// Euclidean projection onto the l1 ball of the given radius.
template <typename Derived>
VectorX<typename Derived::Scalar> project_l1_ball(const Eigen::MatrixBase<Derived> &v,
                                                  typename Derived::Scalar radius) {
  require(radius > 0, ErrorKind::nonpositive_radius, "radius must be positive");
  if (v.template lpNorm<1>() <= radius)
    return v;
  const VectorX<typename Derived::Scalar> magnitude = v.cwiseAbs();
  return project_simplex(magnitude, radius).cwiseProduct(v.cwiseSign());
}

/// argmin_{||B||_* <= radius} ||B - A||_F: SVD, l1-ball projection of the
/// singular values, reconstruction. Feasible inputs come back unchanged.
template <typename Derived>
typename Derived::PlainObject project_nuclear_ball(const Eigen::MatrixBase<Derived> &a,
                                                   typename Derived::Scalar radius,
                                                   double svd_tolerance = 1e-10) {
  using Scalar = typename Derived::Scalar;
  require(radius > 0, ErrorKind::nonpositive_radius, "radius must be positive");
  detail::require_finite(a);
  if (a.size() == 0)
    return a.eval();
  const auto svd = detail::thin_svd(a);
  VectorX<Scalar> sigma = svd.singularValues();
  if (sigma.sum() <= radius * (1 + Scalar(1e-12)))
    return a.eval();
  const Scalar cutoff = static_cast<Scalar>(svd_tolerance) * sigma.maxCoeff();
  sigma = (sigma.array() < cutoff).select(Scalar(0), sigma);
  const VectorX<Scalar> shrunk = project_l1_ball(sigma, radius);
  return svd.matrixU() * shrunk.asDiagonal() * svd.matrixV().transpose();
}

} // namespace ccnn
