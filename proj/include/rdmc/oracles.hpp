#ifndef RDMC_ORACLES_HPP_
#define RDMC_ORACLES_HPP_

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rdmc/ou.hpp"
#include "rdmc/score.hpp"
#include "rdmc/targets.hpp"
#include "rdmc/vec.hpp"

// Ground-truth computations for tests and acceptance: Gaussian-conjugacy
// posteriors and 1-d quadrature scores, independent of the estimator path.

namespace rdmc {

struct GaussianPosterior {
  Point mean;
  double variance;  // isotropic
};

struct IsotropicGaussianPrior {
  Point mean;
  double variance;
};

// Posterior of the diffusion start for an isotropic Gaussian target:
//   precision = 1/sigma0^2 + alpha^2/s^2,
//   mean = (mu/sigma0^2 + alpha x / s^2) / precision.
inline GaussianPosterior gaussian_posterior(const Point& x, double tau,
                                            const IsotropicGaussianPrior& prior) {
  if (!(tau > 0.0)) throw std::domain_error("gaussian_posterior: tau must be > 0");
  if (!(prior.variance > 0.0))
    throw std::domain_error("gaussian_posterior: prior variance must be > 0");
  const TransitionParams p = transition_params(tau);
  const double alpha = p.mean_scale, s2 = p.variance;
  const double precision = 1.0 / prior.variance + alpha * alpha / s2;
  GaussianPosterior post;
  post.variance = 1.0 / precision;
  post.mean.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    post.mean[i] =
        (prior.mean[i] / prior.variance + alpha * x[i] / s2) / precision;
  return post;
}

// Closed-form score of the OU-evolved isotropic Gaussian:
//   grad ln p_t(x) = -(x - e^{-t} mu) / (e^{-2t} sigma0^2 + 1 - e^{-2t}).
inline double gaussian_score_1d(double x, double t, double mu, double var0) {
  const TransitionParams p = transition_params(t);
  const double v = p.mean_scale * p.mean_scale * var0 + p.variance;
  return -(x - p.mean_scale * mu) / v;
}

struct QuadratureGrid {
  double lo;
  double hi;
  int n_nodes;
};

// grad ln p_{T-t}(x) for a 1-d target by trapezoid quadrature of the ratio
//   E_q[(alpha x0 - x)/s^2] = (int g(x0) q~(x0) dx0) / (int q~(x0) dx0),
// q~ the unnormalized posterior density. The guard rejects grids whose
// endpoints still carry posterior mass.
inline double quadrature_score(const TargetDensity& target, double x, double tau,
                               const QuadratureGrid& grid) {
  if (target.dim != 1) throw std::domain_error("quadrature_score: target must be 1-d");
  if (grid.n_nodes < 3) throw std::domain_error("quadrature_score: too few nodes");
  if (!(grid.hi > grid.lo)) throw std::domain_error("quadrature_score: bad grid");
  PosteriorContext ctx(Point{x}, tau, target);

  const int n = grid.n_nodes;
  const double dx = (grid.hi - grid.lo) / (n - 1);
  std::vector<double> logq(n);
  double lmax = -1e300;
  for (int i = 0; i < n; ++i) {
    const Point x0{grid.lo + i * dx};
    logq[i] = posterior_log_density(x0, ctx);
    if (logq[i] > lmax) lmax = logq[i];
  }
  if (std::exp(logq[0] - lmax) > 1e-8 || std::exp(logq[n - 1] - lmax) > 1e-8)
    throw std::domain_error("quadrature_score: grid too small");

  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x0 = grid.lo + i * dx;
    const double q = std::exp(logq[i] - lmax);
    const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    const double g = (ctx.alpha * x0 - x) / ctx.s2;
    num += w * g * q;
    den += w * q;
  }
  return num / den;
}

}  // namespace rdmc

#endif  // RDMC_ORACLES_HPP_
