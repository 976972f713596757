#ifndef RDMC_OU_HPP_
#define RDMC_OU_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "rdmc/rng.hpp"
#include "rdmc/vec.hpp"

namespace rdmc {

// Parameters of the forward OU transition kernel over a lag `time`:
// x_t | x_0 ~ N(mean_scale * x_0, variance * I).
struct TransitionParams {
  double mean_scale;  // e^{-t}
  double variance;    // 1 - e^{-2t}
  double time;
};

inline TransitionParams transition_params(double t) {
  if (!std::isfinite(t) || t < 0.0)
    throw std::domain_error("transition_params: t must be finite and >= 0");
  TransitionParams p;
  p.time = t;
  p.mean_scale = std::exp(-t);
  // -expm1 keeps precision for small t; clamp kills FP cancellation at t ~ 0.
  p.variance = (t < 1e-12) ? 0.0 : -std::expm1(-2.0 * t);
  return p;
}

struct Schedule {
  double terminal_time;  // T
  double outer_step;     // eta
  int num_steps;         // N = floor(T / eta)

  Schedule(double T, double eta) : terminal_time(T), outer_step(eta) {
    if (!(T > 0.0) || !(eta > 0.0) || !std::isfinite(T) || !std::isfinite(eta))
      throw std::domain_error("Schedule: T and eta must be positive finite");
    if (eta > T) throw std::domain_error("Schedule: outer step exceeds terminal time");
    // Tiny nudge so T/eta that is an integer up to FP error rounds correctly.
    num_steps = static_cast<int>(std::floor(T / eta + 1e-9));
    if (num_steps < 1) throw std::domain_error("Schedule: no steps");
  }

  // tau_k = T - k*eta, the remaining diffusion time at outer step k.
  double remaining_time(int k) const { return terminal_time - k * outer_step; }
};

struct ParticleEnsemble {
  int dim = 0;
  std::vector<Point> particles;
  int step_index = 0;

  std::size_t size() const { return particles.size(); }
};

inline ParticleEnsemble standard_normal_ensemble(int dim, std::size_t n, Rng& rng) {
  ParticleEnsemble e;
  e.dim = dim;
  e.particles.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng sub = rng.substream(i);
    e.particles[i].resize(dim);
    for (int j = 0; j < dim; ++j) e.particles[i][j] = sub.normal();
  }
  return e;
}

// One exact draw from the forward kernel: e^{-t} x0 + sqrt(1 - e^{-2t}) z.
inline Point forward_sample(std::span<const double> x0, double t, Rng& rng) {
  const TransitionParams p = transition_params(t);
  Point out(x0.begin(), x0.end());
  if (p.variance == 0.0) return out;
  const double sd = std::sqrt(p.variance);
  for (double& xi : out) xi = p.mean_scale * xi + sd * rng.normal();
  return out;
}

// Reverse-SDE segment update with the score drift v frozen over the segment:
//   x' = e^s x + (e^s - 1) v + N(0, (e^{2s} - 1) I).
// The deterministic part solves dx = (x + v) dt exactly.
// NoiseFn(i) supplies the i-th standard-normal variate; tests inject zeros.
template <typename NoiseFn>
inline Point reverse_update_with_noise(std::span<const double> x,
                                       std::span<const double> v, double s,
                                       NoiseFn&& noise) {
  if (!(s > 0.0) || !std::isfinite(s))
    throw std::domain_error("reverse_update: substep must be positive finite");
  require_finite(x, "reverse_update x");
  require_finite(v, "reverse_update v");
  if (x.size() != v.size())
    throw std::domain_error("reverse_update: dim mismatch");
  const double es = std::exp(s);
  const double sd = std::sqrt(std::expm1(2.0 * s));
  Point out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = es * x[i] + (es - 1.0) * v[i] + sd * noise(i);
  return out;
}

inline Point reverse_update(std::span<const double> x, std::span<const double> v,
                            double s, Rng& rng) {
  return reverse_update_with_noise(x, v, s, [&rng](std::size_t) { return rng.normal(); });
}

// Exponential KL decay along the forward process: D_KL(p_t || p_inf) <= C0 e^{-t/2}.
inline double forward_kl_bound(double kl0, double t) {
  if (!(kl0 >= 0.0) || !std::isfinite(kl0))
    throw std::domain_error("forward_kl_bound: kl0 must be >= 0");
  if (!std::isfinite(t) || t < 0.0)
    throw std::domain_error("forward_kl_bound: t must be >= 0");
  return kl0 * std::exp(-t / 2.0);
}

// Smallest T for which the KL bound meets 2 eps^2: T = 2 ln(C0 / (2 eps^2)).
inline double choose_terminal_time(double kl0, double eps) {
  if (!(kl0 > 0.0) || !(eps > 0.0))
    throw std::domain_error("choose_terminal_time: inputs must be positive");
  if (kl0 <= 2.0 * eps * eps)
    throw std::domain_error(
        "choose_terminal_time: target accuracy already satisfied at T=0");
  return 2.0 * std::log(kl0 / (2.0 * eps * eps));
}

}  // namespace rdmc

#endif  // RDMC_OU_HPP_
