#ifndef RDMC_SCORE_HPP_
#define RDMC_SCORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rdmc/ou.hpp"
#include "rdmc/rng.hpp"
#include "rdmc/targets.hpp"
#include "rdmc/vec.hpp"

namespace rdmc {

// Everything needed to evaluate the posterior q_tau(. | x) of the diffusion
// start point given the current particle x at remaining time tau.
struct PosteriorContext {
  Point query;            // x
  double remaining_time;  // tau = T - k*eta
  const TargetDensity* target;
  double alpha;  // e^{-tau}
  double s2;     // 1 - e^{-2tau}

  PosteriorContext(Point x, double tau, const TargetDensity& t)
      : query(std::move(x)), remaining_time(tau), target(&t) {
    if (!(tau > 0.0) || !std::isfinite(tau))
      throw std::domain_error("PosteriorContext: remaining time must be > 0");
    const TransitionParams p = transition_params(tau);
    alpha = p.mean_scale;
    s2 = p.variance;
  }
};

enum class EstimatorKind { importance, ula, is_init_ula };

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::ula;
  int sample_count = 100;        // n_k: posterior samples per score estimate
  int inner_steps = 50;          // K
  double inner_step_size = 0.0;  // <= 0 selects the curvature-based default
  int is_pool = 100;             // IS draws when kind = is_init_ula
  bool init_at_is_mean = false;  // start every ULA particle at the IS mean

  void validate() const {
    if (sample_count < 1) throw std::domain_error("EstimatorConfig: sample_count < 1");
    if (kind != EstimatorKind::importance && inner_steps < 1)
      throw std::domain_error("EstimatorConfig: inner_steps < 1 for ULA kinds");
    if (kind == EstimatorKind::is_init_ula && is_pool < 1)
      throw std::domain_error("EstimatorConfig: is_pool < 1");
  }
};

struct ScoreEstimate {
  Point drift;  // v_k ~ 2 grad ln p_{T - k eta}(x)
  long f_evals = 0;
  long grad_evals = 0;
  std::optional<double> ess;
  bool tau_underflow = false;
};

// Inner step default: the posterior's Gaussian factor has curvature
// alpha^2 / s2 < 1 / s2, plus L from the target when known. The divisor
// trades discretization bias against mixing within small inner budgets.
inline double default_inner_step(const PosteriorContext& ctx) {
  if (ctx.target->smoothness)
    return ctx.s2 / (2.0 * (1.0 + *ctx.target->smoothness));
  return ctx.s2 / 4.0;
}

// Unnormalized log q_tau(x0 | x) = -f*(x0) - ||x - alpha x0||^2 / (2 s2).
inline double posterior_log_density(std::span<const double> x0,
                                    const PosteriorContext& ctx) {
  double quad = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double d = ctx.query[i] - ctx.alpha * x0[i];
    quad += d * d;
  }
  return -ctx.target->neg_log_density(x0) - quad / (2.0 * ctx.s2);
}

inline void posterior_grad(std::span<const double> x0,
                           const PosteriorContext& ctx, std::span<double> out) {
  ctx.target->grad_neg_log_density(x0, out);
  for (std::size_t i = 0; i < x0.size(); ++i)
    out[i] = -out[i] - ctx.alpha * (ctx.alpha * x0[i] - ctx.query[i]) / ctx.s2;
}

inline Point posterior_grad(std::span<const double> x0,
                            const PosteriorContext& ctx) {
  Point g(x0.size());
  posterior_grad(x0, ctx, g);
  return g;
}

namespace detail {

// Drift contribution of one posterior sample: 2 (alpha x0 - x) / s2.
inline void accumulate_drift_term(const PosteriorContext& ctx,
                                  std::span<const double> x0, double w,
                                  std::span<double> acc) {
  const double c = 2.0 * w / ctx.s2;
  for (std::size_t i = 0; i < acc.size(); ++i)
    acc[i] += c * (ctx.alpha * x0[i] - ctx.query[i]);
}

inline Point is_proposal_draw(const PosteriorContext& ctx, Rng& rng) {
  // rho_tau(. | x): Gaussian with mean x / alpha and variance s2 / alpha^2.
  const double sd = std::sqrt(ctx.s2) / ctx.alpha;
  Point x0(ctx.query.size());
  for (std::size_t i = 0; i < x0.size(); ++i)
    x0[i] = ctx.query[i] / ctx.alpha + sd * rng.normal();
  return x0;
}

// Snap a log-weight difference to a 2^-32 grid. A constant added to f*
// rounds into each log weight before the max-subtraction can cancel it,
// perturbing the differences by ~1 ulp of the constant; the snap absorbs
// that so self-normalized weights stay bit-identical. The 2^-32 relative
// error on a weight is far below Monte Carlo noise.
inline double quantize_log_weight(double d) {
  return std::nearbyint(d * 4294967296.0) / 4294967296.0;
}

inline bool tau_underflow_guard(const PosteriorContext& ctx, ScoreEstimate& e) {
  if (ctx.s2 >= 1e-10) return false;
  e.drift.assign(ctx.query.size(), 0.0);
  e.tau_underflow = true;
  return true;
}

}  // namespace detail

// Self-normalized importance sampling against the Gaussian factor of the
// posterior. Weights w_i ~ exp(-f*(x0_i)) with max-log-weight subtraction;
// the max weight is exactly 1, so the normalizer cannot underflow.
inline ScoreEstimate is_score(const PosteriorContext& ctx, int n, Rng& rng) {
  if (n < 1) throw std::domain_error("is_score: n must be >= 1");
  ScoreEstimate est;
  if (detail::tau_underflow_guard(ctx, est)) return est;

  std::vector<Point> draws(n);
  std::vector<double> logw(n);
  double lmax = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    draws[i] = detail::is_proposal_draw(ctx, rng);
    logw[i] = -ctx.target->neg_log_density(draws[i]);
    lmax = std::max(lmax, logw[i]);
  }
  est.drift.assign(ctx.query.size(), 0.0);
  double wsum = 0.0, w2sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = std::exp(detail::quantize_log_weight(logw[i] - lmax));
    wsum += w;
    w2sum += w * w;
    detail::accumulate_drift_term(ctx, draws[i], w, est.drift);
  }
  for (double& d : est.drift) d /= wsum;
  est.ess = wsum * wsum / w2sum;
  est.f_evals = n;
  return est;
}

struct UlaResult {
  std::vector<Point> particles;
  long grad_evals = 0;
};

// Unadjusted Langevin chain on q_tau(. | x): K steps per particle with
// drift posterior_grad and noise sqrt(2 step) z.
inline UlaResult ula_inner(const PosteriorContext& ctx,
                           std::vector<Point> init, int K, double step,
                           Rng& rng) {
  if (K < 0) throw std::domain_error("ula_inner: K must be >= 0");
  if (step < 0.0) throw std::domain_error("ula_inner: step must be >= 0");
  if (init.empty()) throw std::domain_error("ula_inner: empty init");
  UlaResult res;
  res.particles = std::move(init);
  if (K == 0) return res;
  const double noise_sd = std::sqrt(2.0 * step);
  const std::size_t dim = res.particles[0].size();
  Point g(dim);
  for (std::size_t i = 0; i < res.particles.size(); ++i) {
    Rng sub = rng.substream(i);
    Point& p = res.particles[i];
    for (int k = 0; k < K; ++k) {
      posterior_grad(p, ctx, g);
      for (std::size_t c = 0; c < dim; ++c)
        p[c] += step * g[c] + noise_sd * sub.normal();
    }
  }
  res.grad_evals = static_cast<long>(K) * static_cast<long>(res.particles.size());
  return res;
}

// Empirical-mean drift over posterior samples:
//   v = (1/m) sum 2 (alpha x0_i - x) / s2.
inline ScoreEstimate score_from_samples(const PosteriorContext& ctx,
                                        const std::vector<Point>& samples) {
  if (samples.empty()) throw std::domain_error("score_from_samples: empty samples");
  ScoreEstimate est;
  if (detail::tau_underflow_guard(ctx, est)) return est;
  est.drift.assign(ctx.query.size(), 0.0);
  for (const Point& s : samples)
    detail::accumulate_drift_term(ctx, s, 1.0, est.drift);
  for (double& d : est.drift) d /= static_cast<double>(samples.size());
  return est;
}

namespace detail {

inline std::vector<Point> gaussian_prior_init(const PosteriorContext& ctx,
                                              int m, Rng& rng) {
  std::vector<Point> init(m);
  Rng sub = rng.substream(0x5eedull);
  for (int i = 0; i < m; ++i) init[i] = is_proposal_draw(ctx, sub);
  return init;
}

inline std::vector<Point> systematic_resample(const std::vector<Point>& pool,
                                              const std::vector<double>& weights,
                                              int m, Rng& rng) {
  std::vector<double> cum(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cum[i] = acc;
  }
  std::vector<Point> out;
  out.reserve(m);
  const double u0 = rng.uniform();
  std::size_t j = 0;
  for (int i = 0; i < m; ++i) {
    const double u = (i + u0) / m * acc;
    while (j + 1 < cum.size() && cum[j] < u) ++j;
    out.push_back(pool[j]);
  }
  return out;
}

}  // namespace detail

// Dispatcher over the three estimator kinds of the score oracle.
inline ScoreEstimate estimate_score(const PosteriorContext& ctx,
                                    const EstimatorConfig& cfg, Rng& rng) {
  cfg.validate();
  ScoreEstimate guard;
  if (detail::tau_underflow_guard(ctx, guard)) return guard;
  const double step =
      cfg.inner_step_size > 0.0 ? cfg.inner_step_size : default_inner_step(ctx);

  switch (cfg.kind) {
    case EstimatorKind::importance:
      return is_score(ctx, cfg.sample_count, rng);

    case EstimatorKind::ula: {
      auto init = detail::gaussian_prior_init(ctx, cfg.sample_count, rng);
      Rng chain_rng = rng.substream(0xc4a1ull);
      UlaResult r = ula_inner(ctx, std::move(init), cfg.inner_steps, step, chain_rng);
      ScoreEstimate est = score_from_samples(ctx, r.particles);
      est.grad_evals = r.grad_evals;
      return est;
    }

    case EstimatorKind::is_init_ula: {
      // Rough IS pass over the pool, then refine the resampled cloud by ULA.
      Rng pool_rng = rng.substream(0x15ull);
      std::vector<Point> pool(cfg.is_pool);
      std::vector<double> logw(cfg.is_pool);
      double lmax = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < cfg.is_pool; ++i) {
        pool[i] = detail::is_proposal_draw(ctx, pool_rng);
        logw[i] = -ctx.target->neg_log_density(pool[i]);
        lmax = std::max(lmax, logw[i]);
      }
      std::vector<double> w(cfg.is_pool);
      double wsum = 0.0;
      for (int i = 0; i < cfg.is_pool; ++i) {
        w[i] = std::exp(detail::quantize_log_weight(logw[i] - lmax));
        wsum += w[i];
      }
      std::vector<Point> init;
      if (cfg.init_at_is_mean) {
        Point mean(ctx.query.size(), 0.0);
        for (int i = 0; i < cfg.is_pool; ++i)
          for (std::size_t c = 0; c < mean.size(); ++c)
            mean[c] += w[i] / wsum * pool[i][c];
        init.assign(cfg.sample_count, mean);
      } else {
        Rng res_rng = rng.substream(0x2e5ull);
        init = detail::systematic_resample(pool, w, cfg.sample_count, res_rng);
      }
      Rng chain_rng = rng.substream(0xc4a1ull);
      UlaResult r = ula_inner(ctx, std::move(init), cfg.inner_steps, step, chain_rng);
      ScoreEstimate est = score_from_samples(ctx, r.particles);
      est.f_evals = cfg.is_pool;
      est.grad_evals = r.grad_evals;
      return est;
    }
  }
  throw std::logic_error("estimate_score: unknown kind");
}

struct TheoreticalBudget {
  long long sample_count;  // n_k
  double kl_tol;           // E_k
};

// n_k = 64 T d mu^{-1} eta^{-3} eps^{-2} delta^{-1},
// E_k = 2^{-13} T^{-4} d^{-2} mu^2 eta^8 eps^4 delta^4.
inline TheoreticalBudget theoretical_budget(double T, int d, double lsi,
                                            double eta, double eps,
                                            double delta) {
  if (!(T > 0.0 && d > 0 && lsi > 0.0 && eta > 0.0 && eps > 0.0 && delta > 0.0))
    throw std::domain_error("theoretical_budget: all inputs must be positive");
  const double n = 64.0 * T * d / (lsi * eta * eta * eta * eps * eps * delta);
  const double e = std::pow(2.0, -13.0) * std::pow(T, -4.0) *
                   std::pow(static_cast<double>(d), -2.0) * lsi * lsi *
                   std::pow(eta, 8.0) * std::pow(eps, 4.0) *
                   std::pow(delta, 4.0);
  return {static_cast<long long>(std::ceil(n)), e};
}

enum class LsiRegime { smooth, tail };

// Closed-form LSI constant for the posterior q_t:
//   smooth: e^{-2t} / (2 (1 - e^{-2t})), valid for t <= 0.5 ln(1 + 1/(2L));
//   tail:   e^{-2t} / (6 (1 - e^{-2t})) * exp(-48 L R^2).
inline double lsi_constant_estimate(double t, LsiRegime regime, double L,
                                    double R = 0.0) {
  if (!(t > 0.0)) throw std::domain_error("lsi_constant_estimate: t must be > 0");
  if (t < 1e-12) return std::numeric_limits<double>::infinity();
  const double e2t = std::exp(-2.0 * t);
  const double v = -std::expm1(-2.0 * t);
  if (regime == LsiRegime::smooth) {
    const double tmax = 0.5 * std::log1p(1.0 / (2.0 * L));
    if (t > tmax)
      throw std::domain_error("lsi_constant_estimate: t out of smooth-regime range");
    return e2t / (2.0 * v);
  }
  return e2t / (6.0 * v) * std::exp(-16.0 * 3.0 * L * R * R);
}

}  // namespace rdmc

#endif  // RDMC_SCORE_HPP_
