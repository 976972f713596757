#ifndef RDMC_SAMPLERS_HPP_
#define RDMC_SAMPLERS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "rdmc/ou.hpp"
#include "rdmc/rng.hpp"
#include "rdmc/score.hpp"
#include "rdmc/targets.hpp"
#include "rdmc/vec.hpp"

namespace rdmc {

struct BudgetLedger {
  long long grad_evals = 0;
  long long f_evals = 0;
  std::optional<long long> cap;

  // Gradient complexity is the primary cost axis; estimator kinds that never
  // touch the gradient (pure IS) are capped on f evaluations instead.
  bool would_exceed(long long step_grads, long long step_fs) const {
    if (!cap) return false;
    if (step_grads > 0) return grad_evals + step_grads > *cap;
    return f_evals + step_fs > *cap;
  }
};

struct TraceEntry {
  int step_index;
  long long grad_evals;
  long long f_evals;
  ParticleEnsemble ensemble;
};

struct SamplerRun {
  std::vector<TraceEntry> trace;
  ParticleEnsemble final;
  BudgetLedger ledger;
  bool truncated = false;
};

inline int worker_count() {
  if (const char* env = std::getenv("RDMC_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

namespace detail {

// Chunked parallel map; result determinism must come from per-index RNG
// substreams, not from scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  threads = std::max(threads, 1);
  if (static_cast<std::size_t>(threads) > n) threads = static_cast<int>(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    const std::size_t lo = n * t / threads;
    const std::size_t hi = n * (t + 1) / threads;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline int snapshot_stride(int num_steps, int requested) {
  if (requested > 0) return requested;
  if (num_steps <= 200) return 1;
  return std::max(1, num_steps / 20);
}

inline void record(SamplerRun& run, int step, const ParticleEnsemble& e) {
  run.trace.push_back({step, run.ledger.grad_evals, run.ledger.f_evals, e});
}

// Per-step estimator cost, exact from the config.
inline void per_step_cost(const EstimatorConfig& cfg, std::size_t n_particles,
                          long long& grads, long long& fs) {
  const long long n = static_cast<long long>(n_particles);
  switch (cfg.kind) {
    case EstimatorKind::importance:
      grads = 0;
      fs = n * cfg.sample_count;
      break;
    case EstimatorKind::ula:
      grads = n * cfg.sample_count * cfg.inner_steps;
      fs = 0;
      break;
    case EstimatorKind::is_init_ula:
      grads = n * cfg.sample_count * cfg.inner_steps;
      fs = n * cfg.is_pool;
      break;
  }
}

}  // namespace detail

struct RdmcOptions {
  int snapshot_stride = 0;  // 0: every step for N <= 200, else ~20 snapshots
  int threads = 0;          // 0: worker_count()
  std::optional<long long> budget_cap;
};

// Reverse diffusion Monte Carlo: start from an approximation of p_T
// (N(0, I) by default), walk the reverse SDE with per-particle Monte Carlo
// score estimates v_k at remaining time tau_k = T - k eta.
inline SamplerRun rdmc(const TargetDensity& target, const Schedule& schedule,
                       const EstimatorConfig& est_cfg, std::size_t n_particles,
                       Rng rng, const RdmcOptions& opts = {},
                       const ParticleEnsemble* init = nullptr) {
  if (n_particles < 1) throw std::domain_error("rdmc: need at least one particle");
  est_cfg.validate();
  const int threads = opts.threads > 0 ? opts.threads : worker_count();
  const int stride = detail::snapshot_stride(schedule.num_steps, opts.snapshot_stride);

  SamplerRun run;
  run.ledger.cap = opts.budget_cap;
  ParticleEnsemble ens;
  if (init) {
    ens = *init;
    if (ens.dim != target.dim) throw std::domain_error("rdmc: init dim mismatch");
  } else {
    Rng init_rng = rng.substream(0xf00dull);
    ens = standard_normal_ensemble(target.dim, n_particles, init_rng);
  }
  ens.step_index = 0;
  detail::record(run, 0, ens);

  long long step_grads = 0, step_fs = 0;
  detail::per_step_cost(est_cfg, n_particles, step_grads, step_fs);

  for (int k = 0; k < schedule.num_steps; ++k) {
    if (run.ledger.would_exceed(step_grads, step_fs)) {
      run.truncated = true;
      break;
    }
    const double tau = schedule.remaining_time(k);
    Rng step_rng = rng.substream(static_cast<std::uint64_t>(k) + 1);
    std::vector<long long> grads(threads, 0), fs(threads, 0);
    detail::parallel_for(ens.size(), threads, [&](std::size_t i) {
      Rng sub = step_rng.substream(i);
      Rng est_rng = sub.substream(0);
      Rng noise_rng = sub.substream(1);
      PosteriorContext ctx(ens.particles[i], tau, target);
      ScoreEstimate est = estimate_score(ctx, est_cfg, est_rng);
      ens.particles[i] = reverse_update(ens.particles[i], est.drift,
                                        schedule.outer_step, noise_rng);
      const std::size_t slot = i * threads / ens.size();
      grads[slot] += est.grad_evals;
      fs[slot] += est.f_evals;
    });
    for (int t = 0; t < threads; ++t) {
      run.ledger.grad_evals += grads[t];
      run.ledger.f_evals += fs[t];
    }
    ens.step_index = k + 1;
    if ((k + 1) % stride == 0 || k + 1 == schedule.num_steps)
      detail::record(run, k + 1, ens);
  }
  if (run.trace.back().step_index != ens.step_index) detail::record(run, ens.step_index, ens);
  run.final = ens;
  return run;
}

// Langevin warm start for p_T when p_T is not close to N(0, I): T0 steps of
//   x <- x + eta0 * v + sqrt(2 eta0) z
// with v the Monte Carlo score estimate at fixed remaining time T.
inline ParticleEnsemble init_hat_p(const TargetDensity& target, double T,
                                   int iters, double step,
                                   const EstimatorConfig& est_cfg,
                                   std::size_t n_particles, Rng rng,
                                   const RdmcOptions& opts = {},
                                   BudgetLedger* ledger = nullptr,
                                   const ParticleEnsemble* init = nullptr) {
  if (!(T > 0.0) || !(step > 0.0))
    throw std::domain_error("init_hat_p: T and step must be positive");
  if (iters < 0) throw std::domain_error("init_hat_p: iters must be >= 0");
  const int threads = opts.threads > 0 ? opts.threads : worker_count();

  ParticleEnsemble ens;
  if (init) {
    ens = *init;
  } else {
    Rng init_rng = rng.substream(0xf00dull);
    ens = standard_normal_ensemble(target.dim, n_particles, init_rng);
  }

  long long step_grads = 0, step_fs = 0;
  detail::per_step_cost(est_cfg, ens.size(), step_grads, step_fs);
  const double noise_sd = std::sqrt(2.0 * step);

  for (int k = 0; k < iters; ++k) {
    if (ledger && ledger->would_exceed(step_grads, step_fs)) break;
    Rng step_rng = rng.substream(static_cast<std::uint64_t>(k) + 1);
    std::vector<long long> grads(threads, 0), fs(threads, 0);
    detail::parallel_for(ens.size(), threads, [&](std::size_t i) {
      Rng sub = step_rng.substream(i);
      Rng est_rng = sub.substream(0);
      Rng noise_rng = sub.substream(1);
      PosteriorContext ctx(ens.particles[i], T, target);
      ScoreEstimate est = estimate_score(ctx, est_cfg, est_rng);
      Point& p = ens.particles[i];
      for (std::size_t c = 0; c < p.size(); ++c)
        p[c] += step * est.drift[c] / 2.0 + noise_sd * noise_rng.normal();
      const std::size_t slot = i * threads / ens.size();
      grads[slot] += est.grad_evals;
      fs[slot] += est.f_evals;
    });
    if (ledger)
      for (int t = 0; t < threads; ++t) {
        ledger->grad_evals += grads[t];
        ledger->f_evals += fs[t];
      }
    ens.step_index = k + 1;
  }
  return ens;
}

struct LangevinOptions {
  int snapshot_stride = 0;
  int threads = 0;
  std::optional<long long> budget_cap;
  bool suppress_noise = false;  // test hook: drift-only dynamics
};

// Unadjusted Langevin baseline: x <- x - step grad f*(x) + sqrt(2 step) z.
inline SamplerRun lmc(const TargetDensity& target, double step, int iters,
                      const ParticleEnsemble& init, Rng rng,
                      const LangevinOptions& opts = {}) {
  if (!(step > 0.0)) throw std::domain_error("lmc: step must be positive");
  if (iters < 0) throw std::domain_error("lmc: iters must be >= 0");
  const int threads = opts.threads > 0 ? opts.threads : worker_count();
  const int stride = detail::snapshot_stride(iters, opts.snapshot_stride);

  SamplerRun run;
  run.ledger.cap = opts.budget_cap;
  ParticleEnsemble ens = init;
  ens.step_index = 0;
  detail::record(run, 0, ens);
  const double noise_sd = opts.suppress_noise ? 0.0 : std::sqrt(2.0 * step);
  const long long per_step = static_cast<long long>(ens.size());

  for (int k = 0; k < iters; ++k) {
    if (run.ledger.would_exceed(per_step, 0)) {
      run.truncated = true;
      break;
    }
    Rng step_rng = rng.substream(static_cast<std::uint64_t>(k) + 1);
    detail::parallel_for(ens.size(), threads, [&](std::size_t i) {
      Rng sub = step_rng.substream(i);
      Point& p = ens.particles[i];
      Point g(p.size());
      target.grad_neg_log_density(p, g);
      for (std::size_t c = 0; c < p.size(); ++c)
        p[c] += -step * g[c] + noise_sd * sub.normal();
    });
    run.ledger.grad_evals += per_step;
    ens.step_index = k + 1;
    if ((k + 1) % stride == 0 || k + 1 == iters) detail::record(run, k + 1, ens);
  }
  if (run.trace.back().step_index != ens.step_index) detail::record(run, ens.step_index, ens);
  run.final = ens;
  return run;
}

// Underdamped Langevin baseline, exponential-integrator discretization with
// the gradient frozen over each step (exact OU solve of the velocity block).
inline SamplerRun ulmc(const TargetDensity& target, double step, double friction,
                       int iters, const ParticleEnsemble& init, Rng rng,
                       const LangevinOptions& opts = {},
                       bool zero_initial_velocity = false) {
  if (!(step > 0.0) || !(friction > 0.0))
    throw std::domain_error("ulmc: step and friction must be positive");
  if (iters < 0) throw std::domain_error("ulmc: iters must be >= 0");
  const int threads = opts.threads > 0 ? opts.threads : worker_count();
  const int stride = detail::snapshot_stride(iters, opts.snapshot_stride);

  SamplerRun run;
  run.ledger.cap = opts.budget_cap;
  ParticleEnsemble ens = init;
  ens.step_index = 0;
  detail::record(run, 0, ens);
  const long long per_step = static_cast<long long>(ens.size());

  const double g = friction, h = step;
  const double egh = std::exp(-g * h);
  const double e2gh = std::exp(-2.0 * g * h);
  const double c1 = (1.0 - egh) / g;  // integral of e^{-g u}
  // Segment covariances of the (position, velocity) noise pair.
  const double var_v = 1.0 - e2gh;
  const double var_x =
      (2.0 / g) * (h - 2.0 * (1.0 - egh) / g + (1.0 - e2gh) / (2.0 * g));
  const double cov_xv = (1.0 - egh) * (1.0 - egh) / g;
  const double sd_v = std::sqrt(std::max(var_v, 0.0));
  const double a_x = sd_v > 0.0 ? cov_xv / sd_v : 0.0;
  const double b_x = std::sqrt(std::max(var_x - a_x * a_x, 0.0));

  std::vector<Point> vel(ens.size());
  {
    Rng vel_rng = rng.substream(0x7e1ull);
    for (std::size_t i = 0; i < ens.size(); ++i) {
      Rng sub = vel_rng.substream(i);
      vel[i].assign(ens.dim, 0.0);
      if (!zero_initial_velocity)
        for (int c = 0; c < ens.dim; ++c) vel[i][c] = sub.normal();
    }
  }

  for (int k = 0; k < iters; ++k) {
    if (run.ledger.would_exceed(per_step, 0)) {
      run.truncated = true;
      break;
    }
    Rng step_rng = rng.substream(static_cast<std::uint64_t>(k) + 1);
    detail::parallel_for(ens.size(), threads, [&](std::size_t i) {
      Rng sub = step_rng.substream(i);
      Point& x = ens.particles[i];
      Point& v = vel[i];
      Point grad(x.size());
      target.grad_neg_log_density(x, grad);
      for (std::size_t c = 0; c < x.size(); ++c) {
        const double z1 = opts.suppress_noise ? 0.0 : sub.normal();
        const double z2 = opts.suppress_noise ? 0.0 : sub.normal();
        const double xn = x[c] + c1 * v[c] - (h - c1) / g * grad[c] +
                          a_x * z1 + b_x * z2;
        const double vn = egh * v[c] - c1 * grad[c] + sd_v * z1;
        x[c] = xn;
        v[c] = vn;
      }
    });
    run.ledger.grad_evals += per_step;
    ens.step_index = k + 1;
    if ((k + 1) % stride == 0 || k + 1 == iters) detail::record(run, k + 1, ens);
  }
  if (run.trace.back().step_index != ens.step_index) detail::record(run, ens.step_index, ens);
  run.final = ens;
  return run;
}

// Post-convergence Langevin polish: continue a finished run with LMC,
// appending to its trace and ledger.
inline SamplerRun fine_tune(const SamplerRun& run, const TargetDensity& target,
                            double step, int iters, Rng rng,
                            const LangevinOptions& opts = {}) {
  if (iters == 0) return run;
  LangevinOptions o = opts;
  if (o.budget_cap || run.ledger.cap) {
    // Remaining headroom under the original cap.
    if (run.ledger.cap && !o.budget_cap)
      o.budget_cap = *run.ledger.cap - run.ledger.grad_evals;
  }
  SamplerRun cont = lmc(target, step, iters, run.final, rng, o);
  SamplerRun out = run;
  out.truncated = cont.truncated;
  const int base_step = run.final.step_index;
  for (std::size_t i = 1; i < cont.trace.size(); ++i) {
    TraceEntry e = cont.trace[i];
    e.step_index += base_step;
    e.grad_evals += run.ledger.grad_evals;
    e.f_evals += run.ledger.f_evals;
    e.ensemble.step_index = e.step_index;
    out.trace.push_back(std::move(e));
  }
  out.ledger.grad_evals = run.ledger.grad_evals + cont.ledger.grad_evals;
  out.ledger.f_evals = run.ledger.f_evals + cont.ledger.f_evals;
  out.final = cont.final;
  out.final.step_index = base_step + cont.final.step_index;
  return out;
}

// Fraction of particles nearest each mode (Euclidean).
inline std::vector<double> mode_weights(const ParticleEnsemble& ensemble,
                                        const std::vector<Point>& modes) {
  if (modes.empty()) throw std::domain_error("mode_weights: no modes");
  std::vector<double> counts(modes.size(), 0.0);
  for (const Point& p : ensemble.particles) {
    std::size_t best = 0;
    double best_d = squared_distance(p, modes[0]);
    for (std::size_t j = 1; j < modes.size(); ++j) {
      const double d = squared_distance(p, modes[j]);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    counts[best] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(ensemble.size());
  return counts;
}

}  // namespace rdmc

#endif  // RDMC_SAMPLERS_HPP_
