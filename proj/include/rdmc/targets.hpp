#ifndef RDMC_TARGETS_HPP_
#define RDMC_TARGETS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rdmc/rng.hpp"
#include "rdmc/vec.hpp"

namespace rdmc {

// Unnormalized target p* ~ exp(-f*). The gradient writes into `out`
// (hot path in the inner ULA loop).
struct TargetDensity {
  int dim = 0;
  std::function<double(std::span<const double>)> neg_log_density;
  std::function<void(std::span<const double>, std::span<double>)> grad_neg_log_density;
  std::optional<double> smoothness;      // L, when known
  std::optional<double> second_moment;   // m2^2, when known

  Point grad(std::span<const double> x) const {
    Point g(x.size());
    grad_neg_log_density(x, g);
    return g;
  }
};

struct ReferenceSampler {
  std::function<std::vector<Point>(std::size_t, Rng&)> draw;
  bool exact = false;
};

struct TargetWithReference {
  TargetDensity target;
  ReferenceSampler reference;
};

struct GaussianMixtureSpec {
  std::vector<Point> means;
  std::vector<double> log_weights;  // normalized after exponentiation
};

inline TargetWithReference make_gmm(const GaussianMixtureSpec& spec) {
  if (spec.means.empty()) throw std::domain_error("make_gmm: empty spec");
  if (spec.means.size() != spec.log_weights.size())
    throw std::domain_error("make_gmm: means/log_weights size mismatch");
  const int dim = static_cast<int>(spec.means[0].size());
  for (const Point& m : spec.means)
    if (static_cast<int>(m.size()) != dim)
      throw std::domain_error("make_gmm: inconsistent mode dimensions");

  // Normalized component weights.
  std::vector<double> lw = spec.log_weights;
  double lmax = -std::numeric_limits<double>::infinity();
  for (double w : lw) lmax = std::max(lmax, w);
  double z = 0.0;
  for (double w : lw) z += std::exp(w - lmax);
  const double lz = lmax + std::log(z);
  for (double& w : lw) w -= lz;

  auto means = spec.means;
  const std::size_t K = means.size();

  // Per-component log-density exponents, log-sum-exp with max subtraction.
  auto component_logs = [means, lw, K](std::span<const double> x,
                                       std::vector<double>& logs) {
    logs.resize(K);
    for (std::size_t j = 0; j < K; ++j)
      logs[j] = lw[j] - 0.5 * squared_distance(x, means[j]);
  };

  TargetDensity t;
  t.dim = dim;
  t.smoothness = 1.0;  // unit covariances
  t.neg_log_density = [component_logs](std::span<const double> x) {
    std::vector<double> logs;
    component_logs(x, logs);
    double m = -std::numeric_limits<double>::infinity();
    for (double l : logs) m = std::max(m, l);
    double s = 0.0;
    for (double l : logs) s += std::exp(l - m);
    return -(m + std::log(s));
  };
  t.grad_neg_log_density = [component_logs, means, K](std::span<const double> x,
                                                      std::span<double> out) {
    std::vector<double> logs;
    component_logs(x, logs);
    double m = -std::numeric_limits<double>::infinity();
    for (double l : logs) m = std::max(m, l);
    double s = 0.0;
    for (double& l : logs) {
      l = std::exp(l - m);
      s += l;
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      const double r = logs[j] / s;
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += r * (x[i] - means[j][i]);
    }
  };

  std::vector<double> weights(K);
  for (std::size_t j = 0; j < K; ++j) weights[j] = std::exp(lw[j]);

  ReferenceSampler ref;
  ref.exact = true;
  ref.draw = [means, weights, dim, K](std::size_t count, Rng& rng) {
    std::vector<Point> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      Rng sub = rng.substream(i);
      const double u = sub.uniform();
      std::size_t j = 0;
      double acc = 0.0;
      for (; j + 1 < K; ++j) {
        acc += weights[j];
        if (u <= acc) break;
      }
      out[i].resize(dim);
      for (int c = 0; c < dim; ++c) out[i][c] = means[j][c] + sub.normal();
    }
    return out;
  };
  return {t, ref};
}

// Equal-weight unit-covariance modes on a circle of radius 2r in the first
// two coordinates; separation between adjacent modes grows linearly in r.
inline TargetWithReference make_circle_gmm(int num_modes, double radius_scale,
                                           int dim) {
  if (num_modes < 2) throw std::domain_error("make_circle_gmm: need >= 2 modes");
  if (!(radius_scale > 0.0)) throw std::domain_error("make_circle_gmm: r must be > 0");
  if (dim < 2) throw std::domain_error("make_circle_gmm: dim must be >= 2");
  GaussianMixtureSpec spec;
  const double R = 2.0 * radius_scale;
  for (int j = 0; j < num_modes; ++j) {
    const double a = 2.0 * 3.141592653589793 * j / num_modes;
    Point mu(dim, 0.0);
    mu[0] = R * std::cos(a);
    mu[1] = R * std::sin(a);
    spec.means.push_back(mu);
    spec.log_weights.push_back(0.0);
  }
  return make_gmm(spec);
}

inline TargetWithReference make_ill_conditioned_gaussian(Point mean,
                                                         Point diag_cov) {
  if (mean.size() != diag_cov.size())
    throw std::domain_error("make_ill_conditioned_gaussian: size mismatch");
  for (double v : diag_cov)
    if (!(v > 0.0)) throw std::domain_error("make_ill_conditioned_gaussian: non-positive variance");
  const int dim = static_cast<int>(mean.size());

  TargetDensity t;
  t.dim = dim;
  double L = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < diag_cov.size(); ++i) {
    L = std::max(L, 1.0 / diag_cov[i]);
    m2 += diag_cov[i] + mean[i] * mean[i];
  }
  t.smoothness = L;
  t.second_moment = m2;
  t.neg_log_density = [mean, diag_cov](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      s += d * d / (2.0 * diag_cov[i]);
    }
    return s;
  };
  t.grad_neg_log_density = [mean, diag_cov](std::span<const double> x,
                                            std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] = (x[i] - mean[i]) / diag_cov[i];
  };

  ReferenceSampler ref;
  ref.exact = true;
  ref.draw = [mean, diag_cov, dim](std::size_t count, Rng& rng) {
    std::vector<Point> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      Rng sub = rng.substream(i);
      out[i].resize(dim);
      for (int c = 0; c < dim; ++c)
        out[i][c] = mean[c] + std::sqrt(diag_cov[c]) * sub.normal();
    }
    return out;
  };
  return {t, ref};
}

// f*(x) = (||x||^2 + 1)^a with a in (0, 1/2): sub-linear tail growth,
// no exact sampler.
inline TargetDensity make_sublinear_tail(double a, int dim) {
  if (!(a > 0.0 && a < 0.5))
    throw std::domain_error("make_sublinear_tail: a must lie in (0, 0.5)");
  TargetDensity t;
  t.dim = dim;
  t.neg_log_density = [a](std::span<const double> x) {
    return std::pow(squared_norm(x) + 1.0, a);
  };
  t.grad_neg_log_density = [a](std::span<const double> x, std::span<double> out) {
    const double f = 2.0 * a * std::pow(squared_norm(x) + 1.0, a - 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f * x[i];
  };
  return t;
}

// Product of independent standard Cauchys; heavy tails, no finite mean.
inline TargetWithReference make_cauchy(int dim) {
  if (dim < 1) throw std::domain_error("make_cauchy: dim must be >= 1");
  TargetDensity t;
  t.dim = dim;
  t.neg_log_density = [](std::span<const double> x) {
    double s = 0.0;
    for (double xi : x) s += std::log1p(xi * xi);
    return s;
  };
  t.grad_neg_log_density = [](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] = 2.0 * x[i] / (1.0 + x[i] * x[i]);
  };

  ReferenceSampler ref;
  ref.exact = true;
  ref.draw = [dim](std::size_t count, Rng& rng) {
    std::vector<Point> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      Rng sub = rng.substream(i);
      out[i].resize(dim);
      for (int c = 0; c < dim; ++c)
        out[i][c] = std::tan(3.141592653589793 * (sub.uniform() - 0.5));
    }
    return out;
  };
  return {t, ref};
}

// Neal's funnel: x1 ~ N(0, 3^2), x_i | x1 ~ N(0, e^{x1}) for i >= 2.
inline TargetWithReference make_neals_funnel(int dim) {
  if (dim < 2) throw std::domain_error("make_neals_funnel: dim must be >= 2");
  TargetDensity t;
  t.dim = dim;
  t.neg_log_density = [](std::span<const double> x) {
    const double x1 = x[0];
    double s = x1 * x1 / 18.0;
    const double inv = std::exp(-x1);
    for (std::size_t i = 1; i < x.size(); ++i)
      s += 0.5 * x[i] * x[i] * inv + 0.5 * x1;
    return s;
  };
  t.grad_neg_log_density = [](std::span<const double> x, std::span<double> out) {
    const double x1 = x[0];
    const double inv = std::exp(-x1);
    double g1 = x1 / 9.0;
    for (std::size_t i = 1; i < x.size(); ++i) {
      g1 += -0.5 * x[i] * x[i] * inv + 0.5;
      out[i] = x[i] * inv;
    }
    out[0] = g1;
  };

  ReferenceSampler ref;
  ref.exact = true;
  ref.draw = [dim](std::size_t count, Rng& rng) {
    std::vector<Point> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      Rng sub = rng.substream(i);
      out[i].resize(dim);
      const double x1 = 3.0 * sub.normal();
      out[i][0] = x1;
      const double sd = std::exp(0.5 * x1);
      for (int c = 1; c < dim; ++c) out[i][c] = sd * sub.normal();
    }
    return out;
  };
  return {t, ref};
}

// Wraps a target so that tests can count f*/grad f* calls exactly.
struct InstrumentedTarget {
  TargetDensity target;
  std::shared_ptr<long> f_calls = std::make_shared<long>(0);
  std::shared_ptr<long> grad_calls = std::make_shared<long>(0);

  explicit InstrumentedTarget(const TargetDensity& base) {
    target.dim = base.dim;
    target.smoothness = base.smoothness;
    target.second_moment = base.second_moment;
    auto fc = f_calls;
    auto gc = grad_calls;
    auto f = base.neg_log_density;
    auto g = base.grad_neg_log_density;
    target.neg_log_density = [fc, f](std::span<const double> x) {
      ++*fc;
      return f(x);
    };
    target.grad_neg_log_density = [gc, g](std::span<const double> x,
                                          std::span<double> out) {
      ++*gc;
      g(x, out);
    };
  }
};

}  // namespace rdmc

#endif  // RDMC_TARGETS_HPP_
