#ifndef RDMC_METRICS_HPP_
#define RDMC_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rdmc/rng.hpp"
#include "rdmc/vec.hpp"

namespace rdmc {

struct MmdConfig {
  double bandwidth = 0.0;  // <= 0 selects the median heuristic
  std::size_t median_subsample_cap = 2000;
  std::uint64_t subsample_seed = 0;
};

namespace detail {

inline double rbf(double sq_dist, double h) {
  return std::exp(-sq_dist / (2.0 * h * h));
}

}  // namespace detail

// Median of pairwise distances over X union Y (subsampled to the cap with a
// seeded shuffle). Lower median on even counts, so ties resolve
// deterministically.
inline double median_heuristic_bandwidth(const std::vector<Point>& X,
                                         const std::vector<Point>& Y,
                                         const MmdConfig& cfg = {}) {
  std::vector<const Point*> pool;
  pool.reserve(X.size() + Y.size());
  for (const Point& p : X) pool.push_back(&p);
  for (const Point& p : Y) pool.push_back(&p);
  if (pool.size() > cfg.median_subsample_cap) {
    Rng rng(cfg.subsample_seed);
    for (std::size_t i = pool.size() - 1; i > 0; --i) {
      const std::size_t j = rng.next_u64() % (i + 1);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(cfg.median_subsample_cap);
  }
  std::vector<double> dists;
  dists.reserve(pool.size() * (pool.size() - 1) / 2);
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = i + 1; j < pool.size(); ++j)
      dists.push_back(std::sqrt(squared_distance(*pool[i], *pool[j])));
  if (dists.empty()) return 1.0;
  const std::size_t mid = (dists.size() - 1) / 2;  // lower median
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  const double h = dists[mid];
  return h > 0.0 ? h : 1.0;
}

// Biased V-statistic MMD^2 with RBF kernel k(a,b) = exp(-||a-b||^2 / (2 h^2)).
inline double mmd_squared(const std::vector<Point>& X,
                          const std::vector<Point>& Y,
                          const MmdConfig& cfg = {}) {
  if (X.empty() || Y.empty()) throw std::domain_error("mmd_squared: empty input");
  if (X[0].size() != Y[0].size())
    throw std::domain_error("mmd_squared: dimension mismatch");
  const double h =
      cfg.bandwidth > 0.0 ? cfg.bandwidth : median_heuristic_bandwidth(X, Y, cfg);
  const std::size_t m = X.size(), n = Y.size();
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      xx += detail::rbf(squared_distance(X[i], X[j]), h);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      yy += detail::rbf(squared_distance(Y[i], Y[j]), h);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      xy += detail::rbf(squared_distance(X[i], Y[j]), h);
  return xx / (double(m) * m) + yy / (double(n) * n) - 2.0 * xy / (double(m) * n);
}

// Two-sample permutation threshold at the given level for the MMD^2
// statistic (fixed bandwidth across permutations).
inline double mmd_permutation_threshold(const std::vector<Point>& X,
                                        const std::vector<Point>& Y,
                                        int num_permutations, double level,
                                        std::uint64_t seed,
                                        const MmdConfig& cfg = {}) {
  MmdConfig fixed = cfg;
  if (fixed.bandwidth <= 0.0) fixed.bandwidth = median_heuristic_bandwidth(X, Y, cfg);
  std::vector<Point> pool;
  pool.reserve(X.size() + Y.size());
  pool.insert(pool.end(), X.begin(), X.end());
  pool.insert(pool.end(), Y.begin(), Y.end());
  std::vector<double> stats(num_permutations);
  Rng rng(seed);
  for (int p = 0; p < num_permutations; ++p) {
    Rng sub = rng.substream(p);
    std::vector<Point> perm = pool;
    for (std::size_t i = perm.size() - 1; i > 0; --i)
      std::swap(perm[i], perm[sub.next_u64() % (i + 1)]);
    std::vector<Point> A(perm.begin(), perm.begin() + X.size());
    std::vector<Point> B(perm.begin() + X.size(), perm.end());
    stats[p] = mmd_squared(A, B, fixed);
  }
  std::sort(stats.begin(), stats.end());
  const std::size_t idx = std::min<std::size_t>(
      static_cast<std::size_t>(level * num_permutations), stats.size() - 1);
  return stats[idx];
}

// Repeated MMD^2 evaluations of changing ensembles against one fixed
// reference sample: the reference self-term and bandwidth are computed once.
class MmdAgainstReference {
 public:
  MmdAgainstReference(std::vector<Point> reference, double bandwidth)
      : ref_(std::move(reference)), h_(bandwidth) {
    const std::size_t n = ref_.size();
    double yy = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        yy += detail::rbf(squared_distance(ref_[i], ref_[j]), h_);
    yy_term_ = yy / (double(n) * n);
  }

  double bandwidth() const { return h_; }

  double operator()(const std::vector<Point>& X) const {
    const std::size_t m = X.size(), n = ref_.size();
    double xx = 0.0, xy = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        xx += detail::rbf(squared_distance(X[i], X[j]), h_);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        xy += detail::rbf(squared_distance(X[i], ref_[j]), h_);
    return xx / (double(m) * m) + yy_term_ - 2.0 * xy / (double(m) * n);
  }

 private:
  std::vector<Point> ref_;
  double h_;
  double yy_term_;
};

// Per-coordinate raw p-th moment summed over dimensions (the trace view used
// for heavy-tailed moment plots).
inline double moment_sum(const std::vector<Point>& X, int order) {
  if (X.empty()) throw std::domain_error("moment_sum: empty input");
  if (order < 1 || order > 3) throw std::domain_error("moment_sum: order must be 1, 2, or 3");
  double total = 0.0;
  for (const Point& p : X)
    for (double v : p) {
      double t = v;
      for (int k = 1; k < order; ++k) t *= v;
      total += t;
    }
  return total / static_cast<double>(X.size());
}

struct GaussianDiagnostics {
  Point mean;
  Point cov_diag;  // unbiased per-coordinate variance
};

inline GaussianDiagnostics gaussian_diagnostics(const std::vector<Point>& X) {
  if (X.size() < 2) throw std::domain_error("gaussian_diagnostics: need at least 2 points");
  const std::size_t d = X[0].size(), n = X.size();
  GaussianDiagnostics out;
  out.mean.assign(d, 0.0);
  out.cov_diag.assign(d, 0.0);
  for (const Point& p : X)
    for (std::size_t c = 0; c < d; ++c) out.mean[c] += p[c];
  for (double& m : out.mean) m /= static_cast<double>(n);
  for (const Point& p : X)
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = p[c] - out.mean[c];
      out.cov_diag[c] += dv * dv;
    }
  for (double& v : out.cov_diag) v /= static_cast<double>(n - 1);
  return out;
}

}  // namespace rdmc

#endif  // RDMC_METRICS_HPP_
