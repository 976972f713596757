#include "doctest.h"

#include <cmath>
#include <vector>

#include "rdmc/rng.hpp"
#include "rdmc/targets.hpp"
#include "rdmc/vec.hpp"

using namespace rdmc;

namespace {

// Central finite differences of f* vs the analytic gradient at random points.
void check_gradient(const TargetDensity& t, Rng& rng, double scale = 2.0,
                    int points = 100) {
  for (int trial = 0; trial < points; ++trial) {
    Rng sub = rng.substream(trial);
    Point x(t.dim);
    for (double& xi : x) xi = scale * sub.normal();
    Point g = t.grad(x);
    for (int c = 0; c < t.dim; ++c) {
      const double h = 1e-5 * (1.0 + std::abs(x[c]));
      Point xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      const double fd = (t.neg_log_density(xp) - t.neg_log_density(xm)) / (2 * h);
      const double denom = std::max(1.0, std::abs(fd));
      CHECK(std::abs(g[c] - fd) / denom < 1e-5);
    }
  }
}

}  // namespace

TEST_CASE("gmm degenerates to a Gaussian with one mode") {
  GaussianMixtureSpec spec;
  spec.means = {{0.0, 0.0}};
  spec.log_weights = {0.0};
  auto [t, ref] = make_gmm(spec);
  Point x{1.0, -2.0};
  // up to an additive constant
  const double diff = t.neg_log_density(x) - t.neg_log_density(Point{0.0, 0.0});
  CHECK(diff == doctest::Approx(0.5 * squared_norm(x)).epsilon(1e-12));
  Point g = t.grad(x);
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("gmm gradient vanishes between equal symmetric modes") {
  GaussianMixtureSpec spec;
  spec.means = {{-1.5, 0.0}, {1.5, 0.0}};
  spec.log_weights = {0.0, 0.0};
  auto [t, ref] = make_gmm(spec);
  Point g = t.grad(Point{0.0, 0.0});
  CHECK(std::abs(g[0]) < 1e-12);
  CHECK(std::abs(g[1]) < 1e-12);
}

TEST_CASE("gmm log-density difference for modes 0 and (4,0)") {
  GaussianMixtureSpec spec;
  spec.means = {{0.0, 0.0}, {4.0, 0.0}};
  spec.log_weights = {0.0, 0.0};
  auto [t, ref] = make_gmm(spec);
  const double diff =
      t.neg_log_density(Point{2.0, 0.0}) - t.neg_log_density(Point{0.0, 0.0});
  // f*(2,0) - f*(0,0) = -ln(2 e^{-2}) + ln(1 + e^{-8}) ~ 1.3065
  const double expected = 2.0 - std::log(2.0) + std::log1p(std::exp(-8.0));
  CHECK(diff == doctest::Approx(expected).epsilon(1e-10));
  CHECK(diff == doctest::Approx(1.3065).epsilon(1e-3));
}

TEST_CASE("gmm translation equivariance") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Rng sub = rng.substream(trial);
    GaussianMixtureSpec spec;
    spec.means = {{sub.normal(), sub.normal()}, {sub.normal(), sub.normal()}};
    spec.log_weights = {0.3, -0.4};
    Point shift{sub.normal(), sub.normal()};
    GaussianMixtureSpec shifted = spec;
    for (Point& m : shifted.means)
      for (int c = 0; c < 2; ++c) m[c] += shift[c];
    auto [t1, r1] = make_gmm(spec);
    auto [t2, r2] = make_gmm(shifted);
    Point x{sub.normal(), sub.normal()};
    Point xs = x;
    for (int c = 0; c < 2; ++c) xs[c] += shift[c];
    CHECK(t1.neg_log_density(x) == doctest::Approx(t2.neg_log_density(xs)).epsilon(1e-12));
  }
}

TEST_CASE("gmm gradient finite differences") {
  GaussianMixtureSpec spec;
  spec.means = {{0.0, 0.0}, {4.0, 0.0}, {-1.0, 3.0}};
  spec.log_weights = {0.0, -0.5, 0.25};
  auto [t, ref] = make_gmm(spec);
  Rng rng(11);
  check_gradient(t, rng);
}

TEST_CASE("gmm reference sampler moments") {
  GaussianMixtureSpec spec;
  spec.means = {{-2.0, 0.0}, {2.0, 0.0}};
  spec.log_weights = {0.0, 0.0};
  auto [t, ref] = make_gmm(spec);
  REQUIRE(ref.exact);
  Rng rng(21);
  auto draws = ref.draw(100000, rng);
  double mean0 = 0.0, m2_0 = 0.0;
  for (const Point& p : draws) {
    mean0 += p[0];
    m2_0 += p[0] * p[0];
  }
  mean0 /= draws.size();
  m2_0 /= draws.size();
  CHECK(std::abs(mean0) < 0.05);
  // E[x0^2] = 1 + 4 for this mixture
  CHECK(m2_0 == doctest::Approx(5.0).epsilon(0.02));
}

TEST_CASE("circle gmm layout") {
  auto [t2, r2] = make_circle_gmm(2, 1.0, 2);
  // two-point circle: modes at (+-2r, 0)
  Point g = t2.grad(Point{0.0, 0.0});
  CHECK(std::abs(g[0]) < 1e-12);

  auto [t6, r6] = make_circle_gmm(6, 1.0, 2);
  // regular hexagon with circumradius 2: adjacent distance = 2
  Rng rng(5);
  auto draws = r6.draw(100000, rng);
  double mx = 0.0, my = 0.0;
  for (const Point& p : draws) {
    mx += p[0];
    my += p[1];
  }
  mx /= draws.size();
  my /= draws.size();
  CHECK(std::abs(mx) < 0.05 * 4.0);
  CHECK(std::abs(my) < 0.05 * 4.0);

  CHECK_THROWS_AS(make_circle_gmm(1, 1.0, 2), std::domain_error);
}

TEST_CASE("circle gmm adjacent mode distances are equal") {
  const int K = 6;
  const double r = 1.0;
  std::vector<Point> means;
  for (int j = 0; j < K; ++j) {
    const double a = 2.0 * 3.141592653589793 * j / K;
    means.push_back({2.0 * r * std::cos(a), 2.0 * r * std::sin(a)});
  }
  const double d0 = std::sqrt(squared_distance(means[0], means[1]));
  for (int j = 1; j < K; ++j) {
    const double d = std::sqrt(squared_distance(means[j], means[(j + 1) % K]));
    CHECK(d == doctest::Approx(d0).epsilon(1e-12));
  }
  CHECK(d0 == doctest::Approx(2.0).epsilon(1e-12));  // = 2 sin(pi/6) * 2r
}

TEST_CASE("ill-conditioned Gaussian") {
  auto [t, ref] = make_ill_conditioned_gaussian({20.0, 20.0}, {400.0, 1.0});
  Point g0 = t.grad(Point{20.0, 20.0});
  CHECK(g0[0] == 0.0);
  CHECK(g0[1] == 0.0);
  Point g = t.grad(Point{40.0, 21.0});
  CHECK(g[0] == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(make_ill_conditioned_gaussian({0.0}, {-1.0}), std::domain_error);

  auto [std_t, std_ref] = make_ill_conditioned_gaussian({0.0, 0.0}, {1.0, 1.0});
  Rng rng(8);
  auto draws = std_ref.draw(100000, rng);
  double m = 0.0, v = 0.0;
  for (const Point& p : draws) {
    m += p[0];
    v += p[0] * p[0];
  }
  m /= draws.size();
  v = v / draws.size() - m * m;
  CHECK(std::abs(m) < 0.02);
  CHECK(std::abs(v - 1.0) < 0.02);
}

TEST_CASE("sublinear tail potential") {
  CHECK_THROWS_AS(make_sublinear_tail(0.7, 2), std::domain_error);
  auto t = make_sublinear_tail(0.25, 2);
  Point g0 = t.grad(Point{0.0, 0.0});
  CHECK(g0[0] == 0.0);
  CHECK(t.neg_log_density(Point{1.0, 0.0}) ==
        doctest::Approx(std::pow(2.0, 0.25)).epsilon(1e-12));
  Point g = t.grad(Point{1.0, 0.0});
  CHECK(g[0] == doctest::Approx(0.5 * std::pow(2.0, -0.75)).epsilon(1e-12));
  CHECK(g[1] == 0.0);
  Rng rng(13);
  check_gradient(t, rng, 5.0);
}

TEST_CASE("sublinear 1-d Hessian bounded by 1/2 for a = 0.25") {
  auto t = make_sublinear_tail(0.25, 1);
  for (double x = -100.0; x <= 100.0; x += 0.25) {
    const double h = 1e-4;
    const double hess = (t.neg_log_density(Point{x + h}) -
                         2.0 * t.neg_log_density(Point{x}) +
                         t.neg_log_density(Point{x - h})) /
                        (h * h);
    CHECK(std::abs(hess) <= 0.5 + 1e-4);
  }
}

TEST_CASE("cauchy target") {
  auto [t, ref] = make_cauchy(1);
  CHECK(t.grad(Point{0.0})[0] == 0.0);
  CHECK(t.neg_log_density(Point{1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(t.grad(Point{1.0})[0] == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(17);
  auto draws = ref.draw(100000, rng);
  std::vector<double> xs;
  xs.reserve(draws.size());
  for (const Point& p : draws) xs.push_back(p[0]);
  std::nth_element(xs.begin(), xs.begin() + xs.size() / 2, xs.end());
  CHECK(std::abs(xs[xs.size() / 2]) < 0.05);
}

TEST_CASE("neals funnel") {
  CHECK_THROWS_AS(make_neals_funnel(1), std::domain_error);
  auto [t, ref] = make_neals_funnel(2);
  Point g = t.grad(Point{0.0, 0.0});
  CHECK(g[1] == 0.0);
  const double diff =
      t.neg_log_density(Point{0.0, 1.0}) - t.neg_log_density(Point{0.0, 0.0});
  CHECK(diff == doctest::Approx(0.5).epsilon(1e-12));
  Rng rng(19);
  check_gradient(t, rng, 1.5);

  auto draws = ref.draw(100000, rng);
  double m = 0.0, v = 0.0;
  for (const Point& p : draws) m += p[0];
  m /= draws.size();
  for (const Point& p : draws) v += (p[0] - m) * (p[0] - m);
  v /= draws.size();
  CHECK(std::sqrt(v) == doctest::Approx(3.0).epsilon(0.02));
}

TEST_CASE("instrumented target counts calls") {
  auto [t, ref] = make_cauchy(2);
  InstrumentedTarget inst(t);
  Point x{1.0, 2.0};
  inst.target.neg_log_density(x);
  inst.target.neg_log_density(x);
  inst.target.grad(x);
  CHECK(*inst.f_calls == 2);
  CHECK(*inst.grad_calls == 1);
}
