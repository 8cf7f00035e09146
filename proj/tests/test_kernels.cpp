#include "fisher/kernels.hpp"

#include "doctest.h"

#include <cmath>

using namespace fisher;

namespace {

struct FnOracle final : ObjectiveOracle {
  std::function<double(const Vec&)> f;
  std::function<Vec(const Vec&)> g;
  std::function<Mat(const Vec&)> h;
  double value(const Vec& x) const override { return f(x); }
  Vec gradient(const Vec& x) const override { return g(x); }
  Mat hessian(const Vec& x) const override { return h(x); }
};

FnOracle log_sum_oracle(Vec w, Mat u) {
  // sum_i w_i log(u_i . x)
  FnOracle o;
  o.f = [w, u](const Vec& x) {
    double v = 0;
    for (int i = 0; i < w.size(); ++i) {
      const double s = u.row(i).dot(x);
      if (s <= 0) return -std::numeric_limits<double>::infinity();
      v += w[i] * std::log(s);
    }
    return v;
  };
  o.g = [w, u](const Vec& x) {
    Vec g = Vec::Zero(x.size());
    for (int i = 0; i < w.size(); ++i)
      g += w[i] / u.row(i).dot(x) * u.row(i).transpose();
    return g;
  };
  o.h = [w, u](const Vec& x) {
    Mat h = Mat::Zero(x.size(), x.size());
    for (int i = 0; i < w.size(); ++i) {
      const double s = u.row(i).dot(x);
      h -= w[i] / (s * s) * (u.row(i).transpose() * u.row(i));
    }
    return h;
  };
  return o;
}

}  // namespace

TEST_CASE("barrier: single log objective against one bound") {
  FnOracle o;
  o.f = [](const Vec& x) {
    return x[0] > 0 ? std::log(x[0]) : -std::numeric_limits<double>::infinity();
  };
  o.g = [](const Vec& x) { return Vec::Constant(1, 1.0 / x[0]); };
  o.h = [](const Vec& x) { return Mat::Constant(1, 1, -1.0 / (x[0] * x[0])); };
  SmoothProgram p;
  p.dim = 1;
  p.G = Mat::Constant(1, 1, 1.0);
  p.h = Vec::Constant(1, 1.0);
  p.E = Mat(0, 1);
  p.d = Vec(0);
  p.objective = &o;
  p.strictly_feasible_start = Vec::Constant(1, 0.5);
  KktSolution sol = barrier_solve(p, 1e-8);
  CHECK(sol.converged);
  CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.x[0] < 1.0);  // strictly feasible
  CHECK(sol.mu[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(sol.stationarity_residual < 1e-7);
  CHECK(sol.complementarity_residual < 1e-7);
}

TEST_CASE("barrier: weighted logs with an equality constraint") {
  FnOracle o;
  o.f = [](const Vec& x) {
    if (x[0] <= 0 || x[1] <= 0) return -std::numeric_limits<double>::infinity();
    return 2 * std::log(x[0]) + std::log(x[1]);
  };
  o.g = [](const Vec& x) {
    Vec g(2);
    g << 2 / x[0], 1 / x[1];
    return g;
  };
  o.h = [](const Vec& x) {
    Mat h = Mat::Zero(2, 2);
    h(0, 0) = -2 / (x[0] * x[0]);
    h(1, 1) = -1 / (x[1] * x[1]);
    return h;
  };
  SmoothProgram p;
  p.dim = 2;
  p.G = -Mat::Identity(2, 2);
  p.h = Vec::Zero(2);
  p.E = Mat::Constant(1, 2, 1.0);
  p.d = Vec::Constant(1, 3.0);
  p.objective = &o;
  p.strictly_feasible_start = Vec::Constant(2, 1.5);
  KktSolution sol = barrier_solve(p, 1e-9);
  CHECK(sol.x[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(sol.x[1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.nu[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("barrier: monotone objective across the central path") {
  FnOracle o = log_sum_oracle(Vec::Constant(2, 1.0),
                              (Mat(2, 3) << 1, 2, 0.5, 2, 1, 1).finished());
  SmoothProgram p;
  p.dim = 3;
  p.G = Mat(4, 3);
  p.G << -Mat::Identity(3, 3), Mat::Constant(1, 3, 1.0);
  p.h = Vec(4);
  p.h << 0, 0, 0, 4;
  p.E = Mat(0, 3);
  p.d = Vec(0);
  p.objective = &o;
  p.strictly_feasible_start = Vec::Constant(3, 0.5);
  std::vector<double> path_values;
  BarrierOptions opt;
  opt.stop_early = [&](const Vec& x) {
    path_values.push_back(o.value(x));
    return false;
  };
  KktSolution sol = barrier_solve(p, 1e-8, opt);
  CHECK(sol.converged);
  REQUIRE(path_values.size() > 2);
  for (std::size_t k = 1; k < path_values.size(); ++k)
    CHECK(path_values[k] >= path_values[k - 1] - 1e-10);
}

TEST_CASE("lp: single variable box") {
  Mat g(2, 1);
  g << 1, -1;
  Vec h(2);
  h << 5, 0;
  KktSolution sol = lp_solve(Vec::Constant(1, 1.0), g, h, Mat(0, 1), Vec(0));
  CHECK(sol.x[0] == doctest::Approx(5.0));
  CHECK(sol.mu[0] == doctest::Approx(1.0));
  CHECK(sol.objective == doctest::Approx(5.0));
}

TEST_CASE("lp: knapsack-constrained consumer at two price levels") {
  // max x1 + 2 x2 s.t. p.x <= 1, x1 + x2 <= 1, x >= 0
  auto solve_at = [](double p1, double p2) {
    Mat g(4, 2);
    g << p1, p2, 1, 1, -1, 0, 0, -1;
    Vec h(4);
    h << 1, 1, 0, 0;
    Vec c(2);
    c << 1, 2;
    return lp_solve(c, g, h, Mat(0, 2), Vec(0));
  };
  KktSolution low = solve_at(0.5, 3.0);
  CHECK(low.x[0] == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(low.x[1] == doctest::Approx(0.2).epsilon(1e-9));
  KktSolution high = solve_at(1.0, 3.0);
  CHECK(high.x[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(high.x[1] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("lp: infeasible and unbounded classification") {
  Mat g(2, 1);
  g << 1, -1;
  Vec h(2);
  h << -1, -2;  // x <= -1 and x >= 2
  CHECK_THROWS_AS(lp_solve(Vec::Constant(1, 1.0), g, h, Mat(0, 1), Vec(0)),
                  InfeasibleError);
  Mat g2 = -Mat::Identity(1, 1);
  CHECK_THROWS_AS(
      lp_solve(Vec::Constant(1, 1.0), g2, Vec::Zero(1), Mat(0, 1), Vec(0)),
      UnboundedError);
}

TEST_CASE("lp and barrier agree on random bounded programs") {
  SeededRng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const int nv = 10, mi = 15;
    Mat g(mi + 2 * nv, nv);
    Vec h(mi + 2 * nv);
    for (int k = 0; k < mi; ++k) {
      for (int j = 0; j < nv; ++j) g(k, j) = 2.0 * rng.next_unit() - 1.0;
      h[k] = 0.5 + rng.next_unit();
    }
    g.block(mi, 0, nv, nv) = Mat::Identity(nv, nv);
    g.block(mi + nv, 0, nv, nv) = -Mat::Identity(nv, nv);
    h.segment(mi, 2 * nv).setConstant(2.0);
    Vec c(nv);
    for (int j = 0; j < nv; ++j) c[j] = 2.0 * rng.next_unit() - 1.0;

    KktSolution lp = lp_solve(c, g, h, Mat(0, nv), Vec(0));
    FnOracle o;
    o.f = [c](const Vec& x) { return c.dot(x); };
    o.g = [c](const Vec&) { return c; };
    o.h = [nv](const Vec&) { return Mat::Zero(nv, nv); };
    SmoothProgram p;
    p.dim = nv;
    p.G = g;
    p.h = h;
    p.E = Mat(0, nv);
    p.d = Vec(0);
    p.objective = &o;
    p.strictly_feasible_start = Vec::Zero(nv);
    KktSolution ip = barrier_solve(p, 1e-9);
    CHECK(std::abs(lp.objective - ip.objective) <=
          1e-6 * (1.0 + std::abs(lp.objective)));
  }
}

TEST_CASE("finite differences: linear, log-sum, and boundary cases") {
  FnOracle lin;
  Vec c(3);
  c << 1, -2, 0.5;
  lin.f = [c](const Vec& x) { return c.dot(x); };
  lin.g = [c](const Vec&) { return c; };
  lin.h = [](const Vec&) { return Mat::Zero(3, 3); };
  CHECK(finite_difference_check(lin, Vec::Constant(3, 1.0), 1e-5) <= 1e-12);

  FnOracle ls = log_sum_oracle((Vec(2) << 0.7, 1.3).finished(),
                               (Mat(2, 3) << 1, 2, 3, 0.5, 0.25, 1).finished());
  SeededRng rng(5);
  for (int t = 0; t < 5; ++t) {
    Vec x(3);
    for (int j = 0; j < 3; ++j) x[j] = 0.5 + rng.next_unit();
    CHECK(finite_difference_check(ls, x, 1e-5) <= 1e-6);
  }

  // Cobb-Douglas log objective near the boundary: finite error, no failure.
  FnOracle cd;
  cd.f = [](const Vec& x) { return 0.3 * std::log(x[0]) + 0.7 * std::log(x[1]); };
  cd.g = [](const Vec& x) {
    Vec g(2);
    g << 0.3 / x[0], 0.7 / x[1];
    return g;
  };
  cd.h = [](const Vec& x) {
    Mat h = Mat::Zero(2, 2);
    h(0, 0) = -0.3 / (x[0] * x[0]);
    h(1, 1) = -0.7 / (x[1] * x[1]);
    return h;
  };
  Vec near(2);
  near << 1e-3, 0.5;
  const double err = finite_difference_check(cd, near, 1e-5);
  CHECK(std::isfinite(err));
}

TEST_CASE("spectral radius: identity, consensus stack, diagonal") {
  CHECK(spectral_radius(Mat::Identity(3, 3)) == doctest::Approx(1.0));
  Mat b(2, 1);
  b << 1, 1;
  CHECK(spectral_radius(b.transpose() * b) == doctest::Approx(2.0));
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 4;
  d(1, 1) = 1;
  CHECK(spectral_radius(d) == doctest::Approx(4.0).epsilon(1e-7));
  CHECK_THROWS_AS(spectral_radius(Mat::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("barrier phase-1 finds interior points and rejects infeasibility") {
  // Feasible cone x1 < x2 with x > 0: no uniform interior, needs phase-1.
  FnOracle o = log_sum_oracle(Vec::Constant(1, 1.0), Mat::Constant(1, 2, 1.0));
  SmoothProgram p;
  p.dim = 2;
  p.G = Mat(4, 2);
  p.G << 1, -1, -1, 0, 0, -1, 1, 1;
  p.h = Vec(4);
  p.h << 0, 0, 0, 2;
  p.E = Mat(0, 2);
  p.d = Vec(0);
  p.objective = &o;
  KktSolution sol = barrier_solve(p, 1e-8);
  CHECK(sol.converged);
  CHECK(sol.x[0] <= sol.x[1] + 1e-9);

  SmoothProgram bad = p;
  bad.G = Mat(2, 2);
  bad.G << 1, 0, -1, 0;
  bad.h = Vec(2);
  bad.h << -1, -2;  // x1 <= -1, x1 >= 2
  CHECK_THROWS_AS(barrier_solve(bad, 1e-8), InfeasibleError);
}
