#pragma once

#include "fisher/market.hpp"

#include <optional>
#include <vector>

namespace fisher {

/// KKT-certified solution of the budget-perturbed social program
///   max sum_i (w_i + lambda_i) log u_i(x_i)
///   s.t. sum_i x_ij = capacity_j, per-agent rows A x_i <= b_i, x >= 0.
/// Capacity duals p are sign-free; row duals r are >= 0.
struct BpsopSolution {
  Mat x;
  Vec p;
  std::vector<Vec> r;
  Mat s;  // nonnegativity duals, <= 0
  Vec lambda;
  double objective = 0.0;
  double stationarity_residual = 0.0;
  double feasibility_residual = 0.0;
  double complementarity_residual = 0.0;
  /// Row right-hand sides were relaxed by ~1e-6 to create a strict interior
  /// (required when the rows are tight at every feasible point).
  bool relaxed_rows = false;

  DualBundle duals(const Market& market) const;
  /// sum_t r_it b_it per agent (the fixed-point map's right side).
  Vec lambda_image(const Market& market) const;
};

BpsopSolution solve_bpsop(const Market& market, const Vec& lambda,
                          double barrier_tol = 1e-9);

struct FixedPointResult {
  Vec lambda;
  std::optional<BpsopSolution> solution;
  std::vector<double> residuals;  // ||lambda^k - sum_t r^k b||_2 per iteration
  int iterations = 0;
  bool converged = false;
};

struct FixedPointOptions {
  double tol = 1e-5;
  int max_iter = 500;
  /// 0 = the pure update lambda <- sum r b; in (0,1) mixes in the previous
  /// lambda for non-convergent instances.
  double damping = 0.0;
  double barrier_tol = 1e-9;
};

/// Iterates solve_bpsop and the update lambda_i <- sum_t r_it b_it until the
/// residual drops below tol. Non-convergence is reported in the result, not
/// thrown.
FixedPointResult fixed_point(const Market& market, const Vec& lambda0,
                             const FixedPointOptions& options = {});
FixedPointResult fixed_point(const Market& market,
                             const FixedPointOptions& options = {});

struct ExistenceReport {
  bool exists = false;
  Vec capacity_slack;  // per good, >= 0
};

/// For markets whose rows are all homogeneous (b = 0): solves the social
/// program with capacities relaxed to <=; a nonnegative equilibrium exists
/// iff every capacity binds at the optimum.
ExistenceReport existence_test_homogeneous(const Market& market,
                                           double tol = 1e-6);

struct ParetoCertificate {
  bool is_pareto = false;
  double improvement = 0.0;  // optimal sum of utility gains
  std::optional<Mat> dominating;
  /// Smooth utilities use a first-order (linearized) utility floor; a `true`
  /// verdict is then a local certificate.
  bool local_only = false;
};

/// Searches for a feasible allocation weakly improving every agent and
/// strictly improving the total; x must be feasible.
ParetoCertificate pareto_certificate(const Market& market, const Mat& x);

struct BudgetSlackReport {
  Vec p;
  Mat x;
  /// w_i - p . x_i at the unperturbed social optimum, computed directly.
  Vec slack_direct;
  /// sum_t r_it b_it from the duals; equals slack_direct by the budget
  /// identity, reported separately as a cross-check.
  Vec slack_dual;
};

/// Demonstrates on the given market how far the unperturbed social program
/// leaves budgets unspent (zero exactly when perturbations are unnecessary).
BudgetSlackReport budget_slack_report(const Market& market);

}  // namespace fisher
