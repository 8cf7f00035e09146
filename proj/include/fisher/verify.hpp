#pragma once

#include "fisher/market.hpp"

#include <optional>
#include <string>

namespace fisher {

/// Outcome of checking Definition-1 equilibrium conditions at a price vector:
/// all goods sold exactly at capacity, every budget fully spent, and every
/// agent at an individual optimum.
struct EquilibriumReport {
  bool is_equilibrium = false;
  Vec clearing_residual;  // per good |demand_j - capacity_j|
  Vec budget_residual;    // per agent (unspent budget at the found allocation)
  Vec iop_gap;            // per agent optimality gap of the found allocation
  Vec demand;             // per good total demand at the found allocation
  std::optional<Mat> allocation;
  std::string reason;  // set when certification failed structurally
  double tol = 0.0;

  std::string to_json(int indent = 2) const;
};

/// Certifies p against the market. Individual optima may be non-unique;
/// the check searches each agent's optimal face (IOP constraints plus a
/// pinned objective value) for a single allocation that clears all goods
/// and spends all budgets, via one LP minimizing the total violation.
/// Linear utilities only.
EquilibriumReport check_equilibrium(const Market& market, const Vec& p,
                                    double tol = 1e-6);

/// Max violation of each KKT family for the social (budget-perturbed) and
/// individual forms, evaluated at (x, duals, lambda).
struct KktResidualReport {
  double stationarity_social = 0.0;
  double stationarity_iop = 0.0;
  double feasibility = 0.0;      // clearing, rows, nonnegativity
  double complementarity = 0.0;  // r(b - Ax), s x
  double sign_violation = 0.0;   // r >= 0, s <= 0, y >= 0
  Vec budget_identity;           // per agent |w + lambda - p.x - sum r b|
};

KktResidualReport kkt_residuals(const Market& market, const Mat& x,
                                const DualBundle& duals, const Vec& lambda);

struct GridRefutation {
  bool all_failed = true;
  double best_residual = 0.0;  // smallest worst-scaled-residual over the grid
  Vec best_price;
  long points_evaluated = 0;
};

/// Evaluates check_equilibrium on a uniform grid over [lo, hi]^m with
/// `steps` points per dimension. Evidence, not proof: resolution is the
/// caller's choice and is recorded in the result.
GridRefutation refute_equilibrium_grid(const Market& market, const Vec& lo,
                                       const Vec& hi, int steps,
                                       double tol = 1e-6);

}  // namespace fisher
