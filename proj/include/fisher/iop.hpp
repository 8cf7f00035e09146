#pragma once

#include "fisher/kernels.hpp"
#include "fisher/market.hpp"

#include <optional>
#include <vector>

namespace fisher {

/// One segment of a knapsack's lower utility-price frontier. Buying the
/// segment moves consumption from `good_low` to `good_high` (good_low == -1
/// means the origin). `quantity` is the knapsack rhs (1 after the usual
/// normalization); unlimited pseudo-products have no quantity cap.
struct VirtualProduct {
  double u_low = 0.0, p_low = 0.0;
  double u_high = 0.0, p_high = 0.0;
  double slope = 0.0;  // theta = (p_high - p_low) / (u_high - u_low)
  int knapsack = -1;
  int good_low = -1;
  int good_high = -1;
  double quantity = 1.0;
  bool unlimited = false;

  double bang_per_buck() const { return 1.0 / slope; }
};

/// Ordered lower-frontier segments of one knapsack: slopes strictly
/// increasing, chaining from the origin to the max-utility good.
struct Frontier {
  std::vector<VirtualProduct> segments;
};

struct IopDuals {
  double budget = 0.0;       // y_i >= 0
  Vec rows;                  // r~_it >= 0
  Vec nonnegativity;         // s~_ij <= 0
};

struct IopSolution {
  Vec bundle;
  double objective = 0.0;
  double spent = 0.0;
  std::optional<IopDuals> duals;  // produced by the LP path only
};

/// Exact individual optimum at prices p: LP for linear utilities, barrier
/// for CobbDouglas/CES. Throws UnboundedError when demand is infinite
/// (possible under nonpositive prices on unconstrained goods).
IopSolution solve_iop(const Agent& agent, const Vec& p);

/// Lower-left convex hull of {(u_ij, p_j) : j in knapsack} plus the origin.
/// Requires p_j >= 0 for the goods involved; throws on an empty knapsack.
Frontier knapsack_frontier(const std::vector<int>& goods_in_knapsack,
                           const Vec& u, const Vec& p);

/// Greedy optimum for agents whose rows are disjoint unit-coefficient
/// knapsacks (rhs >= 0; rhs 0 removes the knapsack's goods). Unconstrained
/// goods join the merged product list with slope p_j/u_ij and no quantity
/// cap. Ties in slope resolve by (knapsack id, good index); unconstrained
/// pseudo-products sort after real knapsacks on equal slope.
IopSolution solve_iop_greedy(const Agent& agent, const Vec& p);

struct DemandSweepPoint {
  double price = 0.0;
  double demand = 0.0;
};

struct DemandSweep {
  int good = -1;
  std::vector<DemandSweepPoint> points;
  /// giffen_step[k]: demand strictly increased from grid point k to k+1
  /// while the price increased.
  std::vector<bool> giffen_step;
  bool giffen = false;
};

/// Demand for good j as its price moves over `grid` with other prices fixed.
DemandSweep demand_sweep(const Agent& agent, const Vec& base_prices, int good,
                         const std::vector<double>& grid);

/// Demand at p' with compensated income w' = p' . x_at_p, where p' raises
/// exactly one price. Verifies the compensated demand for that good does
/// not rise (throws SolveError if the solver contradicts it).
IopSolution compensated_demand(const Agent& agent, const Vec& p,
                               const Vec& p_prime, const Vec& x_at_p);

}  // namespace fisher
