#pragma once

#include "fisher/errors.hpp"
#include "fisher/market.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace fisher {

/// Feasible set is nonempty but has no strictly feasible point; interior
/// methods cannot start. Callers may relax and retry.
class NoInteriorError : public SolveError {
 public:
  using SolveError::SolveError;
};

/// Value/gradient/Hessian oracle of a concave objective to MAXIMIZE.
/// Implementations may return -inf outside the objective's domain.
struct ObjectiveOracle {
  virtual ~ObjectiveOracle() = default;
  virtual double value(const Vec& x) const = 0;
  virtual Vec gradient(const Vec& x) const = 0;
  virtual Mat hessian(const Vec& x) const = 0;
};

/// Contiguous variable block for separable problems.
struct Block {
  int offset = 0;
  int size = 0;
};

/// maximize f(x)  s.t.  G x <= h,  E x = d.
///
/// When `blocks` is set and every G row touches a single block and the
/// objective Hessian is block-diagonal, Newton steps are solved by per-block
/// elimination plus an equality Schur complement, which is what makes the
/// large social programs tractable. `hessian_block` must then return the
/// diagonal block of the Hessian for one Block; when absent the dense
/// Hessian is sliced.
struct SmoothProgram {
  const ObjectiveOracle* objective = nullptr;
  Mat G;
  Vec h;
  Mat E;
  Vec d;
  int dim = 0;
  std::vector<Block> blocks;
  std::function<Mat(int block_index, const Vec& x)> hessian_block;
  std::optional<Vec> strictly_feasible_start;
};

/// Primal-dual certificate. `mu` are inequality duals (>= 0 entrywise),
/// `nu` equality duals (sign-free). Residuals are recomputed from scratch
/// on the returned point, never copied from solver internals.
struct KktSolution {
  Vec x;
  Vec mu;
  Vec nu;
  double objective = 0.0;
  double stationarity_residual = 0.0;
  double feasibility_residual = 0.0;
  double complementarity_residual = 0.0;
  double barrier_parameter = 0.0;
  bool converged = false;
};

struct BarrierOptions {
  double t0 = 1.0;
  double t_multiplier = 10.0;
  double newton_tol = 1e-10;
  int max_newton = 80;
  double ls_alpha = 0.25;
  double ls_beta = 0.5;
  int max_outer = 80;
  /// Optional early-stop hook evaluated after each centering step.
  std::function<bool(const Vec&)> stop_early;
};

/// Log-barrier path following with equality-constrained Newton centering.
/// Throws InfeasibleError / NoInteriorError / UnboundedError / MaxIterError.
KktSolution barrier_solve(const SmoothProgram& program, double tol,
                          const BarrierOptions& options = {});

/// maximize c᾿x  s.t.  G x <= h,  E x = d  via two-phase dense simplex with
/// Bland's smallest-index rule (deterministic, cycle-free). Duals recovered
/// from the optimal basis.
KktSolution lp_solve(const Vec& c, const Mat& G, const Vec& h, const Mat& E,
                     const Vec& d);

/// Worst entrywise relative error of the oracle's gradient and Hessian
/// against central finite differences with step h at interior point x.
double finite_difference_check(const ObjectiveOracle& oracle, const Vec& x,
                               double h);

/// Largest eigenvalue of a symmetric PSD matrix via power iteration with a
/// deterministic start; relative accuracy 1e-8.
double spectral_radius(const Mat& m);

}  // namespace fisher
