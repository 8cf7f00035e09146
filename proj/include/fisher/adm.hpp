#pragma once

#include "fisher/market.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fisher {

enum class AdmVariant { Ama, Admm, AdmmNh };

std::string to_string(AdmVariant v);

struct AdmConfig {
  AdmVariant variant = AdmVariant::Admm;
  double beta = 1.0;
  double tol = 1e-4;
  int max_iter = 5000;
  std::optional<Vec> p0;  // default: total budget / total capacity, per good
  std::optional<Mat> y0;  // default: capacities/n in every row
};

/// Iteration state. p_tilde rows are the per-agent price vectors kept by the
/// AMA variant; with equal initialization they track the market price
/// exactly, which run_adm asserts rather than assumes.
struct AdmState {
  Mat x;
  Mat y;
  Vec p;
  Mat p_tilde;         // AMA only, else 0x0
  std::vector<Vec> r;  // AdmmNh only, r_it >= 0
  int iteration = 0;
};

struct TraceRow {
  int iter = 0;
  Vec p;
  double res_primal = 0.0;     // ||x - y||_2
  double res_clearing = 0.0;   // ||sum_i y_i - capacities||_2
  double res_dual = 0.0;       // beta ||y^k - y^{k-1}||_2
  double res_violation = 0.0;  // ||max(Ax - b, 0)||_2 over all agents
  Vec lambda;                  // sum_t r_it b_it (AdmmNh), else empty
};

struct ConvergenceTrace {
  std::vector<TraceRow> rows;
  bool converged = false;
  bool diverged = false;
  std::string divergence_reason;
  bool aborted = false;  // external stop (e.g. worker failure), partial rows
  std::string abort_reason;
  bool lambda_columns = false;
  /// Thm-type step bound assumptions are monitored, not enforced; a
  /// nonpositive price downgrades the run's convergence claim.
  std::vector<std::string> warnings;
};

struct AdmResult {
  ConvergenceTrace trace;
  AdmState state;
};

/// Fills state.x for the current round from state.p / state.p_tilde /
/// state.y / state.r. Returns false to abort the run (reason in
/// *abort_reason); may throw UnboundedError, which marks divergence.
/// The distributed engine supplies a message-passing implementation; the
/// in-process one calls x_update directly. Both share the same iteration
/// loop, so their traces agree bit for bit.
using XProvider = std::function<bool(const Market&, const AdmConfig&,
                                     AdmState&, std::string* abort_reason)>;

AdmResult run_adm_with_provider(const Market& market, const AdmConfig& config,
                                const XProvider& provider);

/// One agent's x-step at effective prices p. Closed forms for the classical
/// linear/Cobb-Douglas cases, barrier otherwise. Throws UnboundedError when
/// the AMA objective is unbounded (nonpositive effective price on a
/// purchasable good).
Vec x_update(AdmVariant variant, const Agent& agent, const Vec& p,
             const Vec& y_i, const Vec& r_i, double beta);

/// Closed-form baseline update: y_ij = x_ij - c_j with
/// c_j = (sum_i x_ij - capacity_j)/(n+1); independent of beta.
Mat y_update(const Mat& x, const Vec& capacities);

/// AMA form with live per-agent prices; reduces to y_update when
/// p_tilde rows equal p.
Mat y_update_with_prices(const Mat& x, const Mat& p_tilde, const Vec& p,
                         double beta, const Vec& capacities);

/// Price ascent on excess demand plus the hinge update of the row duals.
/// Mutates state.p, state.p_tilde (AMA), state.r (AdmmNh).
void dual_updates(AdmState& state, const Market& market, double beta);

AdmResult run_adm(const Market& market, const AdmConfig& config);

struct AmaBetaBound {
  double bound = 0.0;
  bool valid = false;  // false: no valid AMA step size (sigma = 0)
  double sigma = 0.0;  // estimated strong concavity modulus
  double rho = 0.0;    // spectral radius of B^T B
};

/// Step-size bound 2 sigma_f / rho(B^T B): sigma_f estimated as the smallest
/// eigenvalue of -hess(sum_i w_i log u_i) over sampled interior points of the
/// box [1e-3 capacity_j, capacity_j]; B stacks the capacity row block and the
/// consensus identity of the two-block form.
AmaBetaBound ama_beta_bound(const Market& market, int sample_count,
                            std::uint64_t seed = 1234);

}  // namespace fisher
