#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fisher {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class UtilityKind { Linear, CobbDouglas, Ces };

/// A buyer's utility over bundles. All three kinds are concave and
/// homogeneous of degree one on the nonnegative orthant:
///   Linear       u(x) = sum_j c_j x_j
///   CobbDouglas  u(x) = prod_j x_j^{a_j},  sum_j a_j = 1
///   Ces          u(x) = (sum_j a_j x_j^rho)^{1/rho},  rho in (0,1]
struct UtilitySpec {
  UtilityKind kind = UtilityKind::Linear;
  Vec coeffs;         // linear coefficients / CobbDouglas exponents / CES weights
  double rho = 1.0;   // CES exponent, ignored otherwise

  static UtilitySpec linear(Vec c);
  static UtilitySpec cobb_douglas(Vec exponents);
  static UtilitySpec ces(Vec weights, double rho);

  int goods() const { return static_cast<int>(coeffs.size()); }

  /// Utility value and gradient at x >= 0. At a zero coordinate where the
  /// marginal utility diverges (CobbDouglas/CES with rho<1) the gradient
  /// entry is +infinity and the value follows the continuous extension.
  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;

  /// log u and its derivatives at a strictly interior point x > 0.
  /// These are the oracles the social programs maximize.
  double log_value(const Vec& x) const;
  Vec log_gradient(const Vec& x) const;
  Mat log_hessian(const Vec& x) const;
};

/// Extra per-agent linear constraints A x <= b with b >= 0.
struct ConstraintRow {
  Vec coeffs;
  double rhs = 0.0;
};

struct ConstraintSet {
  std::vector<ConstraintRow> rows;

  int size() const { return static_cast<int>(rows.size()); }
  bool homogeneous() const;
  /// Stacked (l x m) coefficient matrix; empty matrix when there are no rows.
  Mat matrix(int goods) const;
  Vec rhs() const;
};

struct Agent {
  double budget = 0.0;
  UtilitySpec utility;
  ConstraintSet constraints;
};

struct Market {
  std::vector<Agent> agents;
  Vec capacities;

  int agent_count() const { return static_cast<int>(agents.size()); }
  int good_count() const { return static_cast<int>(capacities.size()); }
  double total_budget() const;
  bool homogeneous() const;  // every row of every agent has rhs 0
};

/// Primal n x m consumption matrix, row i = agent i's bundle.
struct Allocation {
  Mat x;

  Vec demand() const { return x.colwise().sum().transpose(); }
};

/// Market prices; entries may be negative.
struct PriceVector {
  Vec p;
};

/// Full dual certificate for the social programs:
///   p    capacity duals (sign-free),
///   r    per-agent linear-constraint duals, r_it >= 0,
///   y    per-agent budget duals, y_i >= 0 (IOP form),
///   s    per agent-good nonnegativity duals, s_ij <= 0.
struct DualBundle {
  Vec p;
  std::vector<Vec> r;
  Vec y;
  Mat s;
};

/// Structured description of one invariant violation.
struct Violation {
  std::string message;
  int agent = -1;  // -1 when not agent-specific
  int good = -1;
};

/// Empty result iff every type invariant holds; one entry per violation.
std::vector<Violation> validate_market(const Market& market);

/// u(x) and grad u(x); infinity sentinels at divergent boundary coordinates.
std::pair<double, Vec> evaluate_utility(const UtilitySpec& spec, const Vec& x);

/// Deterministic, portable uniform generator: splitmix64 with an explicit
/// 53-bit mantissa draw, so streams are identical across platforms and
/// standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}
  /// Uniform double in [0, 1).
  double next_unit();
  std::uint64_t next_u64();

 private:
  std::uint64_t state_;
};

/// Linear-utility market with budgets and utilities i.i.d. Uniform[0,1],
/// identical capacities, and one unit-rhs knapsack row per block per agent.
/// Blocks are disjoint sets of good indices (0-based).
Market random_market(std::uint64_t seed, int agents, int goods,
                     const std::vector<std::vector<int>>& knapsack_blocks,
                     double capacity);

/// Same draw order as random_market but the per-agent coefficients are
/// normalized to sum 1 and used as CobbDouglas exponents.
Market random_cobb_douglas_market(std::uint64_t seed, int agents, int goods,
                                  double capacity);

// --- JSON serialization (schema used by files and the CLI) ---
std::string market_to_json(const Market& market, int indent = 2);
Market market_from_json(const std::string& text);

}  // namespace fisher
