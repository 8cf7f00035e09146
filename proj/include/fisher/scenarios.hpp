#pragma once

#include "fisher/market.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fisher {

/// A canonical market fixture plus whatever is known about it in closed form.
struct Scenario {
  std::string name;
  Market market;

  /// Price vectors known to be equilibria.
  std::vector<Vec> equilibrium_prices;
  /// Price vectors known NOT to be equilibria.
  std::vector<Vec> non_equilibrium_prices;
  /// true when no equilibrium price vector exists at all.
  bool no_equilibrium = false;

  /// For single-agent bundles with a known optimum: the price the agent
  /// faces and the expected optimal bundle at that price.
  std::optional<Vec> iop_prices;
  std::optional<Vec> expected_bundle;
  /// Known equilibrium allocation (rows = agents), when the source states one.
  std::optional<Mat> expected_allocation;
};

/// Names: nonexist-homog, nonexist-knapsack, negative-price, nonconvex,
/// giffen, vp-example-1, vp-example-2. Throws std::invalid_argument on
/// anything else.
Scenario load_scenario(const std::string& name);

std::vector<std::string> scenario_names();

/// Syntactic sufficient conditions for equilibrium existence with linear
/// utilities:
///   cond_i  : every good has a potential buyer whose constraint rows all
///             ignore that good (the buyer can purchase any amount of it);
///   cond_ii : every agent likes some good that appears in none of its rows.
struct ExistenceConditions {
  bool cond_i = false;
  bool cond_ii = false;
  /// witness_good_buyer[j] = agent index witnessing cond (i) for good j, or -1.
  std::vector<int> witness_good_buyer;
  /// witness_agent_good[i] = good index witnessing cond (ii) for agent i, or -1.
  std::vector<int> witness_agent_good;
};

ExistenceConditions check_existence_conditions(const Market& market);

}  // namespace fisher
