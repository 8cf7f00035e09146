#include "fisher/scenarios.hpp"

#include <stdexcept>

namespace fisher {

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

ConstraintRow knapsack_row(int goods, std::initializer_list<int> members, double rhs = 1.0) {
  ConstraintRow row;
  row.coeffs = Vec::Zero(goods);
  for (int j : members) row.coeffs[j] = 1.0;
  row.rhs = rhs;
  return row;
}

Agent linear_agent(double budget, Vec u) {
  Agent a;
  a.budget = budget;
  a.utility = UtilitySpec::linear(std::move(u));
  return a;
}

Scenario make_nonexist_homog() {
  Scenario s;
  s.name = "nonexist-homog";
  s.market.capacities = vec({1, 1});
  Agent a1 = linear_agent(1, vec({1, 1}));
  a1.constraints.rows.push_back({vec({1, -1}), 0.0});
  Agent a2 = linear_agent(1, vec({1, 1}));
  a2.constraints.rows.push_back({vec({2, -1}), 0.0});
  s.market.agents = {a1, a2};
  s.no_equilibrium = true;
  return s;
}

Scenario make_nonexist_knapsack() {
  Scenario s;
  s.name = "nonexist-knapsack";
  s.market.capacities = vec({1.5, 0.5});
  Agent a1 = linear_agent(15, vec({200, 0.1}));
  a1.constraints.rows.push_back(knapsack_row(2, {0, 1}));
  Agent a2 = linear_agent(5, vec({100, 1.1}));
  a2.constraints.rows.push_back(knapsack_row(2, {0, 1}));
  s.market.agents = {a1, a2};
  s.no_equilibrium = true;
  return s;
}

Scenario make_negative_price() {
  Scenario s;
  s.name = "negative-price";
  s.market.capacities = vec({1, 1, 1});
  Agent a1 = linear_agent(10, vec({1, 2, 11}));
  a1.constraints.rows.push_back(knapsack_row(3, {0, 1}));
  Agent a2 = linear_agent(0.5, vec({1, 10, 1}));
  a2.constraints.rows.push_back(knapsack_row(3, {0, 1}));
  s.market.agents = {a1, a2};
  s.equilibrium_prices.push_back(vec({-1, 0.5, 11}));
  Mat x(2, 3);
  x << 1, 0, 1,
       0, 1, 0;
  s.expected_allocation = x;
  return s;
}

Scenario make_nonconvex() {
  Scenario s;
  s.name = "nonconvex";
  s.market.capacities = vec({1, 1, 1, 1});
  Agent a1 = linear_agent(2.0, vec({2, 0.0001, 4, 0.0001}));
  Agent a2 = linear_agent(1.5, vec({1, 2, 0.0001, 0.0001}));
  Agent a3 = linear_agent(2.5, vec({0.0001, 3, 4, 0.0001}));
  Agent a4 = linear_agent(1.0, vec({0.0001, 0.0001, 0.0001, 1}));
  for (Agent* a : {&a1, &a2, &a3, &a4})
    a->constraints.rows.push_back(knapsack_row(4, {0, 1, 2}));
  s.market.agents = {a1, a2, a3, a4};
  s.equilibrium_prices.push_back(vec({1, 2, 3, 1}));
  s.equilibrium_prices.push_back(vec({46.0 / 49, 106.0 / 49, 142.0 / 49, 1}));
  s.non_equilibrium_prices.push_back(vec({95.0 / 98, 204.0 / 98, 289.0 / 98, 1}));
  return s;
}

Scenario make_giffen() {
  Scenario s;
  s.name = "giffen";
  s.market.capacities = vec({1, 1});
  Agent a = linear_agent(1, vec({1, 2}));
  a.constraints.rows.push_back(knapsack_row(2, {0, 1}));
  s.market.agents = {a};
  s.iop_prices = vec({0.5, 3});
  s.expected_bundle = vec({0.8, 0.2});
  return s;
}

Scenario make_vp_example_1() {
  Scenario s;
  s.name = "vp-example-1";
  s.market.capacities = Vec::Ones(6);
  Agent a = linear_agent(2.4, vec({1, 2, 3, 4, 5, 6}));
  a.constraints.rows.push_back(knapsack_row(6, {0, 2, 4}));
  a.constraints.rows.push_back(knapsack_row(6, {1, 3, 5}));
  s.market.agents = {a};
  s.iop_prices = vec({0.1, 0.4, 0.7, 1.2, 1.7, 2.4});
  s.expected_bundle = vec({0, 0, 0.5, 1, 0.5, 0});
  return s;
}

Scenario make_vp_example_2() {
  Scenario s;
  s.name = "vp-example-2";
  s.market.capacities = Vec::Ones(6);
  Agent a = linear_agent(4.5, vec({1, 2, 3, 4, 5, 6}));
  a.constraints.rows.push_back(knapsack_row(6, {0, 2}));
  a.constraints.rows.push_back(knapsack_row(6, {1, 3, 5}));
  s.market.agents = {a};
  s.iop_prices = vec({0.1, 0.4, 0.7, 1.2, 1.7, 2.4});
  s.expected_bundle = vec({0, 1, 1, 0, 2, 0});
  return s;
}

}  // namespace

Scenario load_scenario(const std::string& name) {
  if (name == "nonexist-homog") return make_nonexist_homog();
  if (name == "nonexist-knapsack") return make_nonexist_knapsack();
  if (name == "negative-price") return make_negative_price();
  if (name == "nonconvex") return make_nonconvex();
  if (name == "giffen") return make_giffen();
  if (name == "vp-example-1") return make_vp_example_1();
  if (name == "vp-example-2") return make_vp_example_2();
  throw std::invalid_argument("unknown scenario: " + name);
}

std::vector<std::string> scenario_names() {
  return {"nonexist-homog", "nonexist-knapsack", "negative-price",
          "nonconvex",      "giffen",            "vp-example-1",
          "vp-example-2"};
}

ExistenceConditions check_existence_conditions(const Market& market) {
  const int n = market.agent_count();
  const int m = market.good_count();
  ExistenceConditions out;
  out.witness_good_buyer.assign(m, -1);
  out.witness_agent_good.assign(n, -1);

  auto unconstrained = [&](const Agent& a, int j) {
    for (const auto& row : a.constraints.rows)
      if (row.coeffs[j] != 0.0) return false;
    return true;
  };

  out.cond_i = true;
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) {
      const Agent& a = market.agents[i];
      if (a.utility.coeffs[j] > 0.0 && unconstrained(a, j)) {
        out.witness_good_buyer[j] = i;
        break;
      }
    }
    if (out.witness_good_buyer[j] < 0) out.cond_i = false;
  }

  out.cond_ii = true;
  for (int i = 0; i < n; ++i) {
    const Agent& a = market.agents[i];
    for (int j = 0; j < m; ++j) {
      if (a.utility.coeffs[j] > 0.0 && unconstrained(a, j)) {
        out.witness_agent_good[i] = j;
        break;
      }
    }
    if (out.witness_agent_good[i] < 0) out.cond_ii = false;
  }
  return out;
}

}  // namespace fisher
