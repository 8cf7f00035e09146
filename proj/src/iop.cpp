#include "fisher/iop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fisher {

namespace {

struct HullPoint {
  double u, p;
  int good;  // -1 = origin
};

double cross(const HullPoint& a, const HullPoint& b, const HullPoint& c) {
  return (b.u - a.u) * (c.p - a.p) - (b.p - a.p) * (c.u - a.u);
}

// Knapsack structure of an agent's rows, or nothing if not greedy-eligible.
struct KnapsackForm {
  std::vector<std::vector<int>> members;  // per row
  Vec rhs;
};

std::optional<KnapsackForm> knapsack_form(const Agent& agent) {
  const int m = agent.utility.goods();
  KnapsackForm form;
  form.rhs = agent.constraints.rhs();
  std::vector<bool> used(m, false);
  for (const auto& row : agent.constraints.rows) {
    std::vector<int> members;
    for (int j = 0; j < m; ++j) {
      const double a = row.coeffs[j];
      if (a == 0.0) continue;
      if (a != 1.0) return std::nullopt;
      if (used[j]) return std::nullopt;  // good in more than one knapsack
      used[j] = true;
      members.push_back(j);
    }
    form.members.push_back(std::move(members));
  }
  return form;
}

IopSolution solve_iop_lp(const Agent& agent, const Vec& p) {
  const int m = agent.utility.goods();
  const int l = agent.constraints.size();
  Mat g(1 + l + m, m);
  Vec h(1 + l + m);
  g.row(0) = p.transpose();
  h[0] = agent.budget;
  for (int t = 0; t < l; ++t) {
    g.row(1 + t) = agent.constraints.rows[t].coeffs.transpose();
    h[1 + t] = agent.constraints.rows[t].rhs;
  }
  g.bottomRows(m) = -Mat::Identity(m, m);
  h.tail(m).setZero();

  KktSolution sol = lp_solve(agent.utility.coeffs, g, h, Mat(0, m), Vec(0));
  IopSolution out;
  out.bundle = sol.x;
  out.objective = sol.objective;
  out.spent = p.dot(sol.x);
  IopDuals duals;
  duals.budget = sol.mu[0];
  duals.rows = sol.mu.segment(1, l);
  duals.nonnegativity = -sol.mu.tail(m);
  out.duals = duals;
  return out;
}

struct UtilityOracle final : ObjectiveOracle {
  const UtilitySpec& spec;
  explicit UtilityOracle(const UtilitySpec& s) : spec(s) {}
  double value(const Vec& x) const override { return spec.value(x); }
  Vec gradient(const Vec& x) const override { return spec.gradient(x); }
  Mat hessian(const Vec& x) const override {
    // d2 u = u * (d2 log u + dlogu dlogu^T) for u = exp(log u).
    const double v = spec.value(x);
    const Vec lg = spec.log_gradient(x);
    return v * (spec.log_hessian(x) + lg * lg.transpose());
  }
};

IopSolution solve_iop_smooth(const Agent& agent, const Vec& p) {
  const int m = agent.utility.goods();
  const int l = agent.constraints.size();
  SmoothProgram prog;
  prog.dim = m;
  prog.G = Mat(1 + l + m, m);
  prog.h = Vec(1 + l + m);
  prog.G.row(0) = p.transpose();
  prog.h[0] = agent.budget;
  for (int t = 0; t < l; ++t) {
    prog.G.row(1 + t) = agent.constraints.rows[t].coeffs.transpose();
    prog.h[1 + t] = agent.constraints.rows[t].rhs;
  }
  prog.G.bottomRows(m) = -Mat::Identity(m, m);
  prog.h.tail(m).setZero();
  prog.E = Mat(0, m);
  prog.d = Vec(0);
  UtilityOracle oracle(agent.utility);
  prog.objective = &oracle;
  KktSolution sol = barrier_solve(prog, 1e-9);
  IopSolution out;
  out.bundle = sol.x;
  out.objective = agent.utility.value(sol.x);
  out.spent = p.dot(sol.x);
  IopDuals duals;
  duals.budget = sol.mu[0];
  duals.rows = sol.mu.segment(1, l);
  duals.nonnegativity = -sol.mu.tail(m);
  out.duals = duals;
  return out;
}

}  // namespace

IopSolution solve_iop(const Agent& agent, const Vec& p) {
  if (p.size() != agent.utility.goods())
    throw std::invalid_argument("solve_iop: price dimension mismatch");
  if (agent.utility.kind == UtilityKind::Linear ||
      (agent.utility.kind == UtilityKind::Ces && agent.utility.rho == 1.0))
    return solve_iop_lp(agent, p);
  return solve_iop_smooth(agent, p);
}

Frontier knapsack_frontier(const std::vector<int>& goods_in_knapsack,
                           const Vec& u, const Vec& p) {
  if (goods_in_knapsack.empty())
    throw std::invalid_argument("knapsack_frontier: empty knapsack");
  std::vector<HullPoint> pts;
  pts.push_back({0.0, 0.0, -1});
  for (int j : goods_in_knapsack) {
    if (p[j] < 0.0)
      throw std::invalid_argument("knapsack_frontier: negative price");
    pts.push_back({u[j], p[j], j});
  }
  std::sort(pts.begin(), pts.end(), [](const HullPoint& a, const HullPoint& b) {
    if (a.u != b.u) return a.u < b.u;
    if (a.p != b.p) return a.p < b.p;
    return a.good < b.good;
  });
  // Deduplicate equal utilities: only the cheapest survives.
  std::vector<HullPoint> uniq;
  for (const auto& q : pts) {
    if (!uniq.empty() && uniq.back().u == q.u) continue;
    uniq.push_back(q);
  }
  // Monotone-chain lower hull; collinear middle points are dropped so the
  // slopes come out strictly increasing.
  std::vector<HullPoint> hull;
  for (const auto& q : uniq) {
    while (hull.size() >= 2 &&
           cross(hull[hull.size() - 2], hull.back(), q) <= 0.0)
      hull.pop_back();
    hull.push_back(q);
  }
  Frontier f;
  for (std::size_t k = 1; k < hull.size(); ++k) {
    VirtualProduct vp;
    vp.u_low = hull[k - 1].u;
    vp.p_low = hull[k - 1].p;
    vp.u_high = hull[k].u;
    vp.p_high = hull[k].p;
    vp.slope = (vp.p_high - vp.p_low) / (vp.u_high - vp.u_low);
    vp.good_low = hull[k - 1].good;
    vp.good_high = hull[k].good;
    f.segments.push_back(vp);
  }
  return f;
}

IopSolution solve_iop_greedy(const Agent& agent, const Vec& p) {
  const int m = agent.utility.goods();
  if (p.size() != m)
    throw std::invalid_argument("solve_iop_greedy: price dimension mismatch");
  if ((p.array() < 0.0).any())
    throw std::invalid_argument("solve_iop_greedy: requires nonnegative prices");
  if (agent.utility.kind != UtilityKind::Linear &&
      !(agent.utility.kind == UtilityKind::Ces && agent.utility.rho == 1.0))
    throw std::invalid_argument("solve_iop_greedy: requires a linear utility");
  auto form = knapsack_form(agent);
  if (!form)
    throw std::invalid_argument(
        "solve_iop_greedy: rows must be disjoint unit-coefficient knapsacks");
  const Vec& u = agent.utility.coeffs;

  std::vector<bool> in_knapsack(m, false);
  std::vector<VirtualProduct> products;
  for (std::size_t t = 0; t < form->members.size(); ++t) {
    for (int j : form->members[t]) in_knapsack[j] = true;
    if (form->members[t].empty()) continue;
    if (form->rhs[static_cast<int>(t)] == 0.0) continue;  // feasible set {(0,0)}
    Frontier f = knapsack_frontier(form->members[t], u, p);
    for (VirtualProduct vp : f.segments) {
      vp.knapsack = static_cast<int>(t);
      vp.quantity = form->rhs[static_cast<int>(t)];
      products.push_back(vp);
    }
  }
  const int pseudo_base = static_cast<int>(form->members.size());
  for (int j = 0; j < m; ++j) {
    if (in_knapsack[j] || u[j] <= 0.0) continue;
    if (p[j] <= 0.0)
      throw UnboundedError("solve_iop_greedy: free unconstrained good");
    VirtualProduct vp;
    vp.u_low = 0.0;
    vp.p_low = 0.0;
    vp.u_high = u[j];
    vp.p_high = p[j];
    vp.slope = p[j] / u[j];
    vp.knapsack = pseudo_base + j;
    vp.good_low = -1;
    vp.good_high = j;
    vp.unlimited = true;
    products.push_back(vp);
  }

  std::sort(products.begin(), products.end(),
            [](const VirtualProduct& a, const VirtualProduct& b) {
              if (a.slope != b.slope) return a.slope < b.slope;
              if (a.knapsack != b.knapsack) return a.knapsack < b.knapsack;
              return a.good_high < b.good_high;
            });

  Vec x = Vec::Zero(m);
  double remaining = agent.budget;
  for (const VirtualProduct& vp : products) {
    if (vp.unlimited) {
      if (remaining <= 0.0) break;
      x[vp.good_high] += remaining / vp.p_high;
      remaining = 0.0;
      break;
    }
    const double cost = vp.quantity * (vp.p_high - vp.p_low);
    double fraction;
    if (cost <= 0.0) {
      fraction = 1.0;  // free upgrade along the frontier
    } else if (remaining <= 0.0) {
      continue;
    } else {
      fraction = std::min(1.0, remaining / cost);
    }
    if (vp.good_low >= 0) x[vp.good_low] -= fraction * vp.quantity;
    x[vp.good_high] += fraction * vp.quantity;
    remaining -= fraction * cost;
    if (remaining < 0.0) remaining = 0.0;
  }
  for (int j = 0; j < m; ++j)
    if (x[j] < 0.0) x[j] = 0.0;  // scrub -0 style round-off

  IopSolution out;
  out.bundle = x;
  out.objective = u.dot(x);
  out.spent = agent.budget - remaining;
  return out;
}

namespace {

bool greedy_eligible(const Agent& agent, const Vec& p) {
  if (agent.utility.kind != UtilityKind::Linear) return false;
  if ((p.array() < 0.0).any()) return false;
  return knapsack_form(agent).has_value();
}

}  // namespace

DemandSweep demand_sweep(const Agent& agent, const Vec& base_prices, int good,
                         const std::vector<double>& grid) {
  DemandSweep out;
  out.good = good;
  for (double pj : grid) {
    Vec p = base_prices;
    p[good] = pj;
    IopSolution sol =
        greedy_eligible(agent, p) ? solve_iop_greedy(agent, p) : solve_iop(agent, p);
    out.points.push_back({pj, sol.bundle[good]});
  }
  for (std::size_t k = 0; k + 1 < out.points.size(); ++k) {
    const bool up = out.points[k + 1].price > out.points[k].price &&
                    out.points[k + 1].demand > out.points[k].demand + 1e-9;
    out.giffen_step.push_back(up);
    if (up) out.giffen = true;
  }
  return out;
}

IopSolution compensated_demand(const Agent& agent, const Vec& p,
                               const Vec& p_prime, const Vec& x_at_p) {
  if (p.size() != p_prime.size())
    throw std::invalid_argument("compensated_demand: dimension mismatch");
  int changed = -1;
  for (int j = 0; j < p.size(); ++j) {
    if (p_prime[j] != p[j]) {
      if (p_prime[j] < p[j] || changed >= 0)
        throw std::invalid_argument(
            "compensated_demand: exactly one price may rise");
      changed = j;
    }
  }
  if (!knapsack_form(agent))
    throw std::invalid_argument(
        "compensated_demand: rows must be disjoint knapsacks");
  Agent compensated = agent;
  compensated.budget = p_prime.dot(x_at_p);
  IopSolution sol = greedy_eligible(compensated, p_prime)
                        ? solve_iop_greedy(compensated, p_prime)
                        : solve_iop(compensated, p_prime);
  if (changed >= 0 && sol.bundle[changed] > x_at_p[changed] + 1e-9)
    throw SolveError("compensated_demand: compensated demand rose");
  return sol;
}

}  // namespace fisher
