#include "fisher/verify.hpp"

#include "fisher/iop.hpp"
#include "fisher/kernels.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>

namespace fisher {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_linear(const UtilitySpec& u) {
  return u.kind == UtilityKind::Linear ||
         (u.kind == UtilityKind::Ces && u.rho == 1.0);
}

}  // namespace

EquilibriumReport check_equilibrium(const Market& market, const Vec& p,
                                    double tol) {
  const int n = market.agent_count();
  const int m = market.good_count();
  EquilibriumReport rep;
  rep.tol = tol;
  rep.clearing_residual = Vec::Constant(m, kInf);
  rep.budget_residual = Vec::Constant(n, kInf);
  rep.iop_gap = Vec::Constant(n, kInf);
  rep.demand = Vec::Constant(m, kInf);
  for (const auto& a : market.agents)
    if (!is_linear(a.utility))
      throw std::invalid_argument("check_equilibrium: linear utilities only");

  Vec opt(n);
  for (int i = 0; i < n; ++i) {
    try {
      opt[i] = solve_iop(market.agents[i], p).objective;
    } catch (const UnboundedError&) {
      rep.is_equilibrium = false;
      rep.reason = "agent " + std::to_string(i) + " has unbounded demand at p";
      return rep;
    }
  }

  // One feasibility LP over the product of optimal faces. Variables
  // z = (x stacked, e+ per good, e- per good, f per agent):
  //   clearing  sum_i x_ij - e+_j + e-_j = capacity_j
  //   budgets   p.x_i + f_i = w_i          (f_i = unspent, f_i >= 0)
  //   faces     u_i . x_i = opt_i, plus the agent's own IOP constraints.
  // Minimizing sum(e+ + e- + f) is zero exactly when some allocation on the
  // faces clears the market and spends every budget.
  const int nv = n * m + 2 * m + n;
  int gi_rows = n * m + 2 * m + n;  // x >= 0, e >= 0, f >= 0
  for (const auto& a : market.agents) gi_rows += a.constraints.size();
  Mat g = Mat::Zero(gi_rows, nv);
  Vec h = Vec::Zero(gi_rows);
  int at = 0;
  for (int i = 0; i < n; ++i)
    for (const auto& row : market.agents[i].constraints.rows) {
      g.block(at, i * m, 1, m) = row.coeffs.transpose();
      h[at] = row.rhs;
      ++at;
    }
  g.block(at, 0, n * m + 2 * m + n, n * m + 2 * m + n) =
      -Mat::Identity(n * m + 2 * m + n, n * m + 2 * m + n);
  at += n * m + 2 * m + n;

  const int me = m + n + n;  // clearing, budgets, faces
  Mat e = Mat::Zero(me, nv);
  Vec d = Vec::Zero(me);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) e(j, i * m + j) = 1.0;
    e(j, n * m + j) = -1.0;
    e(j, n * m + m + j) = 1.0;
    d[j] = market.capacities[j];
  }
  for (int i = 0; i < n; ++i) {
    e.block(m + i, i * m, 1, m) = p.transpose();
    e(m + i, n * m + 2 * m + i) = 1.0;
    d[m + i] = market.agents[i].budget;
  }
  for (int i = 0; i < n; ++i) {
    e.block(m + n + i, i * m, 1, m) = market.agents[i].utility.coeffs.transpose();
    d[m + n + i] = opt[i];
  }
  Vec c = Vec::Zero(nv);
  c.segment(n * m, 2 * m + n).setConstant(-1.0);  // maximize the negative sum

  KktSolution sol;
  try {
    sol = lp_solve(c, g, h, e, d);
  } catch (const InfeasibleError&) {
    // Faces are never empty (each optimum lies on its face); treat as a
    // numerically failed certification.
    rep.is_equilibrium = false;
    rep.reason = "optimal-face clearing program infeasible";
    return rep;
  }

  Mat x(n, m);
  for (int i = 0; i < n; ++i) x.row(i) = sol.x.segment(i * m, m).transpose();
  rep.allocation = x;
  rep.demand = x.colwise().sum().transpose();
  rep.clearing_residual = (rep.demand - market.capacities).cwiseAbs();
  bool ok = true;
  for (int j = 0; j < m; ++j)
    if (rep.clearing_residual[j] > tol * std::max(1.0, market.capacities[j]))
      ok = false;
  for (int i = 0; i < n; ++i) {
    const double spent = p.dot(x.row(i).transpose());
    rep.budget_residual[i] = std::abs(market.agents[i].budget - spent);
    if (rep.budget_residual[i] > tol * std::max(1.0, market.agents[i].budget))
      ok = false;
    const double val = market.agents[i].utility.coeffs.dot(x.row(i).transpose());
    rep.iop_gap[i] = std::abs(opt[i] - val) / std::max(1.0, std::abs(opt[i]));
    if (rep.iop_gap[i] > tol) ok = false;
  }
  rep.is_equilibrium = ok;
  return rep;
}

std::string EquilibriumReport::to_json(int indent) const {
  nlohmann::json doc;
  doc["is_equilibrium"] = is_equilibrium;
  doc["tol"] = tol;
  auto put = [&doc](const char* key, const Vec& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    doc[key] = arr;
  };
  put("clearing_residual", clearing_residual);
  put("budget_residual", budget_residual);
  put("iop_gap", iop_gap);
  put("demand", demand);
  if (!reason.empty()) doc["reason"] = reason;
  if (allocation) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < allocation->rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < allocation->cols(); ++j) row.push_back((*allocation)(i, j));
      rows.push_back(row);
    }
    doc["allocation"] = rows;
  }
  return doc.dump(indent);
}

KktResidualReport kkt_residuals(const Market& market, const Mat& x,
                                const DualBundle& duals, const Vec& lambda) {
  const int n = market.agent_count();
  const int m = market.good_count();
  if (x.rows() != n || x.cols() != m)
    throw std::invalid_argument("kkt_residuals: allocation shape");
  KktResidualReport rep;
  rep.budget_identity = Vec(n);

  for (int j = 0; j < m; ++j) {
    const double demand = x.col(j).sum();
    rep.feasibility =
        std::max(rep.feasibility, std::abs(demand - market.capacities[j]));
  }

  for (int i = 0; i < n; ++i) {
    const Agent& agent = market.agents[i];
    const Vec xi = x.row(i).transpose();
    const double w = agent.budget;
    const double li = lambda[i];
    const Mat a = agent.constraints.matrix(m);
    const Vec b = agent.constraints.rhs();

    // Social stationarity: (w+l) dlogu - p - A^T r - s = 0.
    Vec grad_social = (w + li) * agent.utility.log_gradient(xi) - duals.p;
    if (a.rows() > 0) grad_social -= a.transpose() * duals.r[i];
    grad_social -= duals.s.row(i).transpose();
    rep.stationarity_social =
        std::max(rep.stationarity_social, grad_social.cwiseAbs().maxCoeff());

    // Individual stationarity with rescaled duals r~ = y r, s~ = y s:
    // grad u - y p - A^T r~ - s~ = 0.
    const double y = duals.y[i];
    Vec grad_iop = agent.utility.gradient(xi) - y * duals.p;
    if (a.rows() > 0) grad_iop -= a.transpose() * (y * duals.r[i]);
    grad_iop -= y * duals.s.row(i).transpose();
    rep.stationarity_iop =
        std::max(rep.stationarity_iop, grad_iop.cwiseAbs().maxCoeff());

    for (int t = 0; t < a.rows(); ++t) {
      const double slack = b[t] - a.row(t).dot(xi);
      rep.feasibility = std::max(rep.feasibility, -slack);
      rep.complementarity =
          std::max(rep.complementarity, std::abs(duals.r[i][t] * slack));
      rep.sign_violation = std::max(rep.sign_violation, -duals.r[i][t]);
    }
    for (int j = 0; j < m; ++j) {
      rep.feasibility = std::max(rep.feasibility, -x(i, j));
      rep.complementarity =
          std::max(rep.complementarity, std::abs(duals.s(i, j) * x(i, j)));
      rep.sign_violation = std::max(rep.sign_violation, duals.s(i, j));
    }
    rep.sign_violation = std::max(rep.sign_violation, -y);

    const double rb = b.size() > 0 ? duals.r[i].dot(b) : 0.0;
    rep.budget_identity[i] = std::abs(w + li - duals.p.dot(xi) - rb);
  }
  return rep;
}

GridRefutation refute_equilibrium_grid(const Market& market, const Vec& lo,
                                       const Vec& hi, int steps, double tol) {
  const int m = market.good_count();
  if (lo.size() != m || hi.size() != m)
    throw std::invalid_argument("refute_equilibrium_grid: box dimension");
  if (steps < 1) throw std::invalid_argument("refute_equilibrium_grid: steps");
  double total = 1;
  for (int j = 0; j < m; ++j) total *= steps;
  if (total > 5e6)
    throw std::invalid_argument("refute_equilibrium_grid: grid too large");

  GridRefutation out;
  out.best_residual = kInf;
  std::vector<int> idx(m, 0);
  Vec p(m);
  while (true) {
    for (int j = 0; j < m; ++j)
      p[j] = steps == 1 ? lo[j]
                        : lo[j] + (hi[j] - lo[j]) * idx[j] / (steps - 1);
    EquilibriumReport rep = check_equilibrium(market, p, tol);
    ++out.points_evaluated;
    double worst = kInf;
    if (rep.reason.empty()) {
      worst = 0.0;
      for (int j = 0; j < m; ++j)
        worst = std::max(worst, rep.clearing_residual[j] /
                                    std::max(1.0, market.capacities[j]));
      for (int i = 0; i < market.agent_count(); ++i)
        worst = std::max(worst, rep.budget_residual[i] /
                                    std::max(1.0, market.agents[i].budget));
    }
    if (rep.is_equilibrium) out.all_failed = false;
    if (worst < out.best_residual) {
      out.best_residual = worst;
      out.best_price = p;
    }
    int j = 0;
    for (; j < m; ++j) {
      if (++idx[j] < steps) break;
      idx[j] = 0;
    }
    if (j == m) break;
  }
  return out;
}

}  // namespace fisher
