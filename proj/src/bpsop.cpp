#include "fisher/bpsop.hpp"

#include "fisher/iop.hpp"
#include "fisher/kernels.hpp"

#include <cmath>
#include <limits>

namespace fisher {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRowRelax = 1e-6;

// sum_i weight_i log u_i(x_i) over the stacked allocation (agent-major).
struct SocialOracle final : ObjectiveOracle {
  const Market& mkt;
  Vec weight;
  int n, m;

  SocialOracle(const Market& market, Vec w)
      : mkt(market), weight(std::move(w)), n(market.agent_count()), m(market.good_count()) {}

  double value(const Vec& x) const override {
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec xi = x.segment(i * m, m);
      if ((xi.array() <= 0.0).any()) return -kInf;
      if (mkt.agents[i].utility.value(xi) <= 0.0) return -kInf;
      v += weight[i] * mkt.agents[i].utility.log_value(xi);
    }
    return v;
  }

  Vec gradient(const Vec& x) const override {
    Vec g(n * m);
    for (int i = 0; i < n; ++i)
      g.segment(i * m, m) =
          weight[i] * mkt.agents[i].utility.log_gradient(x.segment(i * m, m));
    return g;
  }

  Mat hessian(const Vec& x) const override {
    Mat h = Mat::Zero(n * m, n * m);
    for (int i = 0; i < n; ++i)
      h.block(i * m, i * m, m, m) =
          weight[i] * mkt.agents[i].utility.log_hessian(x.segment(i * m, m));
    return h;
  }

  Mat block(int i, const Vec& x) const {
    return weight[i] * mkt.agents[i].utility.log_hessian(x.segment(i * m, m));
  }
};

struct SocialProgramParts {
  SmoothProgram prog;
  int total_rows = 0;  // agent rows (before the nonnegativity rows)
};

// Assembles G/h/E/d for the social program. Row order: all agents'
// constraint rows (agent-major), then n*m nonnegativity rows.
SocialProgramParts social_program(const Market& mkt, double row_relax,
                                  bool capacity_equality) {
  const int n = mkt.agent_count();
  const int m = mkt.good_count();
  int total_rows = 0;
  for (const auto& a : mkt.agents) total_rows += a.constraints.size();

  SocialProgramParts parts;
  SmoothProgram& p = parts.prog;
  parts.total_rows = total_rows;
  p.dim = n * m;
  const int cap_rows = capacity_equality ? 0 : m;
  p.G = Mat::Zero(total_rows + n * m + cap_rows, n * m);
  p.h = Vec::Zero(total_rows + n * m + cap_rows);
  int at = 0;
  for (int i = 0; i < n; ++i) {
    for (const auto& row : mkt.agents[i].constraints.rows) {
      p.G.block(at, i * m, 1, m) = row.coeffs.transpose();
      p.h[at] = row.rhs + row_relax;
      ++at;
    }
  }
  p.G.block(at, 0, n * m, n * m) = -Mat::Identity(n * m, n * m);
  at += n * m;
  if (capacity_equality) {
    p.E = Mat::Zero(m, n * m);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < n; ++i) p.E(j, i * m + j) = 1.0;
    p.d = mkt.capacities;
  } else {
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < n; ++i) p.G(at + j, i * m + j) = 1.0;
      p.h[at + j] = mkt.capacities[j];
    }
    p.E = Mat(0, n * m);
    p.d = Vec(0);
  }
  for (int i = 0; i < n; ++i) p.blocks.push_back({i * m, m});
  return parts;
}

Vec uniform_start(const Market& mkt) {
  const int n = mkt.agent_count();
  const int m = mkt.good_count();
  Vec x(n * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) x[i * m + j] = mkt.capacities[j] / n;
  return x;
}

double worst_row_violation(const Market& mkt, const Vec& x) {
  const int m = mkt.good_count();
  double worst = -kInf;
  for (int i = 0; i < mkt.agent_count(); ++i)
    for (const auto& row : mkt.agents[i].constraints.rows)
      worst = std::max(worst, row.coeffs.dot(x.segment(i * m, m)) - row.rhs);
  return worst;
}

}  // namespace

DualBundle BpsopSolution::duals(const Market& market) const {
  DualBundle d;
  d.p = p;
  d.r = r;
  d.s = s;
  const int n = static_cast<int>(x.rows());
  d.y = Vec(n);
  // IOP budget dual from the social stationarity scale: y_i = u_i(x_i)/(w_i+l_i).
  for (int i = 0; i < n; ++i)
    d.y[i] = market.agents[i].utility.value(x.row(i).transpose()) /
             (market.agents[i].budget + lambda[i]);
  return d;
}

Vec BpsopSolution::lambda_image(const Market& market) const {
  const int n = market.agent_count();
  Vec img = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    const Vec b = market.agents[i].constraints.rhs();
    if (b.size() > 0) img[i] = r[i].dot(b);
  }
  return img;
}

BpsopSolution solve_bpsop(const Market& market, const Vec& lambda,
                          double barrier_tol) {
  const int n = market.agent_count();
  const int m = market.good_count();
  if (lambda.size() != n) throw std::invalid_argument("solve_bpsop: lambda size");
  if ((lambda.array() < 0.0).any())
    throw std::invalid_argument("solve_bpsop: lambda must be nonnegative");
  for (const auto& a : market.agents)
    if (a.budget <= 0.0)
      throw std::invalid_argument("solve_bpsop: requires positive budgets");

  Vec weight(n);
  for (int i = 0; i < n; ++i) weight[i] = market.agents[i].budget + lambda[i];
  SocialOracle oracle(market, weight);

  auto attempt = [&](double relax, std::optional<Vec> start) {
    SocialProgramParts parts = social_program(market, relax, true);
    parts.prog.objective = &oracle;
    parts.prog.hessian_block = [&oracle](int i, const Vec& x) {
      return oracle.block(i, x);
    };
    parts.prog.strictly_feasible_start = std::move(start);
    return barrier_solve(parts.prog, barrier_tol);
  };

  bool relaxed = false;
  KktSolution sol;
  const Vec x0 = uniform_start(market);
  const double unif_viol = worst_row_violation(market, x0);
  if (unif_viol < -kRowRelax) {
    sol = attempt(0.0, x0);
  } else if (unif_viol <= kRowRelax / 2.0) {
    // Rows (near-)tight at the uniform point: relax to create an interior.
    relaxed = true;
    sol = attempt(kRowRelax, x0);
  } else {
    try {
      sol = attempt(0.0, std::nullopt);
    } catch (const NoInteriorError&) {
      relaxed = true;
      sol = attempt(kRowRelax, std::nullopt);
    }
  }

  BpsopSolution out;
  out.lambda = lambda;
  out.relaxed_rows = relaxed;
  out.x = Mat(n, m);
  for (int i = 0; i < n; ++i) out.x.row(i) = sol.x.segment(i * m, m).transpose();
  out.p = sol.nu;
  out.r.resize(n);
  int at = 0;
  for (int i = 0; i < n; ++i) {
    const int l = market.agents[i].constraints.size();
    out.r[i] = sol.mu.segment(at, l);
    at += l;
  }
  out.s = Mat(n, m);
  for (int i = 0; i < n; ++i)
    out.s.row(i) = -sol.mu.segment(at + i * m, m).transpose();
  out.objective = sol.objective;

  // Residuals recomputed against the ORIGINAL (unrelaxed) program.
  double stat = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec xi = out.x.row(i).transpose();
    Vec g = weight[i] * market.agents[i].utility.log_gradient(xi);
    g -= out.p;
    const Mat a = market.agents[i].constraints.matrix(m);
    if (a.rows() > 0) g -= a.transpose() * out.r[i];
    g -= out.s.row(i).transpose();
    stat = std::max(stat, g.cwiseAbs().maxCoeff());
  }
  out.stationarity_residual = stat;
  double feas = (out.x.colwise().sum().transpose() - market.capacities)
                    .cwiseAbs()
                    .maxCoeff();
  double comp = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec xi = out.x.row(i).transpose();
    const auto& rows = market.agents[i].constraints.rows;
    for (std::size_t t = 0; t < rows.size(); ++t) {
      feas = std::max(feas, rows[t].coeffs.dot(xi) - rows[t].rhs);
      comp = std::max(comp, std::abs(out.r[i][static_cast<int>(t)] *
                                     (rows[t].rhs - rows[t].coeffs.dot(xi))));
    }
    for (int j = 0; j < m; ++j)
      comp = std::max(comp, std::abs(out.s(i, j) * out.x(i, j)));
  }
  out.feasibility_residual = std::max(0.0, feas);
  out.complementarity_residual = comp;
  return out;
}

FixedPointResult fixed_point(const Market& market,
                             const FixedPointOptions& options) {
  return fixed_point(market, Vec::Zero(market.agent_count()), options);
}

FixedPointResult fixed_point(const Market& market, const Vec& lambda0,
                             const FixedPointOptions& options) {
  if ((lambda0.array() < 0.0).any())
    throw std::invalid_argument("fixed_point: lambda0 must be nonnegative");
  FixedPointResult res;
  Vec lambda = lambda0;
  for (int k = 0; k < options.max_iter; ++k) {
    BpsopSolution sol = solve_bpsop(market, lambda, options.barrier_tol);
    if (sol.complementarity_residual > 1e-7 && options.barrier_tol > 1e-11) {
      // Duals too loose to trust the update; re-center tighter.
      sol = solve_bpsop(market, lambda, options.barrier_tol * 1e-2);
    }
    const Vec image = sol.lambda_image(market);
    const double residual = (lambda - image).norm();
    res.residuals.push_back(residual);
    res.iterations = k + 1;
    res.solution = std::move(sol);
    if (residual <= options.tol) {
      res.lambda = lambda;
      res.converged = true;
      return res;
    }
    lambda = (1.0 - options.damping) * image + options.damping * lambda;
  }
  res.lambda = lambda;
  res.converged = false;
  return res;
}

ExistenceReport existence_test_homogeneous(const Market& market, double tol) {
  if (!market.homogeneous())
    throw std::invalid_argument(
        "existence_test_homogeneous: requires homogeneous rows");
  const int n = market.agent_count();
  const int m = market.good_count();
  Vec weight(n);
  for (int i = 0; i < n; ++i) weight[i] = market.agents[i].budget;
  SocialOracle oracle(market, weight);

  auto attempt = [&](double relax) {
    SocialProgramParts parts = social_program(market, relax, false);
    parts.prog.objective = &oracle;
    // Capacity rows couple agents, so the block annotation does not apply.
    parts.prog.blocks.clear();
    return barrier_solve(parts.prog, 1e-9);
  };
  KktSolution sol;
  try {
    sol = attempt(0.0);
  } catch (const NoInteriorError&) {
    sol = attempt(kRowRelax);
  }

  ExistenceReport rep;
  rep.capacity_slack = Vec(m);
  for (int j = 0; j < m; ++j) {
    double demand = 0.0;
    for (int i = 0; i < n; ++i) demand += sol.x[i * m + j];
    rep.capacity_slack[j] = std::max(0.0, market.capacities[j] - demand);
  }
  rep.exists = (rep.capacity_slack.array() <= tol).all();
  return rep;
}

ParetoCertificate pareto_certificate(const Market& market, const Mat& x) {
  const int n = market.agent_count();
  const int m = market.good_count();
  if (x.rows() != n || x.cols() != m)
    throw std::invalid_argument("pareto_certificate: allocation shape");
  const double ftol = 1e-6;
  if ((x.array() < -ftol).any())
    throw std::invalid_argument("pareto_certificate: x has negative entries");
  for (int j = 0; j < m; ++j)
    if (x.col(j).sum() > market.capacities[j] + ftol)
      throw std::invalid_argument("pareto_certificate: x exceeds capacity");
  for (int i = 0; i < n; ++i)
    for (const auto& row : market.agents[i].constraints.rows)
      if (row.coeffs.dot(x.row(i).transpose()) > row.rhs + ftol)
        throw std::invalid_argument("pareto_certificate: x violates a row");

  bool all_linear = true;
  for (const auto& a : market.agents)
    if (a.utility.kind != UtilityKind::Linear &&
        !(a.utility.kind == UtilityKind::Ces && a.utility.rho == 1.0))
      all_linear = false;

  // Variables z = (y stacked agent-major, epsilon per agent);
  // maximize sum eps s.t. y feasible and  grad_i . y_i >= floor_i + eps_i.
  // For linear utilities grad_i = u_i and floor_i = u_i . x_i (exact);
  // otherwise the floor is the first-order model at x_i (local certificate).
  const int nv = n * m + n;
  int rows = m + n * m + n + n;  // capacity, y>=0, eps>=0, floors
  for (const auto& a : market.agents) rows += a.constraints.size();
  Mat g = Mat::Zero(rows, nv);
  Vec h = Vec::Zero(rows);
  int at = 0;
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) g(at, i * m + j) = 1.0;
    h[at] = market.capacities[j];
    ++at;
  }
  for (int i = 0; i < n; ++i)
    for (const auto& row : market.agents[i].constraints.rows) {
      g.block(at, i * m, 1, m) = row.coeffs.transpose();
      h[at] = row.rhs;
      ++at;
    }
  g.block(at, 0, n * m, n * m) = -Mat::Identity(n * m, n * m);
  at += n * m;
  g.block(at, n * m, n, n) = -Mat::Identity(n, n);
  at += n;
  for (int i = 0; i < n; ++i) {
    const Vec xi = x.row(i).transpose();
    Vec grad;
    double floor;
    if (market.agents[i].utility.kind == UtilityKind::Linear ||
        (market.agents[i].utility.kind == UtilityKind::Ces &&
         market.agents[i].utility.rho == 1.0)) {
      grad = market.agents[i].utility.coeffs;
      floor = grad.dot(xi);
    } else {
      grad = market.agents[i].utility.gradient(xi);
      floor = market.agents[i].utility.value(xi);  // = grad . x by Euler
    }
    g.block(at, i * m, 1, m) = -grad.transpose();
    g(at, n * m + i) = 1.0;
    h[at] = -floor;
    ++at;
  }
  Vec c = Vec::Zero(nv);
  c.tail(n).setOnes();

  KktSolution sol = lp_solve(c, g, h, Mat(0, nv), Vec(0));
  ParetoCertificate cert;
  cert.local_only = !all_linear;
  cert.improvement = sol.objective;
  cert.is_pareto = sol.objective <= 1e-7;
  if (!cert.is_pareto) {
    Mat y(n, m);
    for (int i = 0; i < n; ++i)
      y.row(i) = sol.x.segment(i * m, m).transpose();
    cert.dominating = y;
  }
  return cert;
}

BudgetSlackReport budget_slack_report(const Market& market) {
  const int n = market.agent_count();
  BpsopSolution sol = solve_bpsop(market, Vec::Zero(n));
  BudgetSlackReport rep;
  rep.p = sol.p;
  rep.x = sol.x;
  rep.slack_direct = Vec(n);
  rep.slack_dual = Vec(n);
  for (int i = 0; i < n; ++i) {
    rep.slack_direct[i] =
        market.agents[i].budget - sol.p.dot(sol.x.row(i).transpose());
    const Vec b = market.agents[i].constraints.rhs();
    rep.slack_dual[i] = b.size() > 0 ? sol.r[i].dot(b) : 0.0;
  }
  return rep;
}

}  // namespace fisher
