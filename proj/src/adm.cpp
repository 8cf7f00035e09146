#include "fisher/adm.hpp"

#include "fisher/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace fisher {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_linear(const UtilitySpec& u) {
  return u.kind == UtilityKind::Linear ||
         (u.kind == UtilityKind::Ces && u.rho == 1.0);
}

// argmax_{x >= 0} w log(u.x) - p.x : all budget-equivalent mass on the best
// bang-per-buck good; ties resolve to the smallest index.
Vec ama_linear_update(const Agent& agent, const Vec& p) {
  const Vec& u = agent.utility.coeffs;
  const int m = static_cast<int>(u.size());
  int best = -1;
  double best_ratio = -kInf;
  for (int j = 0; j < m; ++j) {
    if (u[j] <= 0.0) continue;
    if (p[j] <= 0.0)
      throw UnboundedError("ama x-update: nonpositive price on a desired good");
    const double ratio = u[j] / p[j];
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = j;
    }
  }
  Vec x = Vec::Zero(m);
  x[best] = agent.budget / p[best];
  return x;
}

Vec ama_cobb_douglas_update(const Agent& agent, const Vec& p) {
  const Vec& a = agent.utility.coeffs;
  const int m = static_cast<int>(a.size());
  Vec x = Vec::Zero(m);
  for (int j = 0; j < m; ++j) {
    if (a[j] <= 0.0) continue;
    if (p[j] <= 0.0)
      throw UnboundedError("ama x-update: nonpositive price on a desired good");
    x[j] = agent.budget * a[j] / p[j];
  }
  return x;
}

// argmax_{x >= 0} w log(u.x) - p.x - beta/2 ||x - y||^2 for linear u, via the
// scalarized stationarity x_j = max(0, y_j + (w u_j / xi - p_j)/beta) with
// xi = u.x; the mismatch u.x(xi) - xi is strictly decreasing.
Vec admm_linear_update(const Agent& agent, const Vec& p, const Vec& y,
                       double beta) {
  const Vec& u = agent.utility.coeffs;
  const int m = static_cast<int>(u.size());
  const double w = agent.budget;
  auto x_of = [&](double xi) {
    Vec x(m);
    for (int j = 0; j < m; ++j)
      x[j] = std::max(0.0, y[j] + (w * u[j] / xi - p[j]) / beta);
    return x;
  };
  double c1 = 0.0, c2 = 0.0;
  for (int j = 0; j < m; ++j) {
    c1 += u[j] * std::max(0.0, y[j] + std::max(0.0, -p[j]) / beta);
    c2 += w * u[j] * u[j] / beta;
  }
  double hi = 0.5 * (c1 + std::sqrt(c1 * c1 + 4.0 * c2)) + 1.0;
  double lo = 1e-12 * (1.0 + hi);
  while (u.dot(x_of(lo)) <= lo) lo *= 0.5;  // ensure a sign change bracket
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (u.dot(x_of(mid)) - mid > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return x_of(0.5 * (lo + hi));
}

// Separable coordinate stationarity: beta x^2 + (p_j - beta y_j) x - w a_j = 0.
Vec admm_cobb_douglas_update(const Agent& agent, const Vec& p, const Vec& y,
                             double beta) {
  const Vec& a = agent.utility.coeffs;
  const int m = static_cast<int>(a.size());
  const double w = agent.budget;
  Vec x(m);
  for (int j = 0; j < m; ++j) {
    if (a[j] <= 0.0) {
      x[j] = std::max(0.0, y[j] - p[j] / beta);
    } else {
      const double b = p[j] - beta * y[j];
      x[j] = (-b + std::sqrt(b * b + 4.0 * beta * w * a[j])) / (2.0 * beta);
    }
  }
  return x;
}

struct AmaOracle final : ObjectiveOracle {
  const Agent& agent;
  const Vec& p;
  AmaOracle(const Agent& a, const Vec& p_) : agent(a), p(p_) {}
  double value(const Vec& x) const override {
    if ((x.array() <= 0.0).any()) return -kInf;
    return agent.budget * agent.utility.log_value(x) - p.dot(x);
  }
  Vec gradient(const Vec& x) const override {
    return agent.budget * agent.utility.log_gradient(x) - p;
  }
  Mat hessian(const Vec& x) const override {
    return agent.budget * agent.utility.log_hessian(x);
  }
};

struct AdmmOracle final : ObjectiveOracle {
  const Agent& agent;
  const Vec& p;
  const Vec& y;
  double beta;
  AdmmOracle(const Agent& a, const Vec& p_, const Vec& y_, double b)
      : agent(a), p(p_), y(y_), beta(b) {}
  double value(const Vec& x) const override {
    if ((x.array() <= 0.0).any()) return -kInf;
    return agent.budget * agent.utility.log_value(x) - p.dot(x) -
           0.5 * beta * (x - y).squaredNorm();
  }
  Vec gradient(const Vec& x) const override {
    return agent.budget * agent.utility.log_gradient(x) - p - beta * (x - y);
  }
  Mat hessian(const Vec& x) const override {
    Mat h = agent.budget * agent.utility.log_hessian(x);
    h.diagonal().array() -= beta;
    return h;
  }
};

constexpr double kAmaBox = 1e6;

// Barrier fallback for x-steps with constraint rows or CES utilities.
// AMA objectives can be unbounded; a large box guard turns that into a
// detectable box-active solution.
Vec x_update_barrier(const ObjectiveOracle& oracle, const Agent& agent,
                     bool add_box) {
  const int m = agent.utility.goods();
  const int l = agent.constraints.size();
  SmoothProgram prog;
  prog.dim = m;
  const int rows = m + l + (add_box ? m : 0);
  prog.G = Mat::Zero(rows, m);
  prog.h = Vec::Zero(rows);
  prog.G.topRows(m) = -Mat::Identity(m, m);
  for (int t = 0; t < l; ++t) {
    prog.G.row(m + t) = agent.constraints.rows[t].coeffs.transpose();
    prog.h[m + t] = agent.constraints.rows[t].rhs;
  }
  if (add_box) {
    prog.G.bottomRows(m) = Mat::Identity(m, m);
    prog.h.tail(m).setConstant(kAmaBox);
  }
  prog.E = Mat(0, m);
  prog.d = Vec(0);
  prog.objective = &oracle;
  KktSolution sol = barrier_solve(prog, 1e-9);
  if (add_box && sol.x.maxCoeff() > 0.99 * kAmaBox)
    throw UnboundedError("ama x-update: unbounded (box guard active)");
  return sol.x;
}

// Alg-6 x-step with the hinge terms reformulated through slacks z_t:
//   max (w + r.b) log(u.x) - p.x - r.z - beta/2 ||x-y||^2 - beta/2 ||z||^2
//   s.t. x >= 0, z >= 0, A x - z <= b.
struct NhOracle final : ObjectiveOracle {
  const Agent& agent;
  Vec p, y, r;
  double beta, weight;
  int m, l;
  NhOracle(const Agent& a, const Vec& p_, const Vec& y_, const Vec& r_, double b)
      : agent(a), p(p_), y(y_), r(r_), beta(b) {
    m = a.utility.goods();
    l = a.constraints.size();
    const Vec bvec = a.constraints.rhs();
    weight = a.budget + (l > 0 ? r.dot(bvec) : 0.0);
  }
  double value(const Vec& xz) const override {
    const Vec x = xz.head(m), z = xz.tail(l);
    if ((x.array() <= 0.0).any()) return -kInf;
    const double ux = agent.utility.value(x);
    if (ux <= 0.0) return -kInf;
    return weight * std::log(ux) - p.dot(x) - r.dot(z) -
           0.5 * beta * (x - y).squaredNorm() - 0.5 * beta * z.squaredNorm();
  }
  Vec gradient(const Vec& xz) const override {
    const Vec x = xz.head(m), z = xz.tail(l);
    Vec g(m + l);
    g.head(m) = weight * agent.utility.log_gradient(x) - p - beta * (x - y);
    g.tail(l) = -r - beta * z;
    return g;
  }
  Mat hessian(const Vec& xz) const override {
    const Vec x = xz.head(m);
    Mat h = Mat::Zero(m + l, m + l);
    h.topLeftCorner(m, m) = weight * agent.utility.log_hessian(x);
    h.topLeftCorner(m, m).diagonal().array() -= beta;
    h.bottomRightCorner(l, l).diagonal().setConstant(-beta);
    return h;
  }
};

Vec nh_update(const Agent& agent, const Vec& p, const Vec& y, const Vec& r,
              double beta) {
  const int m = agent.utility.goods();
  const int l = agent.constraints.size();
  NhOracle oracle(agent, p, y, r, beta);
  SmoothProgram prog;
  prog.dim = m + l;
  prog.G = Mat::Zero(m + 2 * l, m + l);
  prog.h = Vec::Zero(m + 2 * l);
  prog.G.topLeftCorner(m, m) = -Mat::Identity(m, m);
  for (int t = 0; t < l; ++t) {
    prog.G(m + t, m + t) = -1.0;  // z >= 0
    prog.G.block(m + l + t, 0, 1, m) =
        agent.constraints.rows[t].coeffs.transpose();
    prog.G(m + l + t, m + t) = -1.0;  // A x - z <= b
    prog.h[m + l + t] = agent.constraints.rows[t].rhs;
  }
  prog.E = Mat(0, m + l);
  prog.d = Vec(0);
  prog.objective = &oracle;
  Vec start(m + l);
  for (int j = 0; j < m; ++j) start[j] = std::max(y[j], 1e-3);
  const Mat a = agent.constraints.matrix(m);
  const Vec b = agent.constraints.rhs();
  for (int t = 0; t < l; ++t)
    start[m + t] = std::max(a.row(t).dot(start.head(m)) - b[t], 0.0) + 1.0;
  prog.strictly_feasible_start = start;
  Vec sol = barrier_solve(prog, 1e-9).x;
  return sol.head(m);
}

}  // namespace

std::string to_string(AdmVariant v) {
  switch (v) {
    case AdmVariant::Ama: return "ama";
    case AdmVariant::Admm: return "admm";
    case AdmVariant::AdmmNh: return "admm-nh";
  }
  return "?";
}

Vec x_update(AdmVariant variant, const Agent& agent, const Vec& p,
             const Vec& y_i, const Vec& r_i, double beta) {
  switch (variant) {
    case AdmVariant::Ama: {
      if (agent.constraints.size() == 0) {
        if (is_linear(agent.utility)) return ama_linear_update(agent, p);
        if (agent.utility.kind == UtilityKind::CobbDouglas)
          return ama_cobb_douglas_update(agent, p);
      }
      AmaOracle oracle(agent, p);
      return x_update_barrier(oracle, agent, /*add_box=*/true);
    }
    case AdmVariant::Admm: {
      if (agent.constraints.size() == 0) {
        if (is_linear(agent.utility))
          return admm_linear_update(agent, p, y_i, beta);
        if (agent.utility.kind == UtilityKind::CobbDouglas)
          return admm_cobb_douglas_update(agent, p, y_i, beta);
      }
      AdmmOracle oracle(agent, p, y_i, beta);
      return x_update_barrier(oracle, agent, /*add_box=*/false);
    }
    case AdmVariant::AdmmNh:
      return nh_update(agent, p, y_i, r_i, beta);
  }
  throw std::logic_error("x_update: unknown variant");
}

Mat y_update(const Mat& x, const Vec& capacities) {
  const int n = static_cast<int>(x.rows());
  const int m = static_cast<int>(x.cols());
  Mat y(n, m);
  for (int j = 0; j < m; ++j) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += x(i, j);
    const double c = (sum - capacities[j]) / (n + 1);
    for (int i = 0; i < n; ++i) y(i, j) = x(i, j) - c;
  }
  return y;
}

Mat y_update_with_prices(const Mat& x, const Mat& p_tilde, const Vec& p,
                         double beta, const Vec& capacities) {
  const int n = static_cast<int>(x.rows());
  const int m = static_cast<int>(x.cols());
  Mat y(n, m);
  for (int j = 0; j < m; ++j) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += x(i, j) + (p_tilde(i, j) - p[j]) / beta;
    const double d = (sum - capacities[j]) / (n + 1);
    for (int i = 0; i < n; ++i)
      y(i, j) = x(i, j) + (p_tilde(i, j) - p[j]) / beta - d;
  }
  return y;
}

void dual_updates(AdmState& state, const Market& market, double beta) {
  const int n = market.agent_count();
  const int m = market.good_count();
  Vec excess = Vec::Zero(m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) excess[j] += state.y(i, j);
    excess[j] -= market.capacities[j];
  }
  state.p += beta * excess;
  if (state.p_tilde.size() > 0)
    for (int i = 0; i < n; ++i)
      state.p_tilde.row(i) += beta * (state.x.row(i) - state.y.row(i));
  if (!state.r.empty()) {
    for (int i = 0; i < n; ++i) {
      const auto& rows = market.agents[i].constraints.rows;
      for (std::size_t t = 0; t < rows.size(); ++t) {
        const double hinge = std::max(
            rows[t].coeffs.dot(state.x.row(i).transpose()) - rows[t].rhs, 0.0);
        state.r[i][static_cast<int>(t)] += beta * hinge;
      }
    }
  }
}

AdmResult run_adm_with_provider(const Market& market, const AdmConfig& config,
                                const XProvider& provider) {
  const int n = market.agent_count();
  const int m = market.good_count();
  if (config.variant != AdmVariant::AdmmNh && !market.homogeneous())
    throw std::invalid_argument(
        "run_adm: AMA/ADMM require homogeneous rows; use the admm-nh variant");

  AdmResult res;
  AdmState& st = res.state;
  st.x = Mat::Zero(n, m);
  st.y = config.y0 ? *config.y0
                   : Mat((Vec::Ones(n) * (market.capacities / n).transpose()));
  st.p = config.p0
             ? *config.p0
             : Vec::Constant(m, market.total_budget() / market.capacities.sum());
  if (config.variant == AdmVariant::Ama) {
    st.p_tilde = Mat(n, m);
    for (int i = 0; i < n; ++i) st.p_tilde.row(i) = st.p.transpose();
  }
  if (config.variant == AdmVariant::AdmmNh) {
    st.r.resize(n);
    for (int i = 0; i < n; ++i)
      st.r[i] = Vec::Zero(market.agents[i].constraints.size());
  }
  ConvergenceTrace& trace = res.trace;
  trace.lambda_columns = config.variant == AdmVariant::AdmmNh;

  bool warned_price = false;
  for (int k = 0; k < config.max_iter; ++k) {
    st.iteration = k;
    try {
      std::string reason;
      if (!provider(market, config, st, &reason)) {
        trace.aborted = true;
        trace.abort_reason = reason;
        break;
      }
    } catch (const UnboundedError& e) {
      trace.diverged = true;
      trace.divergence_reason = e.what();
      break;
    }

    const Mat y_prev = st.y;
    st.y = config.variant == AdmVariant::Ama
               ? y_update_with_prices(st.x, st.p_tilde, st.p, config.beta,
                                      market.capacities)
               : y_update(st.x, market.capacities);

    TraceRow row;
    row.iter = k;
    row.res_primal = (st.x - st.y).norm();
    row.res_clearing =
        (st.y.colwise().sum().transpose() - market.capacities).norm();
    row.res_dual = config.beta * (st.y - y_prev).norm();
    double viol2 = 0.0;
    for (int i = 0; i < n; ++i)
      for (const auto& r : market.agents[i].constraints.rows) {
        const double hinge =
            std::max(r.coeffs.dot(st.x.row(i).transpose()) - r.rhs, 0.0);
        viol2 += hinge * hinge;
      }
    row.res_violation = std::sqrt(viol2);

    dual_updates(st, market, config.beta);
    row.p = st.p;
    if (config.variant == AdmVariant::AdmmNh) {
      row.lambda = Vec(n);
      for (int i = 0; i < n; ++i) {
        const Vec b = market.agents[i].constraints.rhs();
        row.lambda[i] = b.size() > 0 ? st.r[i].dot(b) : 0.0;
      }
    }
    if (!warned_price && st.p.minCoeff() <= 0.0) {
      trace.warnings.push_back("nonpositive price at iteration " +
                               std::to_string(k) +
                               "; step-bound assumptions no longer monitored");
      warned_price = true;
    }

    double stop = std::max({row.res_primal, row.res_clearing, row.res_dual});
    if (config.variant == AdmVariant::AdmmNh)
      stop = std::max(stop, row.res_violation);
    trace.rows.push_back(std::move(row));
    if (stop <= config.tol) {
      trace.converged = true;
      break;
    }
  }
  return res;
}

AdmResult run_adm(const Market& market, const AdmConfig& config) {
  return run_adm_with_provider(
      market, config,
      [](const Market& mkt, const AdmConfig& cfg, AdmState& st, std::string*) {
        Vec empty;
        for (int i = 0; i < mkt.agent_count(); ++i) {
          const Vec price = cfg.variant == AdmVariant::Ama
                                ? Vec(st.p_tilde.row(i).transpose())
                                : st.p;
          const Vec ri = st.r.empty() ? empty : st.r[i];
          st.x.row(i) = x_update(cfg.variant, mkt.agents[i], price,
                                 st.y.row(i).transpose(), ri, cfg.beta)
                            .transpose();
        }
        return true;
      });
}

AmaBetaBound ama_beta_bound(const Market& market, int sample_count,
                            std::uint64_t seed) {
  const int n = market.agent_count();
  const int m = market.good_count();
  if (sample_count < 1)
    throw std::invalid_argument("ama_beta_bound: sample_count >= 1");
  AmaBetaBound out;

  // rho(B^T B) for B stacking the capacity row block over y and the
  // consensus identity: B^T B = C^T C + I.
  Mat btb = Mat::Identity(n * m, n * m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < n; ++i)
      for (int i2 = 0; i2 < n; ++i2) btb(i * m + j, i2 * m + j) += 1.0;
  out.rho = spectral_radius(btb);

  for (const auto& a : market.agents) {
    if (is_linear(a.utility)) {
      out.sigma = 0.0;
      out.valid = false;  // linear f has no strong concavity
      out.bound = 0.0;
      return out;
    }
  }

  SeededRng rng(seed);
  double sigma = kInf;
  int valid_samples = 0;
  for (int s = 0; s < sample_count; ++s) {
    Mat x(n, m);
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      const Agent& agent = market.agents[i];
      bool agent_ok = false;
      for (int attempt = 0; attempt < 50 && !agent_ok; ++attempt) {
        for (int j = 0; j < m; ++j) {
          const double lo = 1e-3 * market.capacities[j];
          x(i, j) = lo + rng.next_unit() * (market.capacities[j] - lo);
        }
        agent_ok = true;
        for (const auto& row : agent.constraints.rows)
          if (row.coeffs.dot(x.row(i).transpose()) > row.rhs) agent_ok = false;
      }
      ok = agent_ok;
    }
    if (!ok) continue;
    ++valid_samples;
    for (int i = 0; i < n; ++i) {
      const Mat h = -market.agents[i].budget *
                    market.agents[i].utility.log_hessian(x.row(i).transpose());
      Eigen::SelfAdjointEigenSolver<Mat> eig(h);
      sigma = std::min(sigma, eig.eigenvalues().minCoeff());
    }
  }
  if (valid_samples == 0)
    throw SolveError("ama_beta_bound: no feasible interior sample found");
  out.sigma = std::max(0.0, sigma);
  out.valid = out.sigma > 0.0;
  out.bound = 2.0 * out.sigma / out.rho;
  return out;
}

}  // namespace fisher
