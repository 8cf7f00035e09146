#include "fisher/kernels.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace fisher {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct LinearOracle final : ObjectiveOracle {
  Vec c;
  explicit LinearOracle(Vec c_) : c(std::move(c_)) {}
  double value(const Vec& x) const override { return c.dot(x); }
  Vec gradient(const Vec&) const override { return c; }
  Mat hessian(const Vec&) const override { return Mat::Zero(c.size(), c.size()); }
};

// Barrier potential for max t f(x) + sum_k log(h_k - g_k x).
struct Potential {
  const SmoothProgram& p;
  double t;

  double eval(const Vec& x, Vec* slack_out = nullptr) const {
    double v = t * p.objective->value(x);
    if (!std::isfinite(v)) return -kInf;
    if (p.G.rows() > 0) {
      Vec slack = p.h - p.G * x;
      if ((slack.array() <= 0.0).any()) return -kInf;
      v += slack.array().log().sum();
      if (slack_out) *slack_out = std::move(slack);
    }
    return v;
  }

  Vec grad(const Vec& x, const Vec& slack) const {
    Vec g = t * p.objective->gradient(x);
    for (int k = 0; k < p.G.rows(); ++k) g -= p.G.row(k).transpose() / slack[k];
    return g;
  }
};

bool blocks_usable(const SmoothProgram& p) {
  if (p.blocks.empty()) return false;
  // Every inequality row must live inside one block.
  for (int k = 0; k < p.G.rows(); ++k) {
    int owner = -1;
    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
      const Block& b = p.blocks[bi];
      bool inside = true, touches = false;
      for (int j = 0; j < p.dim; ++j) {
        if (p.G(k, j) == 0.0) continue;
        touches = true;
        if (j < b.offset || j >= b.offset + b.size) {
          inside = false;
          break;
        }
      }
      if (touches && inside) {
        owner = static_cast<int>(bi);
        break;
      }
    }
    if (owner < 0) return false;
  }
  return true;
}

// One equality-constrained Newton centering run. x must be strictly feasible
// with E x = d. Returns the equality multiplier estimate w (for dual
// recovery: nu = w / t).
struct NewtonResult {
  Vec x;
  Vec w;
  bool converged = false;
};

NewtonResult newton_center(const SmoothProgram& p, const Potential& pot, Vec x,
                           const BarrierOptions& opt, bool use_blocks) {
  const int me = static_cast<int>(p.E.rows());
  NewtonResult res;
  res.w = Vec::Zero(me);

  std::vector<std::vector<int>> rows_of_block;
  if (use_blocks) {
    rows_of_block.resize(p.blocks.size());
    for (int k = 0; k < p.G.rows(); ++k) {
      for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
        const Block& b = p.blocks[bi];
        bool touches = false;
        for (int j = 0; j < b.size; ++j)
          if (p.G(k, b.offset + j) != 0.0) {
            touches = true;
            break;
          }
        if (touches) {
          rows_of_block[bi].push_back(k);
          break;
        }
      }
    }
  }

  for (int it = 0; it < opt.max_newton; ++it) {
    Vec slack;
    const double fx = pot.eval(x, &slack);
    if (!std::isfinite(fx)) throw SolveError("barrier: iterate left the domain");
    Vec g = pot.grad(x, slack);

    Vec dx(p.dim), w(me);
    if (use_blocks) {
      // M dx + E^T w = g,  E dx = 0 with M block-diagonal:
      // S w = E M^-1 g,  S = E M^-1 E^T,  dx = M^-1 (g - E^T w).
      const int nb = static_cast<int>(p.blocks.size());
      std::vector<Eigen::LDLT<Mat>> facts(nb);
      Mat minv_et = Mat::Zero(p.dim, me);
      Vec minv_g(p.dim);
      Mat dense_hess;
      if (!p.hessian_block) dense_hess = p.objective->hessian(x);
      for (int bi = 0; bi < nb; ++bi) {
        const Block& b = p.blocks[bi];
        Mat hb = p.hessian_block
                     ? p.hessian_block(bi, x)
                     : Mat(dense_hess.block(b.offset, b.offset, b.size, b.size));
        Mat m = -pot.t * hb;
        for (int k : rows_of_block[bi]) {
          Vec gk(b.size);
          for (int j = 0; j < b.size; ++j) gk[j] = p.G(k, b.offset + j);
          m += gk * gk.transpose() / (slack[k] * slack[k]);
        }
        m.diagonal().array() += 1e-13 * (1.0 + m.diagonal().cwiseAbs().maxCoeff());
        facts[bi].compute(m);
        minv_g.segment(b.offset, b.size) =
            facts[bi].solve(g.segment(b.offset, b.size));
        if (me > 0)
          minv_et.middleRows(b.offset, b.size) = facts[bi].solve(
              Mat(p.E.middleCols(b.offset, b.size).transpose()));
      }
      if (me > 0) {
        Mat s = p.E * minv_et;
        w = s.ldlt().solve(p.E * minv_g);
        for (int bi = 0; bi < nb; ++bi) {
          const Block& b = p.blocks[bi];
          dx.segment(b.offset, b.size) =
              minv_g.segment(b.offset, b.size) -
              minv_et.middleRows(b.offset, b.size) * w;
        }
      } else {
        dx = minv_g;
        w.resize(0);
      }
    } else {
      Mat m = -pot.t * p.objective->hessian(x);
      for (int k = 0; k < p.G.rows(); ++k) {
        Vec gk = p.G.row(k).transpose();
        m += gk * gk.transpose() / (slack[k] * slack[k]);
      }
      m.diagonal().array() += 1e-13 * (1.0 + m.diagonal().cwiseAbs().maxCoeff());
      if (me > 0) {
        Mat kkt = Mat::Zero(p.dim + me, p.dim + me);
        kkt.topLeftCorner(p.dim, p.dim) = m;
        kkt.topRightCorner(p.dim, me) = p.E.transpose();
        kkt.bottomLeftCorner(me, p.dim) = p.E;
        Vec rhs = Vec::Zero(p.dim + me);
        rhs.head(p.dim) = g;
        Vec sol = kkt.ldlt().solve(rhs);
        dx = sol.head(p.dim);
        w = sol.tail(me);
      } else {
        dx = m.ldlt().solve(g);
        w.resize(0);
      }
    }

    const double decrement2 = g.dot(dx);
    res.x = x;
    res.w = w;
    if (decrement2 / 2.0 <= opt.newton_tol) {
      res.converged = true;
      return res;
    }

    // Backtracking line search on the potential.
    double step = 1.0;
    const double fx0 = fx;
    int ls = 0;
    while (ls++ < 80) {
      Vec cand = x + step * dx;
      const double fc = pot.eval(cand);
      if (std::isfinite(fc) && fc >= fx0 + opt.ls_alpha * step * decrement2) break;
      step *= opt.ls_beta;
    }
    if (ls >= 80) {
      // No progress possible; treat current point as centered.
      res.converged = decrement2 / 2.0 <= 1e-6;
      return res;
    }
    x += step * dx;
  }
  res.converged = false;
  return res;
}

Vec least_squares_equality_point(const Mat& e, const Vec& d, int dim) {
  if (e.rows() == 0) return Vec::Zero(dim);
  Vec x = e.colPivHouseholderQr().solve(d);
  if ((e * x - d).cwiseAbs().maxCoeff() > 1e-8)
    throw InfeasibleError("barrier: equality system inconsistent");
  return x;
}

// True when blocks are sorted, disjoint, and tile [0, dim) exactly.
bool blocks_tile(const SmoothProgram& p) {
  int at = 0;
  for (const Block& b : p.blocks) {
    if (b.offset != at || b.size <= 0) return false;
    at += b.size;
  }
  return at == p.dim;
}

// Phase-1: find a strictly feasible point, or classify the program.
// Aux program with a slack variable tau per block (or one global tau):
// max -sum tau_b  s.t.  g_k x - tau_{b(k)} <= h_k,  tau_b >= -1,  E x = d.
// A strict interior exists iff some tau_b can go below 0 for every b; the
// cap at -1 keeps the aux objective bounded. The per-block variant keeps
// the Newton system block-separable (tau_b is appended inside its block);
// its sum objective can in principle sacrifice one block, so a failed
// block attempt falls back to the single-tau variant before classifying.
Vec phase_one(const SmoothProgram& p, const BarrierOptions& opt,
              bool single_tau) {
  const int mi = static_cast<int>(p.G.rows());
  const bool use_blocks = !single_tau && blocks_usable(p) && blocks_tile(p);
  const int nb = use_blocks ? static_cast<int>(p.blocks.size()) : 1;
  const int dim = p.dim + nb;

  auto block_of_row = [&](int k) {
    if (!use_blocks) return 0;
    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
      const Block& b = p.blocks[bi];
      for (int j = 0; j < b.size; ++j)
        if (p.G(k, b.offset + j) != 0.0) return static_cast<int>(bi);
    }
    return 0;
  };

  // Variable layout: each block becomes (x_block..., tau_b) so rows stay
  // block-local. Single-tau layout is (x..., tau).
  std::vector<int> x_map(p.dim);
  std::vector<int> tau_map(nb);
  std::vector<Block> aux_blocks;
  if (use_blocks) {
    for (int bi = 0; bi < nb; ++bi) {
      const Block& b = p.blocks[bi];
      for (int j = 0; j < b.size; ++j) x_map[b.offset + j] = b.offset + bi + j;
      tau_map[bi] = b.offset + bi + b.size;
      aux_blocks.push_back({b.offset + bi, b.size + 1});
    }
  } else {
    for (int j = 0; j < p.dim; ++j) x_map[j] = j;
    tau_map[0] = p.dim;
  }

  SmoothProgram aux;
  aux.dim = dim;
  aux.blocks = aux_blocks;
  aux.G = Mat::Zero(mi + nb, dim);
  aux.h = Vec::Zero(mi + nb);
  for (int k = 0; k < mi; ++k) {
    for (int j = 0; j < p.dim; ++j) aux.G(k, x_map[j]) = p.G(k, j);
    aux.G(k, tau_map[block_of_row(k)]) = -1.0;
    aux.h[k] = p.h[k];
  }
  for (int b = 0; b < nb; ++b) {
    aux.G(mi + b, tau_map[b]) = -1.0;
    aux.h[mi + b] = 1.0;  // tau_b >= -1
  }
  aux.E = Mat::Zero(p.E.rows(), dim);
  for (int r = 0; r < p.E.rows(); ++r)
    for (int j = 0; j < p.dim; ++j) aux.E(r, x_map[j]) = p.E(r, j);
  aux.d = p.d;

  Vec c = Vec::Zero(dim);
  for (int b = 0; b < nb; ++b) c[tau_map[b]] = -1.0;
  LinearOracle oracle(c);
  aux.objective = &oracle;
  if (use_blocks) {
    std::vector<Block> sizes = aux.blocks;
    aux.hessian_block = [sizes](int bi, const Vec&) {
      return Mat::Zero(sizes[bi].size, sizes[bi].size);
    };
  }

  Vec x0 = least_squares_equality_point(p.E, p.d, p.dim);
  Vec tau0 = Vec::Zero(nb);
  for (int k = 0; k < mi; ++k) {
    const double viol = p.G.row(k).dot(x0) - p.h[k];
    tau0[block_of_row(k)] = std::max(tau0[block_of_row(k)], viol);
  }
  Vec start = Vec::Zero(dim);
  for (int j = 0; j < p.dim; ++j) start[x_map[j]] = x0[j];
  for (int b = 0; b < nb; ++b) start[tau_map[b]] = tau0[b] + 1.0;
  aux.strictly_feasible_start = start;

  auto tau_of = [&](const Vec& z) {
    double mx = -kInf;
    for (int b = 0; b < nb; ++b) mx = std::max(mx, z[tau_map[b]]);
    return mx;
  };
  BarrierOptions phase_opt = opt;
  phase_opt.stop_early = [&](const Vec& z) { return tau_of(z) < -0.5; };
  KktSolution sol = barrier_solve(aux, 1e-9, phase_opt);
  const double tau_max = tau_of(sol.x);
  if (tau_max < -1e-8) {
    Vec x(p.dim);
    for (int j = 0; j < p.dim; ++j) x[j] = sol.x[x_map[j]];
    return x;
  }
  if (use_blocks) return phase_one(p, opt, /*single_tau=*/true);
  if (tau_max > 1e-9)
    throw InfeasibleError("barrier: phase-1 optimum above tolerance");
  throw NoInteriorError("barrier: feasible set has no strict interior");
}

}  // namespace

KktSolution barrier_solve(const SmoothProgram& program, double tol,
                          const BarrierOptions& options) {
  if (!program.objective) throw std::invalid_argument("barrier: missing objective");
  const int mi = static_cast<int>(program.G.rows());
  const int me = static_cast<int>(program.E.rows());

  Vec x;
  if (program.strictly_feasible_start) {
    x = *program.strictly_feasible_start;
  } else if (mi == 0) {
    x = least_squares_equality_point(program.E, program.d, program.dim);
  } else {
    x = phase_one(program, options, /*single_tau=*/false);
  }
  {
    Potential probe{program, options.t0};
    if (!std::isfinite(probe.eval(x)))
      throw SolveError("barrier: start outside the objective domain");
  }

  const bool use_blocks = blocks_usable(program);
  double t = options.t0;
  Vec w = Vec::Zero(me);
  double last_obj = -kInf;
  int outer = 0;
  while (true) {
    Potential pot{program, t};
    NewtonResult nr = newton_center(program, pot, x, options, use_blocks);
    if (!nr.converged && outer == 0)
      throw MaxIterError("barrier: Newton failed to center");
    x = nr.x;
    w = nr.w;
    const double obj = program.objective->value(x);
    if (!std::isfinite(obj)) throw UnboundedError("barrier: objective diverged");
    last_obj = obj;
    if (options.stop_early && options.stop_early(x)) break;
    if (mi == 0) break;
    if (static_cast<double>(mi) / t < tol) break;
    if (++outer >= options.max_outer)
      throw MaxIterError("barrier: outer iteration limit");
    t *= options.t_multiplier;
  }

  KktSolution out;
  out.x = x;
  out.mu = Vec::Zero(mi);
  if (mi > 0) {
    Vec slack = program.h - program.G * x;
    for (int k = 0; k < mi; ++k) out.mu[k] = 1.0 / (t * slack[k]);
  }
  out.nu = me > 0 ? Vec(w / t) : Vec(0);
  out.objective = last_obj;
  out.barrier_parameter = t;

  Vec stat = program.objective->gradient(x);
  if (mi > 0) stat -= program.G.transpose() * out.mu;
  if (me > 0) stat -= program.E.transpose() * out.nu;
  out.stationarity_residual = stat.cwiseAbs().maxCoeff();
  double feas = 0.0;
  if (mi > 0) feas = std::max(feas, (program.G * x - program.h).maxCoeff());
  if (me > 0) feas = std::max(feas, (program.E * x - program.d).cwiseAbs().maxCoeff());
  out.feasibility_residual = std::max(0.0, feas);
  double comp = 0.0;
  if (mi > 0) {
    Vec slack = program.h - program.G * x;
    for (int k = 0; k < mi; ++k)
      comp = std::max(comp, std::abs(out.mu[k] * slack[k]));
  }
  out.complementarity_residual = comp;
  out.converged = true;
  return out;
}

double finite_difference_check(const ObjectiveOracle& oracle, const Vec& x,
                               double h) {
  const int n = static_cast<int>(x.size());
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };
  const Vec g = oracle.gradient(x);
  const Mat hess = oracle.hessian(x);
  double worst = 0.0;
  for (int j = 0; j < n; ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const double vp = oracle.value(xp), vm = oracle.value(xm);
    if (!std::isfinite(vp) || !std::isfinite(vm))
      throw SolveError("finite_difference_check: oracle undefined at probe point");
    worst = std::max(worst, rel((vp - vm) / (2 * h), g[j]));
    const Vec gp = oracle.gradient(xp), gm = oracle.gradient(xm);
    for (int k = 0; k < n; ++k)
      worst = std::max(worst, rel((gp[k] - gm[k]) / (2 * h), hess(j, k)));
  }
  return worst;
}

double spectral_radius(const Mat& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("spectral_radius: matrix must be square");
  const int n = static_cast<int>(m.rows());
  if (n == 0) return 0.0;
  Vec v = Vec::Ones(n) / std::sqrt(static_cast<double>(n));
  double lambda = 0.0;
  for (int it = 0; it < 200000; ++it) {
    Vec mv = m * v;
    const double norm = mv.norm();
    if (norm == 0.0) return 0.0;
    v = mv / norm;
    const double next = v.dot(m * v);
    if (std::abs(next - lambda) <= 1e-8 * std::max(1.0, std::abs(next)) && it > 2) {
      return next;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace fisher
