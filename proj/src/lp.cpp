#include "fisher/kernels.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace fisher {

namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kCostTol = 1e-9;
constexpr double kFeasTol = 1e-9;

// Dense tableau simplex for  min c᾿z  s.t.  A z = b, z >= 0, b >= 0.
// Bland's smallest-index rule for both entering and leaving variables.
class Simplex {
 public:
  Simplex(const Mat& a, const Vec& b) : rows_(static_cast<int>(a.rows())) {
    tab_.resize(rows_, a.cols() + 1);
    tab_.leftCols(a.cols()) = a;
    tab_.col(a.cols()) = b;
    basis_.assign(rows_, -1);
  }

  int cols() const { return static_cast<int>(tab_.cols()) - 1; }
  double rhs(int i) const { return tab_(i, cols()); }
  const std::vector<int>& basis() const { return basis_; }

  void set_basis(int row, int col) { basis_[row] = col; }

  void pivot(int row, int col) {
    tab_.row(row) /= tab_(row, col);
    for (int i = 0; i < rows_; ++i) {
      if (i == row) continue;
      const double f = tab_(i, col);
      if (f != 0.0) tab_.row(i) -= f * tab_.row(row);
    }
    basis_[row] = col;
  }

  // Minimizes cost over columns [0, ncols). Returns false on unbounded.
  bool run(const Vec& cost, int ncols) {
    while (true) {
      Vec y = dual_for(cost);
      int enter = -1;
      for (int j = 0; j < ncols; ++j) {
        if (is_basic(j)) continue;
        const double reduced = cost[j] - y.dot(tab_col_original(j));
        if (reduced < -kCostTol) {
          enter = j;
          break;  // Bland: smallest index
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < rows_; ++i) {
        const double a = tab_(i, enter);
        if (a > kPivotTol) {
          const double ratio = rhs(i) / a;
          if (ratio < best_ratio - 1e-12 ||
              (ratio < best_ratio + 1e-12 &&
               (leave < 0 || basis_[i] < basis_[leave]))) {
            best_ratio = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
  }

  // y solving B᾿ y = c_B for the current basis, against the CURRENT tableau's
  // original columns; used for reduced costs so the tableau objective row is
  // never stored (avoids drift).
  Vec dual_for(const Vec& cost) const {
    Mat bt(rows_, rows_);
    Vec cb(rows_);
    for (int i = 0; i < rows_; ++i) {
      bt.col(i) = original_.col(basis_[i]);
      cb[i] = cost[basis_[i]];
    }
    return bt.transpose().fullPivLu().solve(cb);
  }

  bool is_basic(int col) const {
    for (int b : basis_)
      if (b == col) return true;
    return false;
  }

  Vec tab_col_original(int j) const { return original_.col(j); }

  void snapshot_original() { original_ = tab_.leftCols(cols()); }

  Vec solution(int nvars) const {
    Vec z = Vec::Zero(nvars);
    for (int i = 0; i < rows_; ++i)
      if (basis_[i] < nvars) z[basis_[i]] = rhs(i);
    return z;
  }

  // Pivot basic artificials (columns >= first_artificial) out of the basis
  // where possible; rows stuck with a basic artificial are redundant and
  // zeroed against further participation by leaving them (their rhs is 0).
  void drive_out_artificials(int first_artificial) {
    for (int i = 0; i < rows_; ++i) {
      if (basis_[i] < first_artificial) continue;
      int col = -1;
      for (int j = 0; j < first_artificial; ++j) {
        if (!is_basic(j) && std::abs(tab_(i, j)) > 1e-8) {
          col = j;
          break;
        }
      }
      if (col >= 0) pivot(i, col);
    }
  }

  int rows_;
  Mat tab_;
  Mat original_;  // constraint columns as of the current phase start
  std::vector<int> basis_;
};

}  // namespace

KktSolution lp_solve(const Vec& c, const Mat& G, const Vec& h, const Mat& E,
                     const Vec& d) {
  const int nv = static_cast<int>(c.size());
  const int mi = static_cast<int>(G.rows());
  const int me = static_cast<int>(E.rows());
  const int rows = mi + me;

  // Standard form: z = (x+, x-, s), A z = b, z >= 0, maximizing c᾿x ==
  // minimizing cost᾿z.
  const int nz = 2 * nv + mi;
  Mat a = Mat::Zero(rows, nz);
  Vec b(rows);
  Vec row_sign = Vec::Ones(rows);
  if (mi > 0) {
    a.block(0, 0, mi, nv) = G;
    a.block(0, nv, mi, nv) = -G;
    a.block(0, 2 * nv, mi, mi) = Mat::Identity(mi, mi);
    b.head(mi) = h;
  }
  if (me > 0) {
    a.block(mi, 0, me, nv) = E;
    a.block(mi, nv, me, nv) = -E;
    b.tail(me) = d;
  }
  for (int i = 0; i < rows; ++i) {
    if (b[i] < 0.0) {
      a.row(i) = -a.row(i);
      b[i] = -b[i];
      row_sign[i] = -1.0;
    }
  }

  Vec cost = Vec::Zero(nz);
  cost.head(nv) = -c;
  cost.segment(nv, nv) = c;

  // Phase 1: artificial variable per row.
  Mat a1(rows, nz + rows);
  a1.leftCols(nz) = a;
  a1.rightCols(rows) = Mat::Identity(rows, rows);
  Simplex sx(a1, b);
  sx.snapshot_original();
  for (int i = 0; i < rows; ++i) sx.set_basis(i, nz + i);
  Vec cost1 = Vec::Zero(nz + rows);
  cost1.tail(rows).setOnes();
  if (!sx.run(cost1, nz + rows))
    throw SolveError("lp_solve: phase-1 unbounded (internal error)");
  double infeas = 0.0;
  for (int i = 0; i < rows; ++i)
    if (sx.basis()[i] >= nz) infeas += sx.rhs(i);
  if (infeas > kFeasTol) throw InfeasibleError("lp_solve: infeasible");
  sx.drive_out_artificials(nz);

  // Phase 2 over the original columns only.
  Vec cost2 = Vec::Zero(nz + rows);
  cost2.head(nz) = cost;
  if (!sx.run(cost2, nz)) throw UnboundedError("lp_solve: unbounded");

  const Vec z = sx.solution(nz);
  Vec x = z.head(nv) - z.segment(nv, nv);

  // Duals: y = B^-T c_B over standardized rows; undo row sign flips.
  Vec y = sx.dual_for(cost2);
  KktSolution out;
  out.x = x;
  out.mu = Vec::Zero(mi);
  out.nu = Vec::Zero(me);
  for (int i = 0; i < mi; ++i) out.mu[i] = std::max(0.0, -row_sign[i] * y[i]);
  for (int i = 0; i < me; ++i) out.nu[i] = -row_sign[mi + i] * y[mi + i];
  out.objective = c.dot(x);
  out.barrier_parameter = 0.0;

  // Recompute residuals from scratch.
  Vec stat = c;
  if (mi > 0) stat -= G.transpose() * out.mu;
  if (me > 0) stat -= E.transpose() * out.nu;
  out.stationarity_residual = stat.cwiseAbs().maxCoeff();
  double feas = 0.0;
  if (mi > 0) feas = std::max(feas, (G * x - h).maxCoeff());
  if (me > 0) feas = std::max(feas, (E * x - d).cwiseAbs().maxCoeff());
  out.feasibility_residual = std::max(0.0, feas);
  double comp = 0.0;
  for (int i = 0; i < mi; ++i)
    comp = std::max(comp, std::abs(out.mu[i] * (h[i] - G.row(i).dot(x))));
  out.complementarity_residual = comp;
  out.converged = true;
  return out;
}

}  // namespace fisher
