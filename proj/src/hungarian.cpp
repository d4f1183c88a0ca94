// Dense linear assignment: shortest augmenting paths with row/column
// potentials (Kuhn-Munkres in the Jonker-Volgenant formulation), followed by
// a pass that picks the lexicographically smallest optimal mapping from the
// equality subgraph of the final duals.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "protosphere/assignment.hpp"
#include "protosphere/error.hpp"

namespace protosphere {

namespace {

struct DualSolution {
  std::vector<std::size_t> row_to_col;
  std::vector<double> u;  // row potentials
  std::vector<double> v;  // column potentials
};

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Row-major so the inner scan over columns walks contiguous memory.
DualSolution solve_duals(const RowMajor& a) {
  const auto n = static_cast<std::size_t>(a.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr std::size_t none = 0;

  // 1-based; index 0 is the virtual source column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, none), way(n + 1, none);
  std::vector<char> used(n + 1);

  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      const double* row = a.data() + (i0 - 1) * n;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != none);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  DualSolution sol;
  sol.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) sol.row_to_col[p[j] - 1] = j - 1;
  sol.u.assign(u.begin() + 1, u.end());
  sol.v.assign(v.begin() + 1, v.end());
  return sol;
}

class LexRefiner {
 public:
  LexRefiner(const Eigen::MatrixXd& a, const DualSolution& sol)
      : n_(static_cast<std::size_t>(a.rows())), row_to_col_(sol.row_to_col), col_to_row_(n_), tight_(n_) {
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    const double eps = 1e-10 * scale;
    for (std::size_t j = 0; j < n_; ++j) col_to_row_[row_to_col_[j]] = j;
    for (std::size_t j = 0; j < n_; ++j) {
      for (std::size_t k = 0; k < n_; ++k) {
        const double reduced =
            a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) - sol.u[j] - sol.v[k];
        if (reduced <= eps) tight_[j].push_back(k);
      }
    }
  }

  std::vector<std::size_t> run() {
    visited_.assign(n_, 0);
    for (std::size_t j = 0; j < n_; ++j) {
      for (const auto k : tight_[j]) {
        if (k >= row_to_col_[j]) break;
        const auto owner = col_to_row_[k];
        if (owner < j) continue;  // held by a row already fixed
        if (try_take(j, k)) break;
      }
    }
    return row_to_col_;
  }

 private:
  // Give column `k` to row `j`; the row losing `k` must reach the column `j`
  // releases through an alternating path among rows > j.
  bool try_take(std::size_t j, std::size_t k) {
    const auto released = row_to_col_[j];
    const auto displaced = col_to_row_[k];
    std::fill(visited_.begin(), visited_.end(), 0);
    visited_[k] = 1;
    target_ = released;
    current_row_ = j;
    if (!augment(displaced)) return false;
    row_to_col_[j] = k;
    col_to_row_[k] = j;
    return true;
  }

  bool augment(std::size_t row) {
    for (const auto col : tight_[row]) {
      if (visited_[col]) continue;
      visited_[col] = 1;
      if (col == target_) {
        row_to_col_[row] = col;
        col_to_row_[col] = row;
        return true;
      }
      const auto owner = col_to_row_[col];
      if (owner <= current_row_) continue;
      if (augment(owner)) {
        row_to_col_[row] = col;
        col_to_row_[col] = row;
        return true;
      }
    }
    return false;
  }

  std::size_t n_;
  std::vector<std::size_t> row_to_col_;
  std::vector<std::size_t> col_to_row_;
  std::vector<std::vector<std::size_t>> tight_;
  std::vector<char> visited_;
  std::size_t target_ = 0;
  std::size_t current_row_ = 0;
};

}  // namespace

AssignmentMapping hungarian_solve(const CostMatrix& cost) {
  const auto& a = cost.entries();
  const auto duals = solve_duals(RowMajor(a));
  return AssignmentMapping(LexRefiner(a, duals).run());
}

}  // namespace protosphere
