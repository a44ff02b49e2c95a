// Bounded primal simplex on a dense tableau.
//
// Standard form: A x - s = 0 with bounds on every structural x and every row
// activity s. Rows whose initial activity violates the row bounds get an
// artificial column; phase 1 minimises the artificial sum, phase 2 the user
// objective. Pricing is Dantzig with a switch to Bland's rule after a run of
// degenerate pivots. After bound changes an optimal tableau is re-optimized
// with the dual simplex (LpWorkspace).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>

#include "gridcoord/error.hpp"
#include "gridcoord/milp.hpp"
#include "lp_workspace.hpp"

namespace gridcoord::milp {

namespace {

enum class VarState : std::uint8_t { Basic, AtLower, AtUpper, Free };

constexpr double kPivotTol = 1e-9;
constexpr double kOptTol = 1e-9;
constexpr double kDropTol = 1e-14;
constexpr int kDegenerateSwitch = 50;

}  // namespace

class DenseSimplex {
 public:
  DenseSimplex(const Model& model, std::span<const double> lower, std::span<const double> upper, const Options& opt)
      : model_(model), opt_(opt) {
    n_ = model.num_variables();
    lower_.assign(lower.begin(), lower.end());
    upper_.assign(upper.begin(), upper.end());
  }

  Solution run() {
    Solution sol;
    for (std::size_t j = 0; j < n_; ++j) {
      if (lower_[j] > upper_[j] + opt_.feas_tol) {
        sol.status = Status::Infeasible;
        return sol;
      }
      if (lower_[j] > upper_[j]) upper_[j] = lower_[j];
    }
    if (!setup()) {
      sol.status = Status::Infeasible;
      return sol;
    }
    limit_ = 50 * (m_ + n_) + 100;

    if (n_art_ > 0) {
      std::vector<double> c1(ncols_, 0.0);
      for (std::size_t j = n_ + m_; j < ncols_; ++j) c1[j] = 1.0;
      const Status st = iterate(c1);
      if (st == Status::IterLimit) return finish(Status::IterLimit);
      double infeas = 0.0;
      for (std::size_t j = n_ + m_; j < ncols_; ++j) infeas += std::max(0.0, x_[j]);
      if (infeas > opt_.feas_tol * static_cast<double>(n_art_ + 1)) return finish(Status::Infeasible);
      for (std::size_t j = n_ + m_; j < ncols_; ++j) {
        upper_col_[j] = 0.0;
        if (state_[j] != VarState::Basic) {
          x_[j] = 0.0;
          state_[j] = VarState::AtLower;
        }
      }
    }

    c2_.assign(ncols_, 0.0);
    const double sign = model_.objective_sense() == ObjSense::Maximize ? -1.0 : 1.0;
    for (const auto& t : model_.objective_terms()) c2_[t.var] += sign * t.coef;
    const Status st = iterate(c2_);
    warm_ = st == Status::Optimal;
    return finish(st);
  }

  /// Re-optimizes from the current basis under new structural bounds.
  /// nullopt when the basis cannot be reused or the result fails the check.
  std::optional<Solution> resolve(std::span<const double> lower, std::span<const double> upper) {
    if (!warm_) return std::nullopt;
    for (std::size_t j = 0; j < n_; ++j) {
      if (lower[j] > upper[j] + opt_.feas_tol) {
        Solution sol;
        sol.status = Status::Infeasible;
        return sol;
      }
    }
    for (std::size_t j = 0; j < n_; ++j) {
      lower_[j] = lower_col_[j] = lower[j];
      upper_[j] = upper_col_[j] = std::max(lower[j], upper[j]);
    }
    // nonbasic columns go to the bound that keeps the reduced cost dual feasible
    for (std::size_t j = 0; j < ncols_; ++j) {
      if (state_[j] == VarState::Basic) continue;
      const double lo = lower_col_[j], hi = upper_col_[j];
      if (state_[j] == VarState::Free) {
        if (std::isfinite(lo) || std::isfinite(hi) || std::abs(d_[j]) > kOptTol) return std::nullopt;
        continue;
      }
      const bool lo_ok = std::isfinite(lo) && (d_[j] >= -kOptTol || lo == hi);
      const bool hi_ok = std::isfinite(hi) && d_[j] <= kOptTol;
      if (state_[j] == VarState::AtLower ? lo_ok : !hi_ok && lo_ok) {
        state_[j] = VarState::AtLower;
        x_[j] = lo;
      } else if (hi_ok) {
        state_[j] = VarState::AtUpper;
        x_[j] = hi;
      } else {
        return std::nullopt;
      }
    }
    for (std::size_t i = 0; i < m_; ++i) {
      const double* row = &tab_[i * ncols_];
      double v = 0.0;
      for (std::size_t j = 0; j < ncols_; ++j)
        if (row[j] != 0.0 && state_[j] != VarState::Basic) v -= row[j] * x_[j];
      x_[head_[i]] = v;
    }
    iterations_ = 0;
    limit_ = 50 * (m_ + n_) + 100;
    Status st = dual_iterate();
    if (st == Status::Optimal) st = iterate(c2_);
    // a warm infeasibility proof can rest on a drifted tableau row, so only a cold solve may report it
    if (st != Status::Optimal) {
      warm_ = false;
      return std::nullopt;
    }
    Solution sol = finish(st);
    if (st == Status::Optimal && violation(sol.values) > 10.0 * opt_.feas_tol) {
      warm_ = false;
      return std::nullopt;
    }
    return sol;
  }

 private:
  double& t(std::size_t i, std::size_t j) { return tab_[i * ncols_ + j]; }

  bool setup() {
    // drop empty rows, checking they are satisfiable at zero activity
    for (std::size_t r = 0; r < model_.num_constraints(); ++r) {
      const auto& row = model_.constraints()[r];
      if (row.terms.empty()) {
        const bool ok = (row.sense == Sense::LessEqual && row.rhs >= -opt_.feas_tol) ||
                        (row.sense == Sense::GreaterEqual && row.rhs <= opt_.feas_tol) ||
                        (row.sense == Sense::Equal && std::abs(row.rhs) <= opt_.feas_tol);
        if (!ok) return false;
        continue;
      }
      rows_.push_back(r);
    }
    m_ = rows_.size();

    // structural start point
    x_.assign(n_ + m_, 0.0);
    state_.assign(n_ + m_, VarState::AtLower);
    for (std::size_t j = 0; j < n_; ++j) {
      if (std::isfinite(lower_[j])) {
        x_[j] = lower_[j];
        state_[j] = VarState::AtLower;
      } else if (std::isfinite(upper_[j])) {
        x_[j] = upper_[j];
        state_[j] = VarState::AtUpper;
      } else {
        x_[j] = 0.0;
        state_[j] = VarState::Free;
      }
    }

    lower_col_ = lower_;
    upper_col_ = upper_;
    std::vector<double> activity(m_, 0.0);
    std::vector<int> sigma(m_, 0);
    for (std::size_t i = 0; i < m_; ++i) {
      const auto& row = model_.constraints()[rows_[i]];
      double a = 0.0;
      for (const auto& term : row.terms) a += term.coef * x_[term.var];
      activity[i] = a;
      const double lo = row.sense == Sense::LessEqual ? -kInf : row.rhs;
      const double hi = row.sense == Sense::GreaterEqual ? kInf : row.rhs;
      lower_col_.push_back(lo);
      upper_col_.push_back(hi);
      if (a < lo) sigma[i] = 1;
      else if (a > hi) sigma[i] = -1;
    }
    n_art_ = static_cast<std::size_t>(std::count_if(sigma.begin(), sigma.end(), [](int s) { return s != 0; }));
    ncols_ = n_ + m_ + n_art_;
    tab_.assign(m_ * ncols_, 0.0);
    head_.assign(m_, 0);
    x_.resize(ncols_, 0.0);
    state_.resize(ncols_, VarState::AtLower);
    lower_col_.resize(ncols_, 0.0);
    upper_col_.resize(ncols_, kInf);

    std::size_t art = n_ + m_;
    for (std::size_t i = 0; i < m_; ++i) {
      const auto& row = model_.constraints()[rows_[i]];
      const std::size_t slack = n_ + i;
      if (sigma[i] == 0) {
        for (const auto& term : row.terms) t(i, term.var) = -term.coef;
        t(i, slack) = 1.0;
        head_[i] = slack;
        state_[slack] = VarState::Basic;
        x_[slack] = activity[i];
      } else {
        const double s = static_cast<double>(sigma[i]);
        const double bound = sigma[i] > 0 ? lower_col_[slack] : upper_col_[slack];
        for (const auto& term : row.terms) t(i, term.var) = s * term.coef;
        t(i, slack) = -s;
        t(i, art) = 1.0;
        x_[slack] = bound;
        state_[slack] = sigma[i] > 0 ? VarState::AtLower : VarState::AtUpper;
        head_[i] = art;
        state_[art] = VarState::Basic;
        x_[art] = s * (bound - activity[i]);
        ++art;
      }
    }
    return true;
  }

  Status iterate(const std::vector<double>& cost) {
    // reduced costs d_j = c_j - c_B^T T_j
    d_ = cost;
    for (std::size_t i = 0; i < m_; ++i) {
      const double cb = cost[head_[i]];
      if (cb == 0.0) continue;
      const double* row = &tab_[i * ncols_];
      for (std::size_t j = 0; j < ncols_; ++j) d_[j] -= cb * row[j];
    }
    for (std::size_t i = 0; i < m_; ++i) d_[head_[i]] = 0.0;

    int degenerate_run = 0;
    std::vector<std::size_t> nz;
    while (true) {
      if (iterations_ >= limit_) return Status::IterLimit;
      const bool bland = degenerate_run >= kDegenerateSwitch;

      // pricing
      std::size_t enter = ncols_;
      double dir = 0.0, best = 0.0;
      for (std::size_t j = 0; j < ncols_; ++j) {
        const VarState s = state_[j];
        if (s == VarState::Basic) continue;
        if (s != VarState::Free && upper_col_[j] - lower_col_[j] <= 0.0) continue;
        double dj = d_[j], cand_dir = 0.0;
        if ((s == VarState::AtLower || s == VarState::Free) && dj < -kOptTol) cand_dir = 1.0;
        else if ((s == VarState::AtUpper || s == VarState::Free) && dj > kOptTol) cand_dir = -1.0;
        if (cand_dir == 0.0) continue;
        if (bland) {
          enter = j;
          dir = cand_dir;
          break;
        }
        if (std::abs(dj) > best) {
          best = std::abs(dj);
          enter = j;
          dir = cand_dir;
        }
      }
      if (enter == ncols_) return Status::Optimal;

      // ratio test
      double step = upper_col_[enter] - lower_col_[enter];
      if (!std::isfinite(step)) step = kInf;
      std::size_t leave_row = m_;
      double leave_alpha = 0.0;
      for (std::size_t i = 0; i < m_; ++i) {
        const double tij = tab_[i * ncols_ + enter];
        if (std::abs(tij) <= kPivotTol) continue;
        const double alpha = -tij * dir;
        const std::size_t b = head_[i];
        double lim;
        if (alpha > 0.0) {
          if (!std::isfinite(upper_col_[b])) continue;
          lim = (upper_col_[b] - x_[b]) / alpha;
        } else {
          if (!std::isfinite(lower_col_[b])) continue;
          lim = (lower_col_[b] - x_[b]) / alpha;
        }
        lim = std::max(lim, 0.0);
        bool take = false;
        if (lim < step - 1e-12) take = true;
        else if (lim <= step + 1e-12 && leave_row != m_) {
          take = bland ? head_[i] < head_[leave_row] : std::abs(alpha) > std::abs(leave_alpha);
        }
        if (take) {
          step = lim;
          leave_row = i;
          leave_alpha = alpha;
        }
      }
      if (!std::isfinite(step)) return Status::Unbounded;
      ++iterations_;
      degenerate_run = step <= 1e-12 ? degenerate_run + 1 : 0;

      // move
      if (step > 0.0) {
        x_[enter] += dir * step;
        for (std::size_t i = 0; i < m_; ++i) {
          const double tij = tab_[i * ncols_ + enter];
          if (tij != 0.0) x_[head_[i]] -= tij * dir * step;
        }
      }

      if (leave_row == m_) {
        // bound flip
        state_[enter] = dir > 0 ? VarState::AtUpper : VarState::AtLower;
        x_[enter] = dir > 0 ? upper_col_[enter] : lower_col_[enter];
        continue;
      }

      const std::size_t leaving = head_[leave_row];
      if (leave_alpha > 0.0) {
        x_[leaving] = upper_col_[leaving];
        state_[leaving] = VarState::AtUpper;
      } else {
        x_[leaving] = lower_col_[leaving];
        state_[leaving] = VarState::AtLower;
      }
      pivot(leave_row, enter, nz);
      head_[leave_row] = enter;
      state_[enter] = VarState::Basic;
    }
  }

  /// Bounded dual simplex: the basis stays dual feasible while the most
  /// violated basic variable leaves at its bound.
  Status dual_iterate() {
    std::vector<std::size_t> nz;
    while (true) {
      if (iterations_ >= limit_) return Status::IterLimit;
      std::size_t r = m_;
      double worst = opt_.feas_tol * 0.1;
      for (std::size_t i = 0; i < m_; ++i) {
        const std::size_t b = head_[i];
        const double viol = std::max(lower_col_[b] - x_[b], x_[b] - upper_col_[b]);
        if (viol > worst) {
          worst = viol;
          r = i;
        }
      }
      if (r == m_) return Status::Optimal;
      const std::size_t b = head_[r];
      const bool below = x_[b] < lower_col_[b];
      const double target = below ? lower_col_[b] : upper_col_[b];
      const double* row = &tab_[r * ncols_];

      std::size_t q = ncols_;
      double best_ratio = kInf, best_abs = 0.0;
      for (std::size_t j = 0; j < ncols_; ++j) {
        const VarState s = state_[j];
        if (s == VarState::Basic) continue;
        const double tij = row[j];
        if (std::abs(tij) <= kPivotTol) continue;
        if (s != VarState::Free && upper_col_[j] - lower_col_[j] <= 0.0) continue;
        // raising x_j moves x_b by -tij
        const bool up = (s == VarState::AtLower || s == VarState::Free) && (below ? tij < 0.0 : tij > 0.0);
        const bool down = (s == VarState::AtUpper || s == VarState::Free) && (below ? tij > 0.0 : tij < 0.0);
        if (!up && !down) continue;
        const double ratio = std::abs(d_[j]) / std::abs(tij);
        if (ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && std::abs(tij) > best_abs)) {
          best_ratio = ratio;
          best_abs = std::abs(tij);
          q = j;
        }
      }
      if (q == ncols_) {
        return Status::Infeasible;
      }

      const double dq = (target - x_[b]) / (-row[q]);
      x_[q] += dq;
      for (std::size_t i = 0; i < m_; ++i) {
        const double tiq = tab_[i * ncols_ + q];
        if (tiq != 0.0) x_[head_[i]] -= tiq * dq;
      }
      x_[b] = target;
      state_[b] = below ? VarState::AtLower : VarState::AtUpper;
      pivot(r, q, nz);
      head_[r] = q;
      state_[q] = VarState::Basic;
      ++iterations_;
    }
  }

  /// Largest row or bound violation of structural values under the current bounds.
  double violation(const std::vector<double>& x) const {
    double worst = 0.0;
    for (std::size_t j = 0; j < n_; ++j) worst = std::max({worst, lower_[j] - x[j], x[j] - upper_[j]});
    for (const auto& row : model_.constraints()) {
      double a = 0.0;
      for (const auto& term : row.terms) a += term.coef * x[term.var];
      if (row.sense != Sense::GreaterEqual) worst = std::max(worst, a - row.rhs);
      if (row.sense != Sense::LessEqual) worst = std::max(worst, row.rhs - a);
    }
    return worst;
  }

  void pivot(std::size_t r, std::size_t q, std::vector<std::size_t>& nz) {
    double* prow = &tab_[r * ncols_];
    const double inv = 1.0 / prow[q];
    nz.clear();
    for (std::size_t j = 0; j < ncols_; ++j) {
      if (prow[j] == 0.0) continue;
      prow[j] *= inv;
      if (std::abs(prow[j]) < kDropTol) prow[j] = 0.0;
      else nz.push_back(j);
    }
    prow[q] = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row = &tab_[i * ncols_];
      const double f = row[q];
      if (f == 0.0) continue;
      for (std::size_t j : nz) {
        double v = row[j] - f * prow[j];
        row[j] = std::abs(v) < kDropTol ? 0.0 : v;
      }
      row[q] = 0.0;
    }
    const double fd = d_[q];
    if (fd != 0.0) {
      for (std::size_t j : nz) d_[j] -= fd * prow[j];
      d_[q] = 0.0;
    }
  }

  Solution finish(Status st) {
    Solution sol;
    sol.status = st;
    sol.simplex_iterations = iterations_;
    if (st == Status::Optimal || st == Status::IterLimit) {
      sol.values.assign(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n_));
      for (std::size_t j = 0; j < n_; ++j) sol.values[j] = std::clamp(sol.values[j], lower_[j], upper_[j]);
      sol.objective = model_.objective_value(sol.values);
    }
    return sol;
  }

  const Model& model_;
  Options opt_;
  std::size_t n_ = 0, m_ = 0, n_art_ = 0, ncols_ = 0;
  std::vector<std::size_t> rows_;
  std::vector<double> lower_, upper_;          // structural bounds (overrides)
  std::vector<double> lower_col_, upper_col_;  // all columns
  std::vector<double> x_, d_, tab_, c2_;
  bool warm_ = false;
  std::vector<VarState> state_;
  std::vector<std::size_t> head_;
  std::uint64_t iterations_ = 0, limit_ = 0;
};

namespace {

constexpr std::uint64_t kRefreshEvery = 500;  // cold solves bound the accumulated round-off

}  // namespace

LpWorkspace::LpWorkspace(const Model& model, const Options& options) : model_(model), options_(options) {}
LpWorkspace::~LpWorkspace() = default;

Solution LpWorkspace::solve(std::span<const double> lower, std::span<const double> upper) {
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<Solution> sol;
  if (lp_ && since_refresh_ < kRefreshEvery) {
    sol = lp_->resolve(lower, upper);
    if (sol) {
      ++warm_;
      ++since_refresh_;
    }
  }
  if (!sol) {
    lp_ = std::make_unique<DenseSimplex>(model_, lower, upper, options_);
    sol = lp_->run();
    ++cold_;
    since_refresh_ = 0;
  }
  sol->wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return *sol;
}

Solution solve_lp_with_bounds(const Model& model, std::span<const double> lower, std::span<const double> upper,
                              const Options& options) {
  if (model.num_variables() == 0) throw Error(ErrorKind::DimensionMismatch, "solve_lp: model has no variables");
  if (lower.size() != model.num_variables() || upper.size() != model.num_variables())
    throw Error(ErrorKind::DimensionMismatch, "solve_lp: bound vectors");
  const auto t0 = std::chrono::steady_clock::now();
  DenseSimplex lp(model, lower, upper, options);
  Solution sol = lp.run();
  sol.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

Solution solve_lp(const Model& model, const Options& options) {
  std::vector<double> lo, hi;
  for (const auto& v : model.variables()) {
    lo.push_back(v.lower);
    hi.push_back(v.upper);
  }
  return solve_lp_with_bounds(model, lo, hi, options);
}

}  // namespace gridcoord::milp
