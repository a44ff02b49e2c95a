#pragma once

// Random bounded MILP instances that are feasible by construction, plus an
// independent LP oracle that enumerates vertices with Eigen.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gridcoord/milp.hpp"

namespace testutil {

struct MilpShape {
  int binaries = 0;
  int continuous = 0;
  int sos_sets = 0;
  int rows = 0;
};

inline gridcoord::milp::Model random_milp(std::mt19937_64& rng, const MilpShape& shape) {
  using namespace gridcoord::milp;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.5, 4.0);
  Model m;
  std::vector<double> x0;
  for (int i = 0; i < shape.binaries; ++i) {
    m.add_binary("b" + std::to_string(i));
    x0.push_back(u(rng) > 0.0 ? 1.0 : 0.0);
  }
  for (int i = 0; i < shape.continuous; ++i) {
    const double hi = pos(rng);
    const bool signed_var = u(rng) > 0.3;
    const double lo = signed_var ? -pos(rng) : 0.0;
    m.add_variable("x" + std::to_string(i), lo, hi);
    x0.push_back(lo + (hi - lo) * 0.5 * (u(rng) + 1.0));
  }
  // SOS sets over disjoint runs of nonnegative continuous variables
  std::vector<std::size_t> nonneg;
  for (int i = 0; i < shape.continuous; ++i)
    if (m.variable(shape.binaries + i).lower >= 0.0) nonneg.push_back(shape.binaries + i);
  std::size_t cursor = 0;
  for (int s = 0; s < shape.sos_sets && cursor + 2 <= nonneg.size(); ++s) {
    const std::size_t len = std::min<std::size_t>(2 + rng() % 4, nonneg.size() - cursor);
    std::vector<std::size_t> members(nonneg.begin() + cursor, nonneg.begin() + cursor + len);
    cursor += len;
    const std::size_t keep = members[rng() % members.size()];
    for (std::size_t v : members)
      if (v != keep) x0[v] = 0.0;
    m.add_sos1("s" + std::to_string(s), members, static_cast<int>(rng() % 2));
  }
  const std::size_t n = m.num_variables();
  for (int r = 0; r < shape.rows; ++r) {
    std::vector<Term> terms;
    double act = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (u(rng) < -0.2) continue;
      const double c = std::round(u(rng) * 40.0) / 10.0;
      if (c == 0.0) continue;
      terms.push_back({j, c});
      act += c * x0[j];
    }
    if (terms.empty()) continue;
    const double slack = 0.5 * (u(rng) + 1.0);
    if (u(rng) > 0.0)
      m.add_constraint("r" + std::to_string(r), terms, Sense::LessEqual, act + slack);
    else
      m.add_constraint("r" + std::to_string(r), terms, Sense::GreaterEqual, act - slack);
  }
  std::vector<Term> obj;
  for (std::size_t j = 0; j < n; ++j) obj.push_back({j, std::round(u(rng) * 50.0) / 10.0});
  m.set_objective(u(rng) > 0.0 ? ObjSense::Maximize : ObjSense::Minimize, obj, 0.0);
  return m;
}

/// Optimal objective of the LP relaxation of `m` (with bounds overridden) by
/// enumerating every basis of active constraints. Equality rows are always
/// active. nullopt when infeasible. Only usable on tiny models.
inline std::optional<double> lp_by_vertices(const gridcoord::milp::Model& m, const std::vector<double>& lower,
                                            const std::vector<double>& upper) {
  using namespace gridcoord::milp;
  const std::size_t n = m.num_variables();
  // Each candidate hyperplane: a.x = b
  struct Plane {
    Eigen::VectorXd a;
    double b;
  };
  std::vector<Plane> planes, equalities;
  for (const auto& row : m.constraints()) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (const auto& t : row.terms) a(static_cast<Eigen::Index>(t.var)) += t.coef;
    (row.sense == Sense::Equal ? equalities : planes).push_back({a, row.rhs});
  }
  for (std::size_t j = 0; j < n; ++j) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    a(static_cast<Eigen::Index>(j)) = 1.0;
    planes.push_back({a, lower[j]});
    if (upper[j] != lower[j]) planes.push_back({a, upper[j]});
  }
  auto feasible = [&](const Eigen::VectorXd& x) {
    for (std::size_t j = 0; j < n; ++j)
      if (x(static_cast<Eigen::Index>(j)) < lower[j] - 1e-7 || x(static_cast<Eigen::Index>(j)) > upper[j] + 1e-7)
        return false;
    for (const auto& row : m.constraints()) {
      double act = 0.0;
      for (const auto& t : row.terms) act += t.coef * x(static_cast<Eigen::Index>(t.var));
      if (row.sense == Sense::LessEqual && act > row.rhs + 1e-7) return false;
      if (row.sense == Sense::GreaterEqual && act < row.rhs - 1e-7) return false;
      if (row.sense == Sense::Equal && std::abs(act - row.rhs) > 1e-7) return false;
    }
    return true;
  };
  const std::size_t need = n - std::min(n, equalities.size());
  std::optional<double> best;
  const bool maximize = m.objective_sense() == ObjSense::Maximize;
  std::vector<std::size_t> pick(need);
  // iterate over all subsets of size `need` of planes
  std::vector<bool> mask(planes.size(), false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(std::min(need, planes.size())), true);
  if (need > planes.size()) return std::nullopt;
  do {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::VectorXd b(static_cast<Eigen::Index>(n));
    Eigen::Index r = 0;
    for (const auto& e : equalities) {
      if (r == static_cast<Eigen::Index>(n)) break;
      a.row(r) = e.a.transpose();
      b(r++) = e.b;
    }
    for (std::size_t k = 0; k < planes.size(); ++k)
      if (mask[k]) {
        a.row(r) = planes[k].a.transpose();
        b(r++) = planes[k].b;
      }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.rank() < static_cast<Eigen::Index>(n)) continue;
    const Eigen::VectorXd x = lu.solve(b);
    if (!feasible(x)) continue;
    std::vector<double> xv(x.data(), x.data() + x.size());
    const double obj = m.objective_value(xv);
    if (!best || (maximize ? obj > *best : obj < *best)) best = obj;
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return best;
}

/// Independent MILP oracle on tiny models: enumerates binaries and the single
/// nonzero member of every SOS set, solving each LP by vertex enumeration.
inline std::optional<double> milp_by_enumeration(const gridcoord::milp::Model& m) {
  using namespace gridcoord::milp;
  const std::size_t n = m.num_variables();
  std::vector<std::size_t> bins;
  for (std::size_t j = 0; j < n; ++j)
    if (m.variable(j).kind == VarKind::Binary) bins.push_back(j);
  std::vector<std::size_t> radix;
  for (const auto& s : m.sos1_sets()) radix.push_back(s.members.size() + 1);  // last = all zero
  std::optional<double> best;
  const bool maximize = m.objective_sense() == ObjSense::Maximize;
  for (std::size_t mask = 0; mask < (std::size_t{1} << bins.size()); ++mask) {
    std::vector<std::size_t> digit(radix.size(), 0);
    while (true) {
      std::vector<double> lo, hi;
      for (const auto& v : m.variables()) {
        lo.push_back(v.lower);
        hi.push_back(v.upper);
      }
      for (std::size_t k = 0; k < bins.size(); ++k) lo[bins[k]] = hi[bins[k]] = (mask >> k) & 1u ? 1.0 : 0.0;
      for (std::size_t s = 0; s < radix.size(); ++s) {
        const auto& members = m.sos1_sets()[s].members;
        for (std::size_t k = 0; k < members.size(); ++k)
          if (k != digit[s]) lo[members[k]] = hi[members[k]] = 0.0;
      }
      if (const auto v = lp_by_vertices(m, lo, hi); v && (!best || (maximize ? *v > *best : *v < *best))) best = v;
      std::size_t s = 0;
      while (s < radix.size() && ++digit[s] == radix[s]) digit[s++] = 0;
      if (s == radix.size()) break;
    }
  }
  return best;
}

}  // namespace testutil
