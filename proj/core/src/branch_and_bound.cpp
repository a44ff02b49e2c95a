#include <algorithm>
#include <chrono>
#include <cmath>
#include <queue>

#include "gridcoord/error.hpp"
#include "gridcoord/milp.hpp"
#include "lp_workspace.hpp"

namespace gridcoord::milp {

namespace {

struct Node {
  std::uint64_t id;
  double bound;  // relaxation objective in minimisation sense
  long long key;  // bound on a 1e-9 grid, so near-equal bounds tie
  std::vector<double> lower, upper;
  std::vector<double> values;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.key != b.key) return a.key > b.key;
    return a.id < b.id;  // among ties the newest node first (dives instead of sweeping a level)
  }
};

double min_sense(const Model& m, double obj) { return m.objective_sense() == ObjSense::Maximize ? -obj : obj; }

/// Index of the most fractional binary (ties: lowest index), or npos.
std::size_t pick_binary(const Model& m, const std::vector<double>& x, double tol) {
  std::size_t best = static_cast<std::size_t>(-1);
  double best_frac = tol;
  for (std::size_t j = 0; j < m.num_variables(); ++j) {
    if (m.variable(j).kind != VarKind::Binary) continue;
    const double frac = std::abs(x[j] - std::round(x[j]));
    if (frac > best_frac + 1e-12) {
      best_frac = frac;
      best = j;
    }
  }
  return best;
}

std::size_t pick_sos(const Model& m, const std::vector<double>& x, double tol) {
  const auto& sets = m.sos1_sets();
  std::size_t best = static_cast<std::size_t>(-1);
  for (std::size_t s = 0; s < sets.size(); ++s) {
    int nonzero = 0;
    for (std::size_t v : sets[s].members)
      if (std::abs(x[v]) > tol) ++nonzero;
    if (nonzero <= 1) continue;
    if (best == static_cast<std::size_t>(-1) || sets[s].priority < sets[best].priority) best = s;
  }
  return best;
}

}  // namespace

Solution solve_milp(const Model& model, const Options& options) {
  const auto t0 = std::chrono::steady_clock::now();
  Solution best;
  best.status = Status::Infeasible;
  double incumbent = kInf;  // minimisation sense
  std::uint64_t next_id = 0, lp_iters = 0;

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  bool unbounded = false;

  LpWorkspace workspace(model, options);
  auto evaluate = [&](std::vector<double> lo, std::vector<double> hi) {
    Solution lp = workspace.solve(lo, hi);
    lp_iters += lp.simplex_iterations;
    ++next_id;
    if (lp.status == Status::Unbounded) {
      unbounded = true;
      return;
    }
    if (lp.status != Status::Optimal) return;  // infeasible (iteration-limited nodes are dropped too)
    const double bound = min_sense(model, lp.objective);
    if (bound >= incumbent - options.gap_abs) return;
    const auto key = static_cast<long long>(std::llround(bound * 1e9));
    open.push(Node{next_id, bound, key, std::move(lo), std::move(hi), std::move(lp.values)});
  };

  {
    std::vector<double> lo, hi;
    for (const auto& v : model.variables()) {
      lo.push_back(v.lower);
      hi.push_back(v.upper);
    }
    evaluate(std::move(lo), std::move(hi));
  }

  bool hit_limit = false;
  while (!open.empty() && !unbounded) {
    if (next_id >= options.node_limit) {
      hit_limit = true;
      break;
    }
    Node node = open.top();
    open.pop();
    if (node.bound >= incumbent - options.gap_abs) break;  // best-first: nothing better remains

    const std::size_t bin = pick_binary(model, node.values, options.int_tol);
    if (bin != static_cast<std::size_t>(-1)) {
      auto lo0 = node.lower, hi0 = node.upper;
      hi0[bin] = 0.0;
      auto lo1 = std::move(node.lower), hi1 = std::move(node.upper);
      lo1[bin] = 1.0;
      evaluate(std::move(lo0), std::move(hi0));
      evaluate(std::move(lo1), std::move(hi1));
      continue;
    }
    const std::size_t sos = pick_sos(model, node.values, options.int_tol);
    if (sos != static_cast<std::size_t>(-1)) {
      // split the still-free members at the position-weighted midpoint
      std::vector<std::size_t> free;
      for (std::size_t v : model.sos1_sets()[sos].members)
        if (node.upper[v] > 0.0 || node.lower[v] < 0.0) free.push_back(v);
      double wsum = 0.0, xsum = 0.0;
      for (std::size_t k = 0; k < free.size(); ++k) {
        const double a = std::abs(node.values[free[k]]);
        wsum += static_cast<double>(k + 1) * a;
        xsum += a;
      }
      std::size_t split = static_cast<std::size_t>(std::floor(wsum / xsum));
      split = std::clamp<std::size_t>(split, 1, free.size() - 1);
      auto lo_l = node.lower, hi_l = node.upper;
      auto lo_r = std::move(node.lower), hi_r = std::move(node.upper);
      for (std::size_t k = 0; k < free.size(); ++k) {
        auto& lo = (k < split) ? lo_r : lo_l;
        auto& hi = (k < split) ? hi_r : hi_l;
        lo[free[k]] = 0.0;
        hi[free[k]] = 0.0;
      }
      evaluate(std::move(lo_l), std::move(hi_l));
      evaluate(std::move(lo_r), std::move(hi_r));
      continue;
    }
    // integer feasible
    if (node.bound < incumbent) {
      incumbent = node.bound;
      best.values = std::move(node.values);
      for (std::size_t j = 0; j < model.num_variables(); ++j)
        if (model.variable(j).kind == VarKind::Binary) best.values[j] = std::round(best.values[j]);
      best.status = Status::Optimal;
    }
  }

  if (unbounded) {
    best.status = Status::Unbounded;
    best.values.clear();
  } else if (hit_limit) {
    best.status = Status::IterLimit;
  }
  if (!best.values.empty()) best.objective = model.objective_value(best.values);
  best.nodes = next_id;
  best.simplex_iterations = lp_iters;
  best.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return best;
}

Solution brute_force(const Model& model, const Options& options) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> binaries;
  for (std::size_t j = 0; j < model.num_variables(); ++j)
    if (model.variable(j).kind == VarKind::Binary) binaries.push_back(j);
  const auto& sets = model.sos1_sets();

  double combos = std::pow(2.0, static_cast<double>(binaries.size()));
  for (const auto& s : sets) combos *= static_cast<double>(std::max<std::size_t>(1, s.members.size()));
  if (combos > 1048576.0) throw Error(ErrorKind::TooLarge, "brute_force: " + std::to_string(combos) + " combinations");

  std::vector<double> base_lo, base_hi;
  for (const auto& v : model.variables()) {
    base_lo.push_back(v.lower);
    base_hi.push_back(v.upper);
  }

  Solution best;
  best.status = Status::Infeasible;
  double incumbent = kInf;
  std::vector<std::size_t> choice(sets.size(), 0);
  const std::uint64_t nb = binaries.size();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << nb); ++mask) {
    std::fill(choice.begin(), choice.end(), 0);
    while (true) {
      auto lo = base_lo, hi = base_hi;
      for (std::size_t b = 0; b < nb; ++b) lo[binaries[b]] = hi[binaries[b]] = (mask >> b) & 1U ? 1.0 : 0.0;
      bool consistent = true;
      for (std::size_t s = 0; s < sets.size(); ++s)
        for (std::size_t k = 0; k < sets[s].members.size(); ++k) {
          if (k == choice[s]) continue;
          const std::size_t v = sets[s].members[k];
          if (lo[v] > 0.0 || hi[v] < 0.0) consistent = false;
          lo[v] = 0.0;
          hi[v] = 0.0;
        }
      if (consistent) {
        Solution lp = solve_lp_with_bounds(model, lo, hi, options);
        ++best.nodes;
        best.simplex_iterations += lp.simplex_iterations;
        if (lp.status == Status::Unbounded) {
          best.status = Status::Unbounded;
          best.values.clear();
          return best;
        }
        if (lp.status == Status::Optimal) {
          const double v = min_sense(model, lp.objective);
          if (v < incumbent) {
            incumbent = v;
            best.values = std::move(lp.values);
            best.objective = lp.objective;
            best.status = Status::Optimal;
          }
        }
      }
      // odometer over SOS choices
      std::size_t s = 0;
      for (; s < sets.size(); ++s) {
        if (++choice[s] < sets[s].members.size()) break;
        choice[s] = 0;
      }
      if (s == sets.size()) break;
    }
  }
  best.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return best;
}

}  // namespace gridcoord::milp
