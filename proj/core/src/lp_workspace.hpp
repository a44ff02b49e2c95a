#pragma once

// Re-solvable LP used inside branch-and-bound: keeps the last optimal
// tableau and re-optimizes after bound changes with the dual simplex.

#include <memory>
#include <span>

#include "gridcoord/milp.hpp"

namespace gridcoord::milp {

class DenseSimplex;

class LpWorkspace {
 public:
  LpWorkspace(const Model& model, const Options& options);
  ~LpWorkspace();
  LpWorkspace(const LpWorkspace&) = delete;
  LpWorkspace& operator=(const LpWorkspace&) = delete;

  Solution solve(std::span<const double> lower, std::span<const double> upper);

  std::uint64_t warm_solves() const { return warm_; }
  std::uint64_t cold_solves() const { return cold_; }

 private:
  const Model& model_;
  Options options_;
  std::unique_ptr<DenseSimplex> lp_;
  std::uint64_t warm_ = 0, cold_ = 0, since_refresh_ = 0;
};

}  // namespace gridcoord::milp
