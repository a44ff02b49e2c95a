#pragma once

// Linear / mixed-integer model container with an embedded solver: bounded
// primal simplex on a dense tableau for LP relaxations and best-first
// branch-and-bound with binary and SOS1 branching.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace gridcoord::milp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { Continuous, Binary };
enum class Sense { LessEqual, Equal, GreaterEqual };
enum class ObjSense { Minimize, Maximize };

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = kInf;
  VarKind kind = VarKind::Continuous;
};

struct Term {
  std::size_t var;
  double coef;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;
  Sense sense = Sense::LessEqual;
  double rhs = 0.0;
};

struct Sos1 {
  std::string name;
  std::vector<std::size_t> members;  ///< ordered; the order drives branching
  int priority = 0;                   ///< lower branches first
};

class Model {
 public:
  std::size_t add_variable(std::string name, double lower, double upper, VarKind kind = VarKind::Continuous);
  std::size_t add_binary(std::string name) { return add_variable(std::move(name), 0.0, 1.0, VarKind::Binary); }
  /// Throws UnknownVariable when a term references a missing variable.
  std::size_t add_constraint(std::string name, std::vector<Term> terms, Sense sense, double rhs);
  /// Duplicate members are dropped; the first occurrence keeps its position.
  std::size_t add_sos1(std::string name, std::vector<std::size_t> members, int priority = 0);
  void set_objective(ObjSense sense, std::vector<Term> terms, double constant = 0.0);
  void set_bounds(std::size_t var, double lower, double upper);

  std::size_t num_variables() const { return vars_.size(); }
  std::size_t num_constraints() const { return rows_.size(); }
  std::size_t num_binaries() const;
  const Variable& variable(std::size_t i) const { return vars_.at(i); }
  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<Constraint>& constraints() const { return rows_; }
  const std::vector<Sos1>& sos1_sets() const { return sos_; }
  ObjSense objective_sense() const { return obj_sense_; }
  const std::vector<Term>& objective_terms() const { return obj_; }
  double objective_constant() const { return obj_const_; }

  double objective_value(std::span<const double> x) const;
  /// Largest bound/row violation of x (0 when feasible).
  double max_violation(std::span<const double> x) const;

  /// Plain-text dump in an LP-format-like layout (objective, rows, bounds,
  /// integer and SOS sections). Intended for debugging.
  std::string to_lp_string() const;

 private:
  void check_var(std::size_t v) const;

  std::vector<Variable> vars_;
  std::vector<Constraint> rows_;
  std::vector<Sos1> sos_;
  ObjSense obj_sense_ = ObjSense::Minimize;
  std::vector<Term> obj_;
  double obj_const_ = 0.0;
};

enum class Status { Optimal, Infeasible, Unbounded, IterLimit };
const char* to_string(Status s);

struct Options {
  double feas_tol = 1e-7;
  double int_tol = 1e-6;
  double gap_abs = 1e-6;
  std::uint64_t node_limit = 1'000'000;
};

struct Solution {
  Status status = Status::Infeasible;
  double objective = 0.0;
  std::vector<double> values;
  std::uint64_t nodes = 0;
  std::uint64_t simplex_iterations = 0;
  double wall_ms = 0.0;
  bool optimal() const { return status == Status::Optimal; }
};

/// LP relaxation: integrality and SOS1 sets ignored. IterLimit after
/// 50*(rows+cols) simplex iterations.
Solution solve_lp(const Model& model, const Options& options = {});

/// Same as solve_lp with per-variable bound overrides.
Solution solve_lp_with_bounds(const Model& model, std::span<const double> lower, std::span<const double> upper,
                              const Options& options = {});

/// Best-first branch-and-bound. Nodes are keyed on relaxation bound; equal
/// bounds go newest first. Branches on the most fractional binary; once binaries are
/// integral, on the violated SOS1 set of lowest priority (then lowest index) split at its weighted midpoint.
Solution solve_milp(const Model& model, const Options& options = {});

/// Test oracle: enumerates every binary assignment times every choice of the
/// single member allowed nonzero in each SOS1 set. Throws TooLarge when the
/// enumeration exceeds 2^20 combinations.
Solution brute_force(const Model& model, const Options& options = {});

}  // namespace gridcoord::milp
