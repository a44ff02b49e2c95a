#include <algorithm>
#include <cmath>
#include <sstream>

#include "gridcoord/error.hpp"
#include "gridcoord/milp.hpp"

namespace gridcoord::milp {

const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "Optimal";
    case Status::Infeasible: return "Infeasible";
    case Status::Unbounded: return "Unbounded";
    case Status::IterLimit: return "IterLimit";
  }
  return "?";
}

void Model::check_var(std::size_t v) const {
  if (v >= vars_.size()) throw Error(ErrorKind::UnknownVariable, "variable id " + std::to_string(v));
}

std::size_t Model::add_variable(std::string name, double lower, double upper, VarKind kind) {
  if (kind == VarKind::Binary) {
    lower = std::max(lower, 0.0);
    upper = std::min(upper, 1.0);
  }
  vars_.push_back({std::move(name), lower, upper, kind});
  return vars_.size() - 1;
}

std::size_t Model::add_constraint(std::string name, std::vector<Term> terms, Sense sense, double rhs) {
  for (const auto& t : terms) check_var(t.var);
  // merge repeated variables
  std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.var < b.var; });
  std::vector<Term> merged;
  for (const auto& t : terms) {
    if (!merged.empty() && merged.back().var == t.var) merged.back().coef += t.coef;
    else merged.push_back(t);
  }
  std::erase_if(merged, [](const Term& t) { return t.coef == 0.0; });
  rows_.push_back({std::move(name), std::move(merged), sense, rhs});
  return rows_.size() - 1;
}

std::size_t Model::add_sos1(std::string name, std::vector<std::size_t> members, int priority) {
  std::vector<std::size_t> uniq;
  for (std::size_t m : members) {
    check_var(m);
    if (std::find(uniq.begin(), uniq.end(), m) == uniq.end()) uniq.push_back(m);
  }
  sos_.push_back({std::move(name), std::move(uniq), priority});
  return sos_.size() - 1;
}

void Model::set_objective(ObjSense sense, std::vector<Term> terms, double constant) {
  for (const auto& t : terms) check_var(t.var);
  obj_sense_ = sense;
  obj_ = std::move(terms);
  obj_const_ = constant;
}

void Model::set_bounds(std::size_t var, double lower, double upper) {
  check_var(var);
  vars_[var].lower = lower;
  vars_[var].upper = upper;
}

std::size_t Model::num_binaries() const {
  return static_cast<std::size_t>(
      std::count_if(vars_.begin(), vars_.end(), [](const Variable& v) { return v.kind == VarKind::Binary; }));
}

double Model::objective_value(std::span<const double> x) const {
  double s = obj_const_;
  for (const auto& t : obj_) s += t.coef * x[t.var];
  return s;
}

double Model::max_violation(std::span<const double> x) const {
  double worst = 0.0;
  for (std::size_t j = 0; j < vars_.size(); ++j) {
    worst = std::max(worst, vars_[j].lower - x[j]);
    worst = std::max(worst, x[j] - vars_[j].upper);
  }
  for (const auto& r : rows_) {
    double a = 0.0;
    for (const auto& t : r.terms) a += t.coef * x[t.var];
    if (r.sense != Sense::GreaterEqual) worst = std::max(worst, a - r.rhs);
    if (r.sense != Sense::LessEqual) worst = std::max(worst, r.rhs - a);
  }
  return worst;
}

std::string Model::to_lp_string() const {
  std::ostringstream os;
  os.precision(12);
  auto expr = [&](const std::vector<Term>& terms) {
    if (terms.empty()) os << " 0";
    for (const auto& t : terms) os << (t.coef < 0 ? " - " : " + ") << std::abs(t.coef) << ' ' << vars_[t.var].name;
  };
  os << (obj_sense_ == ObjSense::Minimize ? "Minimize\n" : "Maximize\n") << " obj:";
  expr(obj_);
  if (obj_const_ != 0.0) os << " + " << obj_const_;
  os << "\nSubject To\n";
  for (const auto& r : rows_) {
    os << ' ' << r.name << ':';
    expr(r.terms);
    os << (r.sense == Sense::LessEqual ? " <= " : r.sense == Sense::Equal ? " = " : " >= ") << r.rhs << '\n';
  }
  os << "Bounds\n";
  for (const auto& v : vars_) {
    if (v.kind == VarKind::Binary) continue;
    os << ' ' << v.lower << " <= " << v.name << " <= " << v.upper << '\n';
  }
  os << "Binaries\n";
  for (const auto& v : vars_)
    if (v.kind == VarKind::Binary) os << ' ' << v.name << '\n';
  if (!sos_.empty()) {
    os << "SOS\n";
    for (const auto& s : sos_) {
      os << ' ' << s.name << ": S1 ::";
      for (std::size_t k = 0; k < s.members.size(); ++k) os << ' ' << vars_[s.members[k]].name << ':' << (k + 1);
      os << '\n';
    }
  }
  os << "End\n";
  return os.str();
}

}  // namespace gridcoord::milp
