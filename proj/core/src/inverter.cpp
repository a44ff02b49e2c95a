#include "gridcoord/inverter.hpp"

#include <algorithm>
#include <cmath>

#include "gridcoord/error.hpp"

namespace gridcoord::inverter {

using milp::kInf;
using milp::Sense;
using milp::Term;

const char* to_string(Mode m) {
  switch (m) {
    case Mode::VoltVar: return "VoltVar";
    case Mode::VoltWatt: return "VoltWatt";
    case Mode::WattVar: return "WattVar";
  }
  return "?";
}

std::optional<Mode> mode_from_string(const std::string& s) {
  for (Mode m : kAllModes)
    if (s == to_string(m)) return m;
  return std::nullopt;
}

const char* to_string(Encoding e) { return e == Encoding::BigM ? "bigm" : "sos1"; }

void validate(const InverterSpec& spec) {
  auto fail = [&](const std::string& msg) { throw Error(ErrorKind::ValidationError, "inverter " + spec.id + ": " + msg); };
  if (!(spec.s_rated > 0.0)) fail("s_rated must be positive");
  if (spec.p_min > spec.p_max) fail("p_min > p_max");
  if (spec.p_max > spec.s_rated + 1e-12) fail("p_max exceeds s_rated");
  if (std::abs(spec.q_min) > spec.s_rated + 1e-12 || std::abs(spec.q_max) > spec.s_rated + 1e-12)
    fail("|q| limits exceed s_rated");
  if (spec.q_min > spec.q_max) fail("q_min > q_max");
}

bool PqRow::satisfied(double p, double q, double tol) const {
  const double a = cp * p + cq * q;
  return a >= lo - tol && a <= hi + tol;
}

std::vector<PqRow> capability_constraints(const InverterSpec& spec) {
  std::vector<PqRow> rows;
  rows.push_back({"slope_hi", -spec.m_pq, 1.0, -kInf, spec.b_pq});
  rows.push_back({"slope_lo", spec.m_pq, 1.0, -spec.b_pq, kInf});
  rows.push_back({"p_box", 1.0, 0.0, spec.p_min, spec.p_max});
  rows.push_back({"q_box", 0.0, 1.0, spec.q_min, spec.q_max});
  const double gmax = std::asin(std::clamp(spec.q_max / spec.s_rated, -1.0, 1.0));
  for (int l = 0; l <= 7; ++l) {
    const double g = (2.0 * l / 7.0 - 1.0) * gmax;
    rows.push_back({"facet" + std::to_string(l), std::cos(g), std::sin(g), -spec.s_rated, spec.s_rated});
  }
  return rows;
}

namespace {

[[noreturn]] void bad_profile(const std::string& msg) { throw Error(ErrorKind::InvalidProfile, msg); }

constexpr double kSymTol = 1e-9;

DroopCurve volt_var(const InverterSpec& spec, const StandardProfile::VoltVar& p) {
  if (!(p.v1 < p.v2 && p.v2 <= p.v_ref && p.v_ref <= p.v3 && p.v3 < p.v4)) bad_profile("Volt-VAR breakpoints not monotone");
  if (std::abs((p.v_ref - p.v2) - (p.v3 - p.v_ref)) > kSymTol || std::abs((p.v2 - p.v1) - (p.v4 - p.v3)) > kSymTol)
    bad_profile("Volt-VAR breakpoints not symmetric about v_ref");
  const double w = p.v4 - p.v3;
  const double qm = std::min({p.q_frac * spec.s_rated, spec.q_max, -spec.q_min});
  const double k = qm / w;
  DroopCurve c;
  c.mode = Mode::VoltVar;
  c.segments = {
      {{-kInf, 0.0}, {p.v_ref - w, -1.0}, 0.0, {qm, 0.0}},
      {{p.v_ref - w, -1.0}, {p.v_ref, -1.0}, -k, {k * p.v_ref, -k}},
      {{p.v_ref, -1.0}, {p.v_ref, 1.0}, 0.0, {0.0, 0.0}},
      {{p.v_ref, 1.0}, {p.v_ref + w, 1.0}, -k, {k * p.v_ref, k}},
      {{p.v_ref + w, 1.0}, {kInf, 0.0}, 0.0, {-qm, 0.0}},
  };
  c.setting_default = c.setting = p.v3 - p.v_ref;
  c.setting_lo = p.set_lo;
  c.setting_hi = p.set_hi;
  return c;
}

DroopCurve volt_watt(const StandardProfile::VoltWatt& p, double plateau) {
  if (!(p.v1 < p.v2)) bad_profile("Volt-Watt breakpoints not monotone");
  if (p.p_floor_frac < 0.0 || p.p_floor_frac > 1.0) bad_profile("Volt-Watt floor outside [0,1]");
  const double d = p.v2 - p.v1;
  const double floor = p.p_floor_frac * plateau;
  const double k = (plateau - floor) / d;
  DroopCurve c;
  c.mode = Mode::VoltWatt;
  c.segments = {
      {{-kInf, 0.0}, {0.0, 1.0}, 0.0, {plateau, 0.0}},
      {{0.0, 1.0}, {d, 1.0}, -k, {plateau, k}},
      {{d, 1.0}, {kInf, 0.0}, 0.0, {floor, 0.0}},
  };
  c.setting_default = c.setting = p.v1;
  c.setting_lo = p.set_lo;
  c.setting_hi = p.set_hi;
  return c;
}

DroopCurve watt_var(const InverterSpec& spec, const StandardProfile::WattVar& p) {
  if (!(0.0 < p.p2 && p.p2 < p.p3)) bad_profile("Watt-VAR breakpoints not monotone");
  const double pr = spec.p_max;
  const double d = (p.p3 - p.p2) * pr;
  const double qm = std::min({p.q_frac * spec.s_rated, spec.q_max, -spec.q_min});
  const double k = qm / d;
  DroopCurve c;
  c.mode = Mode::WattVar;
  c.segments = {
      {{-kInf, 0.0}, {-d, -1.0}, 0.0, {qm, 0.0}},
      {{-d, -1.0}, {0.0, -1.0}, -k, {0.0, -k}},
      {{0.0, -1.0}, {0.0, 1.0}, 0.0, {0.0, 0.0}},
      {{0.0, 1.0}, {d, 1.0}, -k, {0.0, k}},
      {{d, 1.0}, {kInf, 0.0}, 0.0, {-qm, 0.0}},
  };
  c.setting_default = c.setting = p.p2 * pr;
  c.setting_lo = p.set_lo * pr;
  c.setting_hi = p.set_hi * pr;
  return c;
}

}  // namespace

DroopCurve make_default_curve(Mode mode, const InverterSpec& spec, const StandardProfile& profile,
                              std::optional<double> p_available) {
  DroopCurve c;
  switch (mode) {
    case Mode::VoltVar: c = volt_var(spec, profile.vv); break;
    case Mode::VoltWatt: c = volt_watt(profile.vw, p_available.value_or(spec.p_max)); break;
    case Mode::WattVar: c = watt_var(spec, profile.wv); break;
  }
  if (!(c.setting_lo <= c.setting_default && c.setting_default <= c.setting_hi))
    bad_profile(std::string(to_string(mode)) + " default setting outside its admissible range");
  return c;
}

DroopCurve with_setting(DroopCurve curve, double setting) {
  curve.setting = setting;
  return curve;
}

std::size_t active_segment(const DroopCurve& curve, double input) {
  for (std::size_t l = 0; l + 1 < curve.segments.size(); ++l)
    if (input <= curve.segments[l].hi.at(curve.setting)) return l;
  return curve.segments.size() - 1;
}

double evaluate_droop(const DroopCurve& curve, double input) {
  const Segment& s = curve.segments[active_segment(curve, input)];
  return s.slope * input + s.offset.at(curve.setting);
}

std::vector<double> breakpoints(const DroopCurve& curve, double box_lo, double box_hi) {
  std::vector<double> out{box_lo};
  for (std::size_t l = 0; l + 1 < curve.segments.size(); ++l) out.push_back(curve.segments[l].hi.at(curve.setting));
  out.push_back(box_hi);
  return out;
}

double max_activity(const milp::Model& model, std::span<const Term> terms) {
  double s = 0.0;
  for (const auto& t : terms) {
    const auto& v = model.variable(t.var);
    s += t.coef > 0 ? t.coef * v.upper : t.coef * v.lower;
  }
  return s;
}

double min_activity(const milp::Model& model, std::span<const Term> terms) {
  double s = 0.0;
  for (const auto& t : terms) {
    const auto& v = model.variable(t.var);
    s += t.coef > 0 ? t.coef * v.lower : t.coef * v.upper;
  }
  return s;
}

namespace {

// terms <= rhs + M (1 - z)  or  terms >= rhs - M (1 - z), with the tightest M
// valid over the variable box. Returns nullopt when the row can never bind.
std::optional<std::size_t> add_conditional_row(milp::Model& model, const std::string& name, std::vector<Term> terms,
                                               Sense sense, double rhs, std::size_t z) {
  if (!std::isfinite(rhs)) return std::nullopt;
  const double extreme = sense == Sense::LessEqual ? max_activity(model, terms) : min_activity(model, terms);
  if (!std::isfinite(extreme))
    throw Error(ErrorKind::ValidationError, "Big-M row " + name + " references an unbounded variable");
  const double big_m = sense == Sense::LessEqual ? extreme - rhs : rhs - extreme;
  if (big_m <= 1e-12) return std::nullopt;
  terms.push_back({z, sense == Sense::LessEqual ? big_m : -big_m});
  const double r = sense == Sense::LessEqual ? rhs + big_m : rhs - big_m;
  return model.add_constraint(name, std::move(terms), sense, r);
}

struct Roles {
  std::size_t input;
  std::size_t output;
};

Roles roles(Mode mode, const DerVars& v) {
  switch (mode) {
    case Mode::VoltVar: return {v.v, v.q};
    case Mode::VoltWatt: return {v.v, v.p};
    case Mode::WattVar: return {v.p, v.q};
  }
  return {v.v, v.q};
}

DroopEncoding encode(milp::Model& model, const DroopCurve& curve, const DerVars& vars, const std::string& tag,
                     Encoding enc) {
  DroopEncoding e;
  e.mode = curve.mode;
  e.encoding = enc;
  const std::string base = tag + "." + to_string(curve.mode);
  e.setting_var = model.add_variable(base + ".set", curve.setting_lo, curve.setting_hi);
  const Roles r = roles(curve.mode, vars);
  const std::size_t s = e.setting_var;

  for (std::size_t l = 0; l < curve.segments.size(); ++l) {
    const std::string zname = base + ".z" + std::to_string(l + 1);
    const std::size_t z = enc == Encoding::BigM ? model.add_binary(zname) : model.add_variable(zname, 0.0, 1.0);
    e.indicators.push_back(z);
    const Segment& seg = curve.segments[l];
    const std::string rn = base + ".s" + std::to_string(l + 1);
    auto push = [&](std::optional<std::size_t> row) {
      if (row) e.rows.push_back(*row);
    };
    // input within the segment domain
    push(add_conditional_row(model, rn + ".dom_lo", {{r.input, 1.0}, {s, -seg.lo.cs}}, Sense::GreaterEqual, seg.lo.c0, z));
    push(add_conditional_row(model, rn + ".dom_hi", {{r.input, 1.0}, {s, -seg.hi.cs}}, Sense::LessEqual, seg.hi.c0, z));
    // output on the segment line
    std::vector<Term> val{{r.output, 1.0}, {r.input, -seg.slope}, {s, -seg.offset.cs}};
    push(add_conditional_row(model, rn + ".val_hi", val, Sense::LessEqual, seg.offset.c0, z));
    push(add_conditional_row(model, rn + ".val_lo", val, Sense::GreaterEqual, seg.offset.c0, z));
  }
  if (enc == Encoding::Sos1) e.sos_set = model.add_sos1(base + ".seg", e.indicators, 1);
  return e;
}

}  // namespace

DroopEncoding encode_bigM(milp::Model& model, const DroopCurve& curve, const DerVars& vars, const std::string& tag) {
  return encode(model, curve, vars, tag, Encoding::BigM);
}

DroopEncoding encode_sos1(milp::Model& model, const DroopCurve& curve, const DerVars& vars, const std::string& tag) {
  return encode(model, curve, vars, tag, Encoding::Sos1);
}

ModeSelection mode_exclusivity(milp::Model& model, std::span<const DroopEncoding> encodings, const std::string& tag) {
  ModeSelection sel;
  if (encodings.empty()) return sel;
  if (encodings.front().encoding == Encoding::BigM) {
    std::vector<Term> all;
    for (const auto& e : encodings)
      for (std::size_t z : e.indicators) all.push_back({z, 1.0});
    sel.rows.push_back(model.add_constraint(tag + ".modes", std::move(all), Sense::Equal, 1.0));
    return sel;
  }
  std::array<std::size_t, 3> mv{};
  std::vector<std::size_t> members;
  std::vector<Term> sum;
  for (Mode m : kAllModes) {
    const auto it = std::find_if(encodings.begin(), encodings.end(), [&](const DroopEncoding& e) { return e.mode == m; });
    const std::size_t sv = model.add_variable(tag + ".mode." + to_string(m), 0.0, it == encodings.end() ? 0.0 : 1.0);
    mv[static_cast<std::size_t>(m)] = sv;
    members.push_back(sv);
    sum.push_back({sv, 1.0});
    if (it == encodings.end()) continue;
    std::vector<Term> link;
    for (std::size_t z : it->indicators) link.push_back({z, 1.0});
    link.push_back({sv, -1.0});
    sel.rows.push_back(model.add_constraint(tag + ".link." + to_string(m), std::move(link), Sense::Equal, 0.0));
  }
  sel.rows.push_back(model.add_constraint(tag + ".modes", std::move(sum), Sense::Equal, 1.0));
  sel.mode_vars = mv;
  sel.mode_sos = model.add_sos1(tag + ".mode", members, 0);
  return sel;
}

}  // namespace gridcoord::inverter
