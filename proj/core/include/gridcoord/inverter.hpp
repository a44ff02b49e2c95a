#pragma once

// Inverter capability polygon and the three droop control laws (Volt-VAR,
// Volt-Watt, Watt-VAR) as parameterized piecewise-linear curves, plus their
// MILP encodings (Big-M with binaries, or SOS1 with continuous indicators).

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridcoord/milp.hpp"

namespace gridcoord::inverter {

enum class Mode { VoltVar = 0, VoltWatt = 1, WattVar = 2 };
inline constexpr std::array<Mode, 3> kAllModes{Mode::VoltVar, Mode::VoltWatt, Mode::WattVar};
const char* to_string(Mode m);
std::optional<Mode> mode_from_string(const std::string& s);

enum class Encoding { BigM, Sos1 };
const char* to_string(Encoding e);

/// Ratings in system per-unit.
struct InverterSpec {
  std::string id;
  double s_rated = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double m_pq = 2.2;
  double b_pq = 0.0;
};

/// Throws ValidationError when the rating invariants do not hold.
void validate(const InverterSpec& spec);

/// lo <= cp*P + cq*Q <= hi.
struct PqRow {
  std::string name;
  double cp = 0.0;
  double cq = 0.0;
  double lo = -milp::kInf;
  double hi = milp::kInf;
  bool satisfied(double p, double q, double tol = 1e-9) const;
};

/// PQ-slope rows, P/Q box rows and the 8 facets of the polygonal apparent
/// power limit, facet angles gamma_l = (2l/7 - 1) asin(q_max/s_rated).
std::vector<PqRow> capability_constraints(const InverterSpec& spec);

/// Value affine in the curve's setting variable: c0 + cs * setting.
struct Affine {
  double c0 = 0.0;
  double cs = 0.0;
  double at(double setting) const { return c0 + cs * setting; }
};

struct Segment {
  Affine lo;        ///< domain lower end
  Affine hi;        ///< domain upper end
  double slope = 0.0;
  Affine offset;    ///< output = slope * input + offset
};

struct DroopCurve {
  Mode mode = Mode::VoltVar;
  std::vector<Segment> segments;
  double setting = 0.0;      ///< current value of the decision offset
  double setting_lo = 0.0;   ///< admissible range when optimized
  double setting_hi = 0.0;
  double setting_default = 0.0;
};

/// Numeric breakpoints for the symbolic curves. Voltages in pu, powers as
/// fractions of the inverter rating. Configuration defaults only.
struct StandardProfile {
  struct VoltVar {
    double v1 = 0.92, v2 = 0.98, v3 = 1.02, v4 = 1.08;
    double v_ref = 1.0;
    double q_frac = 0.44;  ///< of s_rated
    double set_lo = 0.01, set_hi = 0.05;
  } vv;
  struct VoltWatt {
    double v1 = 1.06, v2 = 1.10;
    double p_floor_frac = 0.2;
    double set_lo = 1.02, set_hi = 1.08;
  } vw;
  struct WattVar {
    double p2 = 0.5, p3 = 1.0;  ///< fractions of p_max; the curve mirrors them for P < 0
    double q_frac = 0.44;
    double set_lo = 0.2, set_hi = 0.8;
  } wv;
  double v_box_lo = 0.9;  ///< terminal-voltage box used for Big-M sizing
  double v_box_hi = 1.1;
};

/// Builds the default curve for `mode`. `p_available` scales the Volt-Watt
/// plateau (defaults to spec.p_max). Throws InvalidProfile on non-monotone
/// or asymmetric breakpoints.
DroopCurve make_default_curve(Mode mode, const InverterSpec& spec, const StandardProfile& profile,
                              std::optional<double> p_available = std::nullopt);

DroopCurve with_setting(DroopCurve curve, double setting);

/// Output of the curve at `input`, clamped to the end segments; ties at a
/// breakpoint resolve to the left segment.
double evaluate_droop(const DroopCurve& curve, double input);
std::size_t active_segment(const DroopCurve& curve, double input);

/// Curve breakpoints at the current setting (size = segments + 1; the ends
/// are the domain box for the input).
std::vector<double> breakpoints(const DroopCurve& curve, double box_lo, double box_hi);

/// Model variables of one DER that the encodings reference.
struct DerVars {
  std::size_t p;
  std::size_t q;
  std::size_t v;
};

struct DroopEncoding {
  Mode mode = Mode::VoltVar;
  Encoding encoding = Encoding::BigM;
  std::size_t setting_var = 0;
  std::vector<std::size_t> indicators;  ///< z_l per segment
  std::vector<std::size_t> rows;
  std::optional<std::size_t> sos_set;
};

/// Adds the setting variable, per-segment indicators and the domain/value
/// rows with per-row M sized from the current variable bounds. Rows that
/// cannot be violated over the box are omitted.
DroopEncoding encode_bigM(milp::Model& model, const DroopCurve& curve, const DerVars& vars, const std::string& tag);

/// Same rows with continuous indicators in [0,1] grouped in one SOS1 set.
DroopEncoding encode_sos1(milp::Model& model, const DroopCurve& curve, const DerVars& vars, const std::string& tag);

struct ModeSelection {
  std::vector<std::size_t> rows;
  std::optional<std::array<std::size_t, 3>> mode_vars;  ///< s^VV, s^VW, s^WV (SOS variant)
  std::optional<std::size_t> mode_sos;
};

/// Binary variant: sum of every indicator across modes = 1. SOS variant:
/// mode variables s^mode, linking rows sum z^mode = s^mode, sum s = 1 and a
/// SOS1 set over the mode variables, branched before the segment sets.
ModeSelection mode_exclusivity(milp::Model& model, std::span<const DroopEncoding> encodings, const std::string& tag);

/// Worst-case activity max(sum coef*x) of terms over the model's variable box.
double max_activity(const milp::Model& model, std::span<const milp::Term> terms);
double min_activity(const milp::Model& model, std::span<const milp::Term> terms);

}  // namespace gridcoord::inverter
