#pragma once

// Hand-sized feeders for tests. The base is 1000 kVA / 1 kV, so one ohm is
// one per-unit and 1000 kW is 1 pu.

#include <complex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcoord/feeder.hpp"
#include "gridcoord/io.hpp"

namespace testutil {

using nlohmann::json;

inline json z_single(double r, double x) {
  json z = json::array();
  for (int i = 0; i < 3; ++i) {
    json row = json::array();
    for (int j = 0; j < 3; ++j) row.push_back(i == 0 && j == 0 ? json::array({r, x}) : json::array({0.0, 0.0}));
    z.push_back(row);
  }
  return z;
}

struct ChainLoad {
  double p_kw = 0.0;
  double q_kvar = 0.0;
  double a0 = 1.0, a1 = 0.0, a2 = 0.0;
};

/// Single-phase chain 0-1-...-n on phase a. `lines[i]` is the impedance of
/// the line into bus i+1; `loads[i]` sits on bus i+1. DERs are listed by bus.
inline json chain_doc(const std::vector<std::pair<double, double>>& lines, const std::vector<ChainLoad>& loads,
                      const std::vector<int>& der_buses = {}, double y0 = 1.0) {
  json doc;
  doc["base"] = {{"s_kva", 1000.0}, {"v_kv", 1.0}};
  doc["substation"] = {{"bus", "0"}, {"y0", {y0, y0, y0}}};
  doc["buses"] = json::array({{{"id", "0"}, {"phases", "a"}}});
  doc["lines"] = json::array();
  doc["loads"] = json::array();
  doc["ders"] = json::array();
  doc["observable"] = json::array();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    doc["buses"].push_back({{"id", id}, {"phases", "a"}});
    doc["lines"].push_back({{"from", std::to_string(i)}, {"to", id}, {"z", z_single(lines[i].first, lines[i].second)}});
    doc["observable"].push_back(id + ".a");
    if (i < loads.size() && (loads[i].p_kw != 0.0 || loads[i].q_kvar != 0.0))
      doc["loads"].push_back({{"bus", id},
                              {"phase", "a"},
                              {"p_kw", loads[i].p_kw},
                              {"q_kvar", loads[i].q_kvar},
                              {"a0", loads[i].a0},
                              {"a1", loads[i].a1},
                              {"a2", loads[i].a2}});
  }
  for (int b : der_buses) doc["ders"].push_back({{"bus", std::to_string(b)}, {"phase", "a"}, {"inverter_id", "pv"}});
  return doc;
}

inline gridcoord::feeder::FeederModel chain(const std::vector<std::pair<double, double>>& lines,
                                            const std::vector<ChainLoad>& loads, const std::vector<int>& der_buses = {},
                                            double y0 = 1.0) {
  return gridcoord::io::feeder_from_json(chain_doc(lines, loads, der_buses, y0));
}

/// Fleet document with one inverter "pv" rated in kVA / kW / kvar.
inline json fleet_doc(double s_kva, double p_kw, double q_kvar) {
  json doc;
  doc["inverters"] = json::array({{{"id", "pv"}, {"s_kva", s_kva}, {"p_max_kw", p_kw}, {"q_max_kvar", q_kvar}}});
  return doc;
}

}  // namespace testutil
