#include <cmath>
#include <fstream>
#include <sstream>

#include "gridcoord/error.hpp"
#include "gridcoord/io.hpp"

namespace gridcoord::io {

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::ValidationError, msg); }

template <class T>
T get(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) invalid(where + ": missing key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    invalid(where + "." + key + ": " + e.what());
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    invalid(std::string(key) + ": " + e.what());
  }
}

std::array<bool, 3> parse_phases(const json& j, const std::string& where) {
  std::array<bool, 3> ph{};
  std::string letters;
  if (j.is_string()) {
    letters = j.get<std::string>();
  } else if (j.is_array()) {
    for (const auto& e : j) letters += e.get<std::string>();
  } else {
    invalid(where + ": phases must be a string or array");
  }
  for (char c : letters) {
    const int p = feeder::phase_from_letter(c);
    if (p < 0) invalid(where + ": unknown phase '" + std::string(1, c) + "'");
    ph[static_cast<std::size_t>(p)] = true;
  }
  return ph;
}

int parse_phase(const json& j, const std::string& where) {
  std::string s = j.is_string() ? j.get<std::string>() : std::string();
  const int p = s.size() == 1 ? feeder::phase_from_letter(s[0]) : -1;
  if (p < 0) invalid(where + ": phase must be one of a, b, c");
  return p;
}

}  // namespace

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorKind::ParseError,
                source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const std::filesystem::path& path) { return parse_json(read_text_file(path), path.string()); }

feeder::FeederModel feeder_from_json(const json& doc) {
  if (!doc.is_object()) invalid("feeder document must be an object");
  feeder::FeederModel m;
  const json& base = doc.contains("base") ? doc.at("base") : json::object();
  m.base.s_kva = get_or(base, "s_kva", m.base.s_kva);
  m.base.v_kv = get_or(base, "v_kv", m.base.v_kv);
  if (!(m.base.s_kva > 0.0) || !(m.base.v_kv > 0.0)) invalid("base: s_kva and v_kv must be positive");
  const double zb = m.base.z_ohm();

  const json& sub = doc.contains("substation") ? doc.at("substation") : json();
  m.substation = get<std::string>(sub, "bus", "substation");
  if (sub.contains("y0")) {
    const auto y0 = sub.at("y0").get<std::vector<double>>();
    if (y0.size() != 3) invalid("substation.y0 must hold 3 values");
    for (std::size_t i = 0; i < 3; ++i) m.y0[i] = y0[i];
  }

  for (const auto& b : get<json>(doc, "buses", "feeder")) {
    feeder::Bus bus;
    bus.id = get<std::string>(b, "id", "buses[]");
    bus.phases = parse_phases(b.contains("phases") ? b.at("phases") : json("abc"), "bus " + bus.id);
    m.buses.push_back(std::move(bus));
  }

  for (const auto& l : get<json>(doc, "lines", "feeder")) {
    feeder::Line line;
    line.from = get<std::string>(l, "from", "lines[]");
    line.to = get<std::string>(l, "to", "lines[]");
    const std::string where = "line " + line.from + "-" + line.to;
    const auto z = get<std::vector<std::vector<std::array<double, 2>>>>(l, "z", where);
    if (z.size() != 3) invalid(where + ": z must be 3x3");
    for (std::size_t i = 0; i < 3; ++i) {
      if (z[i].size() != 3) invalid(where + ": z must be 3x3");
      for (std::size_t j = 0; j < 3; ++j) {
        if (!std::isfinite(z[i][j][0]) || !std::isfinite(z[i][j][1])) invalid(where + ": non-finite impedance");
        line.z[i][j] = feeder::cplx(z[i][j][0], z[i][j][1]) / zb;
      }
    }
    m.lines.push_back(std::move(line));
  }

  if (doc.contains("loads")) {
    for (const auto& l : doc.at("loads")) {
      feeder::ZipLoad load;
      load.bus = get<std::string>(l, "bus", "loads[]");
      const std::string where = "load at " + load.bus;
      load.phase = parse_phase(l.contains("phase") ? l.at("phase") : json(), where);
      load.p = get_or(l, "p_kw", 0.0) / m.base.s_kva;
      load.q = get_or(l, "q_kvar", 0.0) / m.base.s_kva;
      load.a0 = get_or(l, "a0", 1.0);
      load.a1 = get_or(l, "a1", 0.0);
      load.a2 = get_or(l, "a2", 0.0);
      m.loads.push_back(load);
    }
  }

  if (doc.contains("ders")) {
    for (const auto& d : doc.at("ders")) {
      feeder::DerPlacement der;
      der.bus = get<std::string>(d, "bus", "ders[]");
      der.phase = parse_phase(d.contains("phase") ? d.at("phase") : json(), "der at " + der.bus);
      der.inverter_id = get<std::string>(d, "inverter_id", "der at " + der.bus);
      m.ders.push_back(std::move(der));
    }
  }

  if (doc.contains("observable")) m.observable = doc.at("observable").get<std::vector<std::string>>();

  m.finalize();
  return m;
}

feeder::FeederModel load_feeder(const std::filesystem::path& path) { return feeder_from_json(read_json_file(path)); }

json feeder_to_json(const feeder::FeederModel& m) {
  const double zb = m.base.z_ohm();
  json doc;
  doc["base"] = {{"s_kva", m.base.s_kva}, {"v_kv", m.base.v_kv}};
  doc["substation"] = {{"bus", m.substation}, {"y0", std::vector<double>(m.y0.begin(), m.y0.end())}};
  json buses = json::array();
  for (const auto& b : m.buses) {
    std::string ph;
    for (int p = 0; p < 3; ++p)
      if (b.phases[static_cast<std::size_t>(p)]) ph += feeder::phase_letter(p);
    buses.push_back({{"id", b.id}, {"phases", ph}});
  }
  doc["buses"] = buses;
  json lines = json::array();
  for (const auto& l : m.lines) {
    json z = json::array();
    for (const auto& row : l.z) {
      json r = json::array();
      for (const auto& e : row) r.push_back({e.real() * zb, e.imag() * zb});
      z.push_back(r);
    }
    lines.push_back({{"from", l.from}, {"to", l.to}, {"z", z}});
  }
  doc["lines"] = lines;
  json loads = json::array();
  for (const auto& l : m.loads)
    loads.push_back({{"bus", l.bus},
                     {"phase", std::string(1, feeder::phase_letter(l.phase))},
                     {"p_kw", l.p * m.base.s_kva},
                     {"q_kvar", l.q * m.base.s_kva},
                     {"a0", l.a0},
                     {"a1", l.a1},
                     {"a2", l.a2}});
  doc["loads"] = loads;
  json ders = json::array();
  for (const auto& d : m.ders)
    ders.push_back(
        {{"bus", d.bus}, {"phase", std::string(1, feeder::phase_letter(d.phase))}, {"inverter_id", d.inverter_id}});
  doc["ders"] = ders;
  doc["observable"] = m.observable;
  return doc;
}

const inverter::InverterSpec& InverterFleet::find(const std::string& id) const {
  for (const auto& s : specs)
    if (s.id == id) return s;
  throw Error(ErrorKind::ValidationError, "unknown inverter id '" + id + "'");
}

inverter::StandardProfile profile_from_json(const json& doc) {
  inverter::StandardProfile p;
  if (doc.contains("vv")) {
    const json& j = doc.at("vv");
    p.vv.v1 = get_or(j, "v1", p.vv.v1);
    p.vv.v2 = get_or(j, "v2", p.vv.v2);
    p.vv.v3 = get_or(j, "v3", p.vv.v3);
    p.vv.v4 = get_or(j, "v4", p.vv.v4);
    p.vv.v_ref = get_or(j, "v_ref", p.vv.v_ref);
    p.vv.q_frac = get_or(j, "q_frac", p.vv.q_frac);
    p.vv.set_lo = get_or(j, "set_lo", p.vv.set_lo);
    p.vv.set_hi = get_or(j, "set_hi", p.vv.set_hi);
  }
  if (doc.contains("vw")) {
    const json& j = doc.at("vw");
    p.vw.v1 = get_or(j, "v1", p.vw.v1);
    p.vw.v2 = get_or(j, "v2", p.vw.v2);
    p.vw.p_floor_frac = get_or(j, "p_floor_frac", p.vw.p_floor_frac);
    p.vw.set_lo = get_or(j, "set_lo", p.vw.set_lo);
    p.vw.set_hi = get_or(j, "set_hi", p.vw.set_hi);
  }
  if (doc.contains("wv")) {
    const json& j = doc.at("wv");
    p.wv.p2 = get_or(j, "p2", p.wv.p2);
    p.wv.p3 = get_or(j, "p3", p.wv.p3);
    p.wv.q_frac = get_or(j, "q_frac", p.wv.q_frac);
    p.wv.set_lo = get_or(j, "set_lo", p.wv.set_lo);
    p.wv.set_hi = get_or(j, "set_hi", p.wv.set_hi);
  }
  p.v_box_lo = get_or(doc, "v_box_lo", p.v_box_lo);
  p.v_box_hi = get_or(doc, "v_box_hi", p.v_box_hi);
  return p;
}

json profile_to_json(const inverter::StandardProfile& p) {
  return {{"vv",
           {{"v1", p.vv.v1}, {"v2", p.vv.v2}, {"v3", p.vv.v3}, {"v4", p.vv.v4}, {"v_ref", p.vv.v_ref},
            {"q_frac", p.vv.q_frac}, {"set_lo", p.vv.set_lo}, {"set_hi", p.vv.set_hi}}},
          {"vw",
           {{"v1", p.vw.v1}, {"v2", p.vw.v2}, {"p_floor_frac", p.vw.p_floor_frac}, {"set_lo", p.vw.set_lo},
            {"set_hi", p.vw.set_hi}}},
          {"wv",
           {{"p2", p.wv.p2}, {"p3", p.wv.p3}, {"q_frac", p.wv.q_frac}, {"set_lo", p.wv.set_lo},
            {"set_hi", p.wv.set_hi}}},
          {"v_box_lo", p.v_box_lo},
          {"v_box_hi", p.v_box_hi}};
}

InverterFleet fleet_from_json(const json& doc, const feeder::Base& base) {
  InverterFleet fleet;
  for (const auto& j : get<json>(doc, "inverters", "inverter file")) {
    inverter::InverterSpec s;
    s.id = get<std::string>(j, "id", "inverters[]");
    const std::string where = "inverter " + s.id;
    s.s_rated = get<double>(j, "s_kva", where) / base.s_kva;
    s.p_max = get<double>(j, "p_max_kw", where) / base.s_kva;
    s.p_min = get_or(j, "p_min_kw", 0.0) / base.s_kva;
    s.q_max = get<double>(j, "q_max_kvar", where) / base.s_kva;
    s.q_min = j.contains("q_min_kvar") ? j.at("q_min_kvar").get<double>() / base.s_kva : -s.q_max;
    s.m_pq = get_or(j, "m_pq", 2.2);
    s.b_pq = get_or(j, "b_pq", 0.0) / base.s_kva;
    inverter::validate(s);
    fleet.specs.push_back(std::move(s));
  }
  if (doc.contains("profile")) fleet.profile = profile_from_json(doc.at("profile"));
  return fleet;
}

InverterFleet load_fleet(const std::filesystem::path& path, const feeder::Base& base) {
  return fleet_from_json(read_json_file(path), base);
}

}  // namespace gridcoord::io
