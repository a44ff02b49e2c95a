#!/usr/bin/env python3
"""Regenerates the bundled data set under data/ and its CHECKSUMS file."""

import hashlib
import json
import math
import pathlib
import random

ROOT = pathlib.Path(__file__).resolve().parent.parent / "data"
BASE = {"s_kva": 1000.0, "v_kv": round(4.16 / math.sqrt(3.0), 6)}
ZB = BASE["v_kv"] ** 2 * 1000.0 / BASE["s_kva"]

# Phase impedance configurations in ohm/mile (IEEE 13-node style).
CONFIGS = {
    "601": [[0.3465 + 1.0179j, 0.1560 + 0.5017j, 0.1580 + 0.4236j],
            [0.1560 + 0.5017j, 0.3375 + 1.0478j, 0.1535 + 0.3849j],
            [0.1580 + 0.4236j, 0.1535 + 0.3849j, 0.3414 + 1.0348j]],
    "602": [[0.7526 + 1.1814j, 0.1580 + 0.4236j, 0.1560 + 0.5017j],
            [0.1580 + 0.4236j, 0.7475 + 1.1983j, 0.1535 + 0.3849j],
            [0.1560 + 0.5017j, 0.1535 + 0.3849j, 0.7436 + 1.2112j]],
    "603": [[0, 0, 0],
            [0, 1.3294 + 1.3471j, 0.2066 + 0.4591j],
            [0, 0.2066 + 0.4591j, 1.3238 + 1.3569j]],
    "604": [[1.3238 + 1.3569j, 0, 0.2066 + 0.4591j],
            [0, 0, 0],
            [0.2066 + 0.4591j, 0, 1.3294 + 1.3471j]],
    "605": [[0, 0, 0], [0, 0, 0], [0, 0, 1.3292 + 1.3475j]],
    "606": [[0.7982 + 0.4463j, 0.3192 + 0.0328j, 0.2849 - 0.0143j],
            [0.3192 + 0.0328j, 0.7891 + 0.4041j, 0.3192 + 0.0328j],
            [0.2849 - 0.0143j, 0.3192 + 0.0328j, 0.7982 + 0.4463j]],
    "607": [[1.3425 + 0.5124j, 0, 0], [0, 0, 0], [0, 0, 0]],
}


# nominal reactive range of one feeder at its interface, MVAr
FEEDER_Q_MVAR = 1.5


def zmat(config, feet):
    miles = feet / 5280.0
    return [[[round(z.real * miles, 6), round(z.imag * miles, 6)] for z in row] for row in CONFIGS[config]]


def zdiag(z_ohm, phases="abc"):
    out = [[[0.0, 0.0] for _ in range(3)] for _ in range(3)]
    for p in phases:
        i = "abc".index(p)
        out[i][i] = [round(z_ohm.real, 6), round(z_ohm.imag, 6)]
    return out


def load(bus, phase, p, q, kind="PQ"):
    a = {"PQ": (1.0, 0.0, 0.0), "Z": (0.0, 1.0, 0.0), "I": (0.0, 0.0, 1.0)}[kind]
    return {"bus": bus, "phase": phase, "p_kw": p, "q_kvar": q, "a0": a[0], "a1": a[1], "a2": a[2]}


def feeder13():
    buses = [("650", "abc"), ("632", "abc"), ("633", "abc"), ("634", "abc"), ("645", "bc"), ("646", "bc"),
             ("671", "abc"), ("680", "abc"), ("684", "ac"), ("611", "c"), ("652", "a"), ("692", "abc"),
             ("675", "abc")]
    # The 633-634 transformer is represented by its series impedance on the primary side.
    xfm = (0.011 + 0.02j) * (4.16 ** 2 / 0.5)
    lines = [("650", "632", zmat("601", 2000)), ("632", "633", zmat("602", 500)), ("633", "634", zdiag(xfm)),
             ("632", "645", zmat("603", 500)), ("645", "646", zmat("603", 300)), ("632", "671", zmat("601", 2000)),
             ("671", "680", zmat("601", 1000)), ("671", "684", zmat("604", 300)), ("684", "611", zmat("605", 300)),
             ("684", "652", zmat("607", 800)), ("671", "692", zdiag(0.0001 + 0.0001j)),
             ("692", "675", zmat("606", 500))]
    loads = [load("634", "a", 160, 110), load("634", "b", 120, 90), load("634", "c", 120, 90),
             load("645", "b", 170, 125), load("646", "b", 230, 132, "Z"), load("652", "a", 128, 86, "Z"),
             load("671", "a", 385, 220), load("671", "b", 385, 220), load("671", "c", 385, 220),
             load("671", "a", 17, 10), load("671", "b", 66, 38), load("671", "c", 117, 68),
             load("675", "a", 485, 190), load("675", "b", 68, 60), load("675", "c", 290, 212),
             load("692", "c", 170, 151, "I"), load("611", "c", 170, 80, "I"),
             load("675", "a", 0, -200, "Z"), load("675", "b", 0, -200, "Z"), load("675", "c", 0, -200, "Z"),
             load("611", "c", 0, -100, "Z")]
    sites = [(b, p) for b in ("634", "675", "680") for p in "abc"]
    ders = [{"bus": b, "phase": p, "inverter_id": "pv300"} for b, p in sites]
    observable = [f"{b}.{p}" for b in ("632", "671") for p in "abc"] + [f"{b}.{p}" for b, p in sites]
    return {
        "base": BASE,
        "substation": {"bus": "650", "y0": [1.0, 1.0, 1.0]},
        "buses": [{"id": b, "phases": p} for b, p in buses],
        "lines": [{"from": f, "to": t, "z": z} for f, t, z in lines],
        "loads": loads,
        "ders": ders,
        "observable": observable,
    }


def feeder40():
    """Three-phase trunk with laterals, about forty bus-phases."""
    rng = random.Random(40)
    buses = [("s", "abc")]
    lines = []
    loads = []
    trunk = [f"t{i}" for i in range(1, 9)]
    prev = "s"
    for t in trunk:
        buses.append((t, "abc"))
        lines.append((prev, t, zmat("601", 900 + 100 * rng.randint(0, 6))))
        prev = t
    laterals = [("t2", "l1", "a"), ("t3", "l2", "b"), ("t4", "l3", "c"), ("t5", "l4", "ac"), ("t6", "l5", "bc"),
                ("t7", "l6", "a"), ("l1", "l7", "a"), ("l4", "l8", "c"), ("l5", "l9", "b")]
    for parent, child, ph in laterals:
        buses.append((child, ph))
        if ph == "b":
            # Single-phase lateral on phase b uses the phase-c conductor data.
            z = zdiag(CONFIGS["605"][2][2] * 800 / 5280.0, "b")
        else:
            z = zmat({"a": "607", "c": "605", "ac": "604", "bc": "603"}[ph], 800)
        lines.append((parent, child, z))
    for b, ph in buses[1:]:
        for p in ph:
            kind = rng.choice(["PQ", "PQ", "Z", "I"])
            loads.append(load(b, p, round(rng.uniform(40, 160), 1), round(rng.uniform(15, 70), 1), kind))
    der_sites = [("t8", "a"), ("t8", "b"), ("t8", "c"), ("t6", "a"), ("t6", "b"), ("t6", "c"), ("t4", "a"),
                 ("t4", "b"), ("t4", "c"), ("l4", "a"), ("l4", "c"), ("l8", "c")]
    ders = [{"bus": b, "phase": p, "inverter_id": "pv300"} for b, p in der_sites]
    obs_buses = {"t2", "t4", "t6", "t8", "l4", "l8"}
    observable = [f"{b}.{p}" for b, ph in buses if b in obs_buses for p in ph]
    return {
        "base": BASE,
        "substation": {"bus": "s", "y0": [1.0, 1.0, 1.0]},
        "buses": [{"id": b, "phases": p} for b, p in buses],
        "lines": [{"from": f, "to": t, "z": z} for f, t, z in lines],
        "loads": loads,
        "ders": ders,
        "observable": observable,
    }


def tiny2bus():
    z = complex(0.01, 0.02) * ZB
    return {
        "base": BASE,
        "substation": {"bus": "0", "y0": [1.0, 1.0, 1.0]},
        "buses": [{"id": "0", "phases": "a"}, {"id": "1", "phases": "a"}],
        "lines": [{"from": "0", "to": "1", "z": zdiag(z, "a")}],
        "loads": [load("1", "a", 100.0, 50.0)],
        "ders": [{"bus": "1", "phase": "a", "inverter_id": "pv300"}],
        "observable": ["1.a"],
    }


def rls10():
    """Single-phase ten-node feeder with voltage-dependent loads."""
    rng = random.Random(10)
    parents = {"1": "0", "2": "1", "3": "2", "4": "3", "5": "2", "6": "5", "7": "1", "8": "7", "9": "8", "10": "9"}
    buses = [{"id": "0", "phases": "a"}] + [{"id": b, "phases": "a"} for b in parents]
    lines = []
    for child, parent in parents.items():
        z = complex(rng.uniform(0.004, 0.012), rng.uniform(0.008, 0.025)) * ZB
        lines.append({"from": parent, "to": child, "z": zdiag(z, "a")})
    loads = []
    for b in parents:
        a1 = round(rng.uniform(0.2, 0.5), 3)
        a2 = round(rng.uniform(0.0, 0.3), 3)
        loads.append({"bus": b, "phase": "a", "p_kw": round(rng.uniform(40, 120), 1),
                      "q_kvar": round(rng.uniform(10, 50), 1), "a0": round(1.0 - a1 - a2, 3), "a1": a1, "a2": a2})
    observable = [f"{b}.a" for b in ("1", "3", "4", "6", "8", "10")]
    ders = [{"bus": b, "phase": "a", "inverter_id": "pv300"} for b in ("4", "6", "10")]
    return {
        "base": BASE,
        "substation": {"bus": "0", "y0": [1.0, 1.0, 1.0]},
        "buses": buses,
        "lines": lines,
        "loads": loads,
        "ders": ders,
        "observable": observable,
    }


def case9():
    return {
        "base_mva": 100.0,
        "buses": [
            {"id": 1, "type": "slack", "vm": 1.0},
            {"id": 2, "type": "pv", "vm": 1.0},
            {"id": 3, "type": "pv", "vm": 1.0},
            {"id": 4, "type": "pq"},
            {"id": 5, "type": "pq", "pd_mw": 90.0, "qd_mvar": 30.0},
            {"id": 6, "type": "pq"},
            {"id": 7, "type": "pq", "pd_mw": 100.0, "qd_mvar": 35.0},
            {"id": 8, "type": "pq"},
            {"id": 9, "type": "pq", "pd_mw": 125.0, "qd_mvar": 50.0},
        ],
        "branches": [
            {"from": 1, "to": 4, "r": 0.0, "x": 0.0576, "b": 0.0},
            {"from": 4, "to": 5, "r": 0.017, "x": 0.092, "b": 0.158},
            {"from": 5, "to": 6, "r": 0.039, "x": 0.17, "b": 0.358},
            {"from": 3, "to": 6, "r": 0.0, "x": 0.0586, "b": 0.0},
            {"from": 6, "to": 7, "r": 0.0119, "x": 0.1008, "b": 0.209},
            {"from": 7, "to": 8, "r": 0.0085, "x": 0.072, "b": 0.149},
            {"from": 8, "to": 2, "r": 0.0, "x": 0.0625, "b": 0.0},
            {"from": 8, "to": 9, "r": 0.032, "x": 0.161, "b": 0.306},
            {"from": 9, "to": 4, "r": 0.01, "x": 0.085, "b": 0.176},
        ],
        "gens": [
            {"bus": 1, "p_mw": 0.0, "vm": 1.0},
            {"bus": 2, "p_mw": 163.0, "vm": 1.0},
            {"bus": 3, "p_mw": 85.0, "vm": 1.0},
        ],
        "interfaces": [
            {"bus": 5, "feeder_ref": "feeder13", "multiplicity": 29, "q_lo_mvar": -FEEDER_Q_MVAR * 29, "q_hi_mvar": FEEDER_Q_MVAR * 29},
            {"bus": 7, "feeder_ref": "feeder13", "multiplicity": 32, "q_lo_mvar": -FEEDER_Q_MVAR * 32, "q_hi_mvar": FEEDER_Q_MVAR * 32},
            {"bus": 9, "feeder_ref": "feeder13", "multiplicity": 40, "q_lo_mvar": -FEEDER_Q_MVAR * 40, "q_hi_mvar": FEEDER_Q_MVAR * 40},
        ],
    }


def inverters(s_kva=350.0, q_max=154.0):
    return {
        "inverters": [
            {"id": "pv300", "s_kva": s_kva, "p_max_kw": 300.0, "q_max_kvar": q_max, "m_pq": 2.2, "b_pq": 0.0},
        ],
        "profile": {
            "vv": {"v1": 0.92, "v2": 0.98, "v3": 1.02, "v4": 1.08, "v_ref": 1.0, "q_frac": 0.44,
                   "set_lo": 0.01, "set_hi": 0.05},
            "vw": {"v1": 1.06, "v2": 1.10, "p_floor_frac": 0.2, "set_lo": 1.02, "set_hi": 1.08},
            "wv": {"p2": 0.5, "p3": 1.0, "q_frac": 0.44, "set_lo": 0.2, "set_hi": 0.8},
            "v_box_lo": 0.9,
            "v_box_hi": 1.1,
        },
    }


SCENARIOS = {
    "tiny-2bus": {"description": "Two-bus single-phase pedagogical feeder", "feeder": "feeders/tiny-2bus.json",
                  "inverters": "inverters/pv300.json"},
    "feeder13-highpv": {"description": "13-bus-class feeder, light load and full irradiance (overvoltage)",
                        "feeder": "feeders/feeder13.json", "inverters": "inverters/pv300.json",
                        "transmission": "transmission/case9.json", "substation_v": 1.046, "load_scale": 0.2,
                        "irradiance": 1.0},
    "feeder13-lowpv": {"description": "13-bus-class feeder, nominal load and low irradiance",
                       "feeder": "feeders/feeder13.json", "inverters": "inverters/pv300.json",
                       "substation_v": 1.03, "load_scale": 0.5, "irradiance": 0.2},
    "feeder13-extreme": {"description": "13-bus-class feeder, inverters with little reactive range (curtailment)",
                         "feeder": "feeders/feeder13.json", "inverters": "inverters/pv300-lowvar.json",
                         "substation_v": 1.04, "load_scale": 0.05, "irradiance": 1.0},
    "feeder40": {"description": "Synthetic 40-node feeder with 12 DERs", "feeder": "feeders/feeder40.json",
                 "inverters": "inverters/pv300.json", "transmission": "transmission/case9.json",
                 "load_scale": 0.5, "irradiance": 1.0},
    "rls10": {"description": "Ten-node single-phase feeder with ZIP loads for estimator checks",
              "feeder": "feeders/rls10.json", "inverters": "inverters/pv300.json"},
    "case9-base": {"description": "9-bus transmission case with the 13-bus-class feeders attached",
                   "feeder": "feeders/feeder13.json", "inverters": "inverters/pv300.json",
                   "transmission": "transmission/case9.json", "load_scale": 0.35},
    "case9-outage": {"description": "9-bus transmission case with branch 4-9 out of service",
                     "feeder": "feeders/feeder13.json", "inverters": "inverters/pv300.json",
                     "transmission": "transmission/case9.json", "load_scale": 0.35, "outage": [4, 9]},
}

COORDINATION = {
    "feeder13": {"transmission": "../../transmission/case9.json", "outage": [4, 9],
                 "feeders": [{"scenario": "feeder13-highpv", "interface_bus": b} for b in (5, 7, 9)],
                 "eps_kvar": 1.0, "eps_rel": 0.01, "max_iters": 10, "encoding": "sos1"},
    "feeder40": {"transmission": "../../transmission/case9.json", "outage": [4, 9],
                 "feeders": [{"scenario": "feeder40", "interface_bus": b} for b in (5, 7, 9)],
                 "eps_kvar": 1.0, "eps_rel": 0.01, "max_iters": 20, "encoding": "sos1"},
}


def write(rel, doc):
    path = ROOT / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")


def main():
    write("feeders/feeder13.json", feeder13())
    write("feeders/feeder40.json", feeder40())
    write("feeders/tiny-2bus.json", tiny2bus())
    write("feeders/rls10.json", rls10())
    write("transmission/case9.json", case9())
    write("inverters/pv300.json", inverters())
    write("inverters/pv300-lowvar.json", inverters(310.0, 60.0))
    for name, doc in SCENARIOS.items():
        write(f"scenarios/{name}.json", doc)
    for name, doc in COORDINATION.items():
        write(f"scenarios/coordination/{name}.json", doc)
    files = sorted(p for p in ROOT.rglob("*") if p.suffix in (".json", ".csv"))
    lines = [f"{hashlib.sha256(p.read_bytes()).hexdigest()}  {p.relative_to(ROOT).as_posix()}" for p in files]
    (ROOT / "CHECKSUMS").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
