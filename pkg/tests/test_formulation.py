import pytest
from hypothesis import given, settings, strategies as st

from gridgets import formulation as F
from gridgets.case_io import load_case
from gridgets.dlr import build_rating_series
from gridgets.case_io import bundled_weather
from gridgets.network import Demand, Generator, Line, Network, Substation
from gridgets.solver import SolverConfig, run

import oracles

# every modelling component of the co-optimization problem, by provenance tag
REQUIRED_TAGS = {
    "DC", "max_voltage", "Pgmax_1", "Pgmax_2", "Pdmax_1", "Pdmax_2", "Plmax_1", "Plmax_2", "hl_max", "hl",
    "sumPl", "Pf_NTO", "theta_max_1", "theta_max_2", "hg1", "hd1", "hle1", "balance1", "balance2",
    "DLR_Cons", "VID", "rangeb", "gen_cost", "load_curtail",
}
PLUMBING = {"ref_pin"}


def triangle(load=90.0, p_min=0.0):
    subs = [Substation(1, True), Substation(2), Substation(3)]
    lines = [Line(1, 1, 2, 10.0, 100.0), Line(2, 1, 3, 5.0, 40.0), Line(3, 2, 3, 4.0, 100.0)]
    gens = [Generator(1, 1, p_min, 250.0, 0.01, 20.0, 100.0), Generator(2, 2, 0.0, 100.0, 0.02, 35.0, 0.0)]
    return Network(subs, lines, gens, [Demand(1, 3, load)], name="tri")


def solve(f, gap=1e-9):
    return run(f, SolverConfig(rel_gap_target=gap))


def test_fixed_triangle_has_no_binaries():
    f = F.build(triangle())
    assert f.binaries == []
    assert sum(c.tag == "DC" and c.sense == "==" for c in f.constraints) == 3
    assert "Pf_NTO" not in {c.tag for c in f.constraints}


def test_binary_count_optimized_case24():
    net = load_case("case24")
    f = F.build(net, cfg=F.FormulationConfig(topology_mode="optimized"))
    expected = len(net.substations) + len(net.generators) + len(net.demands) + 3 * len(net.lines)
    assert len(f.binaries) == expected


def test_vid_variables_case24():
    net = load_case("case24")
    vid = [l.id for l in net.lines[:20]]
    f = F.build(net.equip(vid=vid), cfg=F.FormulationConfig(vid_range=0.1))
    dbs = [v for v in f.variables if v.name.startswith("db[")]
    assert len(dbs) == 20 and len(f.bilinear) == 20
    for v in dbs:
        b = abs(net.line(int(v.name[3:-1])).susceptance_nominal)
        assert v.lb == pytest.approx(-0.1 * b) and v.ub == pytest.approx(0.1 * b)
        assert v.tag == "rangeb"
    assert len(f.envelope_constraints()) == 6 * 20


def test_tag_coverage():
    net = load_case("case24").equip(dlr=[1, 2], vid=[3, 4])
    ratings = build_rating_series(net, bundled_weather("high_wind"))
    seen = set()
    for mode in ("fixed", "optimized"):
        f = F.build(net, ratings, F.FormulationConfig(topology_mode=mode), hour=3)
        seen |= f.tags()
        assert f.tags() <= set(F.TAG_GROUPS)
        assert all(c.tag for c in f.all_constraints())
    missing = REQUIRED_TAGS - seen
    assert not missing, f"no emitting site for {sorted(missing)}"
    assert set(F.TAG_GROUPS) == REQUIRED_TAGS | PLUMBING


def test_dlr_limit_follows_rating():
    net = load_case("case24").equip(dlr=[5])
    ratings = build_rating_series(net, bundled_weather("high_wind"))
    f = F.build(net, ratings, hour=12)
    v = f.var("P_l[5]")
    assert v.ub * net.base_mva == pytest.approx(ratings.limit(5, 12))
    assert v.tag == "DLR_Cons"
    with pytest.raises(F.FormulationError, match="no rating"):
        F.build(net, ratings, hour=40)


def test_config_validation():
    with pytest.raises(F.FormulationError):
        F.FormulationConfig(cost_segments=0)
    with pytest.raises(F.FormulationError):
        F.FormulationConfig(topology_mode="other")
    with pytest.raises(F.FormulationError):
        F.FormulationConfig(vid_range=1.5)


def test_big_m_is_symbolically_safe():
    net = triangle().equip(vid=[1, 2])
    cfg = F.FormulationConfig(topology_mode="optimized", vid_range=0.3)
    f = F.build(net, cfg=cfg)
    terms = {t.aux_var: t for t in f.bilinear}
    for c in f.constraints:
        if c.tag != "Pf_NTO":
            continue
        m = dict(c.coeffs)
        hl = next(k for k in m if k.startswith("h_l["))
        big_m = abs(m[hl])
        # worst |b*delta + w - P| over the variable box when h_l = 0
        worst = 0.0
        fr = [k for k in m if k.startswith("theta_le") and k.endswith("fr]")][0]
        to = [k for k in m if k.startswith("theta_le") and k.endswith("to]")][0]
        worst += abs(m[fr]) * (f.var(fr).ub - f.var(to).lb)
        for k in m:
            if k.startswith("w["):
                t = terms[k]
                worst += max(abs(t.x_bounds[0]), abs(t.x_bounds[1])) * max(map(abs, t.y_bounds))
        pl = next(k for k in m if k.startswith("P_l["))
        worst += max(abs(f.var(pl).lb), abs(f.var(pl).ub))
        assert big_m >= worst - 1e-12


def test_fix_topology_errors():
    f = F.build(triangle(), cfg=F.FormulationConfig(topology_mode="optimized"))
    a = F.nominal_assignment(f)
    a.pop("h_l[1]")
    with pytest.raises(F.FormulationError, match="incomplete"):
        F.fix_topology(f, a)
    a = F.nominal_assignment(f)
    a["h_g[1]"] = 1  # busbar 2 while the coupler is closed
    with pytest.raises(F.FormulationError, match="exclusivity"):
        F.fix_topology(f, a)
    with pytest.raises(F.FormulationError):
        F.fix_topology(f, {"P_l[1]": 1})


def test_open_line_carries_no_flow():
    f = F.build(triangle(), cfg=F.FormulationConfig(topology_mode="optimized"))
    a = F.nominal_assignment(f)
    a["h_l[2]"] = 0
    g = F.fix_topology(f, a)
    for name in ("P_l[2]", "P_le[2,fr,1]", "P_le[2,to,1]", "P_le[2,fr,2]"):
        assert g.var(name).lb == 0 and g.var(name).ub == 0
    r = solve(g)
    assert r.incumbent.flows[2] == 0.0
    assert r.incumbent.topology["open_lines"] == [2]


def test_fixed_equals_nominal_fix():
    net = triangle()
    f1 = F.build(net)
    f2 = F.fix_topology(F.build(net, cfg=F.FormulationConfig(topology_mode="optimized")), F.nominal_assignment(net))
    assert solve(f1).incumbent_objective == pytest.approx(solve(f2).incumbent_objective, rel=1e-10)


def test_empty_busbar_split_changes_nothing():
    net = triangle()
    f = F.build(net, cfg=F.FormulationConfig(topology_mode="optimized"))
    a = F.nominal_assignment(f)
    base = solve(F.fix_topology(f, a)).incumbent_objective
    a["h_b[2]"] = 0
    assert solve(F.fix_topology(f, a)).incumbent_objective == pytest.approx(base, rel=1e-10)


def _split_demand_assignment(f):
    # substation 3 split, its demand and the to-end of line 2 on busbar 2
    a = F.nominal_assignment(f)
    a.update({"h_b[3]": 0, "h_d[1]": 1, "h_le[2,to]": 1})
    return a


def test_split_matches_bus_level_oracle():
    net = triangle()
    f = F.build(net, cfg=F.FormulationConfig(topology_mode="optimized"))
    a = _split_demand_assignment(f)
    ours = solve(F.fix_topology(f, a)).incumbent_objective
    ref = oracles.topology_lp(net, a, 0.6)
    assert ours == pytest.approx(ref, rel=1e-7)


def test_strict_balance_double_counts():
    net = triangle()
    d1 = F.build(net, cfg=F.FormulationConfig(topology_mode="optimized"))
    strict = F.build(net, cfg=F.FormulationConfig(topology_mode="optimized", strict_paper_balance=True))
    a = _split_demand_assignment(d1)
    r1 = solve(F.fix_topology(d1, a))
    r2 = solve(F.fix_topology(strict, a))
    # per-busbar balance serves the demand through line 2 (40 MW limit)
    assert r1.incumbent.served[1] == pytest.approx(40.0, abs=1e-6)
    # the literal form counts every line flow at both busbars: busbar 1 then forces
    # the line-2 flow to cancel line 3, and the demand is shed entirely
    assert r2.incumbent.served[1] == pytest.approx(0.0, abs=1e-6)
    assert r2.incumbent_objective > r1.incumbent_objective + 1e4
    # even merged, the empty busbar-2 row forces zero net line flow at every
    # substation, so the load at substation 3 can only be shed
    n1 = solve(F.build(net)).incumbent_objective
    n2 = solve(F.build(net, cfg=F.FormulationConfig(strict_paper_balance=True))).incumbent_objective
    assert n1 < 1e4
    assert n2 == pytest.approx(100.0 + 2000.0 * 90.0, rel=1e-10)


def test_zero_load_solution():
    net = triangle(load=0.0)
    r = solve(F.build(net))
    s = r.incumbent
    assert all(abs(v) < 1e-9 for v in s.flows.values())
    assert s.cost_generation == pytest.approx(sum(g.cost_constant for g in net.generators))
    assert s.cost_load_shedding == 0.0


def test_shedding_cost_is_voll_times_shortfall():
    net = triangle(load=400.0)  # more than the lines can deliver
    r = solve(F.build(net))
    s = r.incumbent
    short = 400.0 - s.served[1]
    assert short > 1.0
    assert s.cost_load_shedding == pytest.approx(2000.0 * short)
    assert s.violations == []


def test_no_shedding_flag_makes_overload_infeasible():
    net = triangle(load=400.0)
    r = solve(F.build(net, cfg=F.FormulationConfig(allow_shedding=False)))
    assert r.status == "infeasible" and r.incumbent is None


@settings(max_examples=30, deadline=None)
@given(st.floats(0.001, 0.05), st.floats(5, 40), st.floats(1, 249))
def test_pwl_gap_bound(c2, c1, load):
    subs = [Substation(1, True)]
    net = Network(subs, [], [Generator(1, 1, 0.0, 250.0, c2, c1, 10.0)], [Demand(1, 1, load)])
    cfg = F.FormulationConfig(voll=1e6)
    s = solve(F.build(net, cfg=cfg)).incumbent
    gap = s.cost_generation_pwl - s.cost_generation
    assert gap >= -1e-6
    assert gap <= c2 * (250.0 / 8 / 2) ** 2 + 1e-6


def test_extract_solution_flags_violations():
    f = F.build(triangle())
    r = solve(f)
    raw = dict(r.incumbent.values)
    raw["P_l[1]"] += 0.5
    sol = F.extract_solution(f, raw)
    assert any("P_l[1]" in v or "DC" in v or "balance" in v for v in sol.violations)
    with pytest.raises(F.FormulationError):
        F.extract_solution(f, {})


def test_extract_checks_exact_flow_law():
    net = triangle().equip(vid=[1])
    f = F.build(net, cfg=F.FormulationConfig(vid_range=0.5))
    r = solve(f, gap=1e-6)
    raw = dict(r.incumbent.values)
    assert r.incumbent.violations == []
    raw["w[1]"] += 0.01  # breaks w = db * delta without touching the linear rows' feasibility check
    sol = F.extract_solution(f, raw)
    assert sol.violations


def test_dump_lists_every_row():
    f = F.build(triangle().equip(vid=[1]))
    text = f.dump()
    assert text.startswith("\\ formulation tri")
    assert text.count("\\ tag:") >= len(f.all_constraints()) or "Subject To" in text
    for tag in ("DC", "VID", "balance1", "gen_cost"):
        assert tag in text


def test_solution_to_dict_round_trips_json():
    import json

    s = solve(F.build(triangle())).incumbent
    d = json.loads(json.dumps(s.to_dict()))
    assert d["cost_generation"] == pytest.approx(s.cost_generation)


def test_delta_box_tightened_only_when_closed():
    net = triangle().equip(vid=[2])
    cfg = F.FormulationConfig(topology_mode="optimized", vid_range=0.1)
    f = F.build(net, cfg=cfg)
    assert f.bilinear[0].y_bounds == (-1.2, 1.2)
    g = F.fix_topology(f, F.nominal_assignment(f))
    expected = 0.4 / (0.9 * 5.0)
    assert g.bilinear[0].y_bounds == pytest.approx((-expected, expected))


def test_build_is_pure():
    net = load_case("case24").equip(vid=[1, 2])
    a = F.build(net, cfg=F.FormulationConfig(topology_mode="optimized"))
    b = F.build(net, cfg=F.FormulationConfig(topology_mode="optimized"))
    assert a.dump() == b.dump()
    F.fix_topology(a, F.nominal_assignment(a))
    assert a.dump() == b.dump()
