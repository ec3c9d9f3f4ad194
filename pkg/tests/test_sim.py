from __future__ import annotations

import csv
import io
import json

import pytest

from sixgsim.scenario import bundled_scenarios, load_scenario
from sixgsim.sim import ENERGY_COLUMNS, REPORT_COLUMNS, Simulation, expected_concurrency, run
from sixgsim.workloads import Arrival, UseCaseSpec

BUNDLED = bundled_scenarios()


def scenario(name):
    return load_scenario(BUNDLED[name])


def check_conservation(sim):
    for d in sim.domains.values():
        for at in d.matric.ats.values():
            assert at.committed_bps == sum(at.shares.values())
            assert 0 <= at.committed_bps <= at.capacity_bps
        for node in d.orch.nodes.values():
            assert 0 <= node.committed_cpu <= node.cpu_units
            assert 0 <= node.committed_mem <= node.mem_mb


@pytest.fixture(scope="module")
def m1():
    sim = Simulation(scenario("m1_metaverse"))
    return sim, sim.run()


@pytest.fixture(scope="module")
def m2():
    sim = Simulation(scenario("m2_metaverse_saturated"))
    return sim, sim.run()


def test_metaverse_desk_meets_every_sla(m1):
    sim, r = m1
    s = r.summary
    assert s["sla_count"] == 20 and s["violated_slas"] == [] and s["rejected"] == []
    rows = list(csv.DictReader(io.StringIO(r.report_csv())))
    lat = [int(row["measured"]) for row in rows if row["kpi"] == "latency"]
    assert len(lat) == 20 and max(lat) <= 20_000
    assert all(row["pass"] == "true" for row in rows)
    check_conservation(sim)


def test_saturated_desk_violates_throughput(m2):
    sim, r = m2
    s = r.summary
    assert s["violations_by_kpi"] == {"throughput": len(s["violated_slas"])} and s["violated_slas"]
    assert s["saturation_us"] is not None
    assert s["first_throughput_violation_us"] - s["saturation_us"] <= 5_000_000
    assert s["max_at_load_fraction"] == pytest.approx(1.0)
    failing = {row[0] for row in r.sla_rows if row[4] == "false"}
    assert failing == set(s["violated_slas"])
    check_conservation(sim)


def test_report_tables(m1):
    _, r = m1
    assert r.report_csv().splitlines()[0] == ",".join(REPORT_COLUMNS)
    lines = r.energy_csv().splitlines()
    assert lines[0] == ",".join(ENERGY_COLUMNS) and lines[-1].startswith("total,")
    parts = [float(line.split(",")[1]) for line in lines[1:-1]]
    assert sum(parts) == pytest.approx(float(lines[-1].split(",")[1]))
    assert json.loads(r.summary_json())["trace_digest"] == r.summary["trace_digest"]


def test_sleep_policy_saves_energy_without_losing_bits():
    on = run(scenario("intermittent_always_on")).summary["energy"]
    off = run(scenario("intermittent_sleep")).summary["energy"]
    assert off["delivered_bits"] == on["delivered_bits"] > 0
    assert off["total_j"] < on["total_j"]
    assert off["efficiency_bit_per_j"] > on["efficiency_bit_per_j"]


def test_empty_scenario_draws_idle_power_only():
    r = run(scenario("empty"))
    assert r.summary["sla_count"] == 0 and r.summary["energy"]["delivered_bits"] == 0
    assert r.summary["energy"]["efficiency_bit_per_j"] == 0


def test_multidomain_paths_and_controls():
    sim = Simulation(scenario("mixed_multidomain"), explain=True)
    s = sim.run().summary
    assert s["violated_slas"] == []
    paths = {tuple(p["path"]) for p in s["security_plans"].values()}
    assert any(len(p) == 2 for p in paths)
    for plan in s["security_plans"].values():
        assert plan["did_layers"] >= (2 if len(plan["path"]) > 1 else 1)
    assert all(p["status"] == "placed" for p in s["placements"].values())
    check_conservation(sim)

    ex = s["explanations"]
    assert ex and {e["decision"].split(":")[0] for e in ex} == {"select_at", "select_domains"}
    for e in ex:
        assert sum(e["attribution"].values()) == pytest.approx(e["score"], abs=1e-9)
        assert 0.0 <= e["score"] or e["decision"].startswith("select_domains")


def test_explanations_off_by_default(m1):
    assert "explanations" not in m1[1].summary


def test_seed_controls_the_run():
    sc = scenario("intermittent_sleep")
    a, b, c = run(sc), run(sc.with_seed(sc.seed + 1)), run(sc)
    assert a.summary["trace_digest"] != b.summary["trace_digest"]
    assert a.trace_text == c.trace_text and a.report_csv() == c.report_csv()


def test_expected_concurrency():
    assert expected_concurrency(UseCaseSpec("metaverse", 40, 1.0, 2.0)) == 40
    poisson = UseCaseSpec("metaverse", 4000, 100.0, 0.01, Arrival("poisson", 100.0))
    assert expected_concurrency(poisson) == 3
    assert expected_concurrency(UseCaseSpec("metaverse", 2, 1.0, 10.0, Arrival("poisson", 100.0))) == 2
