"""Acceptance suite: one test per criterion, each timed against its budget.

Every test records a ``PASS criterion N`` or ``FAIL criterion N`` line, shown in
the terminal summary (and printed directly when run with ``-s``).
"""

from __future__ import annotations

import math
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import pytest

from sixgsim.cognition import CharacteristicFn, detect_drift, shapley_exact
from sixgsim.inter import GBPS, E2eSla, InfeasibleBudget, decompose_sla, recompose
from sixgsim.intra import CapabilityRecord, NoFeasiblePlacement, ServiceChain, ServiceFunction, place_service
from sixgsim.kpi import KpiRequirementSet
from sixgsim.monitoring import EnergyLedger, account_energy, compute_kpi, nearest_rank
from sixgsim.scenario import bundled_scenarios, load_scenario
from sixgsim.sim import Simulation

from test_cognition import permutation_oracle, random_table
from test_intra import placement_oracle, random_instance
from test_matric import run_oscillation
from test_monitoring import jitter_oracle, rank_oracle, window
from test_sim import check_conservation

BUNDLED = bundled_scenarios()


@pytest.fixture
def criterion(acceptance_log):
    @contextmanager
    def timed(n, title, budget_s):
        t0 = time.perf_counter()
        try:
            yield
            elapsed = time.perf_counter() - t0
            if elapsed >= budget_s:
                raise AssertionError(f"took {elapsed:.2f} s, budget {budget_s} s")
        except BaseException as e:
            line = f"FAIL criterion {n}: {title} ({type(e).__name__}: {e})"
            acceptance_log.append((n, line))
            print(line)
            raise
        line = f"PASS criterion {n}: {title} ({elapsed:.2f} s of {budget_s} s)"
        acceptance_log.append((n, line))
        print(line)

    return timed


def timed_run(sc, **kw):
    sim = Simulation(sc, **kw)
    t0 = time.perf_counter()
    report = sim.run()
    return sim, report, time.perf_counter() - t0


def test_criterion_1_determinism(criterion, tmp_path):
    with criterion(1, "bundled scenarios are byte-identical across runs", budget_s=len(BUNDLED) * 2 * 10):
        for stem, path in BUNDLED.items():
            sc = load_scenario(path)
            outs = []
            for i in range(2):
                _, report, dt = timed_run(sc)
                assert dt < 10, f"{stem} run {i} took {dt:.2f} s"
                outs.append(report.write(tmp_path / f"{stem}.{i}"))
            for name in ("report.csv", "trace.txt"):
                assert outs[0][name].read_bytes() == outs[1][name].read_bytes(), f"{stem}/{name} differs"


def test_criterion_2_conservation(criterion):
    with criterion(2, "no capacity invariant broken over a 1e5-event randomized run", budget_s=30):
        assert __debug__, "assertions must be compiled in"
        sim, report, _ = timed_run(load_scenario(BUNDLED["conservation_stress"]), record_trace=False)
        assert report.summary["events_delivered"] >= 100_000
        assert report.summary["max_at_load_fraction"] <= 1.0
        assert report.summary["rejected"], "the stress run should push admission to its limit"
        check_conservation(sim)


def test_criterion_3_sla_decomposition(criterion):
    with criterion(3, "1000 random SLAs decompose soundly over 1-2 domain paths", budget_s=5):
        rng = random.Random(31)
        for i in range(1000):
            bound = rng.randint(1, 2_000_000)
            path = ("a", "b")[: rng.randint(1, 2)]
            mins = [rng.randint(0, bound // len(path)) for _ in path]
            rel = rng.choice([0.9, 0.999, 0.99999, 0.999999, 1.0, rng.uniform(0.5, 1.0)])
            tput = rng.randint(1, 100 * GBPS)
            kpi = KpiRequirementSet(bound, tput, tput // 2, rel, jitter_bound_us=rng.choice([None, bound // 2]))
            caps = [CapabilityRecord(d, 100 * GBPS, m, 1.0, 1.0, ("z0",)) for d, m in zip(path, mins)]
            try:
                parts = decompose_sla(E2eSla(f"s{i}", kpi, path), caps)
            except InfeasibleBudget:
                assert sum(mins) > bound
                continue
            assert sum(p.kpi.latency_bound_us for p in parts) == bound
            assert math.prod(p.kpi.reliability_min for p in parts) >= rel - 1e-12
            assert recompose(parts).reliability_min >= rel - 1e-12
            assert all((p.kpi.throughput_dl_bps, p.kpi.throughput_ul_bps) == (tput, tput // 2) for p in parts)


def test_criterion_4_metaverse_desk(criterion):
    with criterion(4, "M1 meets p99 <= 20 ms with no violation; M2 reports a violation near saturation",
                   budget_s=20):
        m1 = load_scenario(BUNDLED["m1_metaverse"])
        ats = [a.build() for d in m1.domains for a in d.access_techs]
        assert sum(a.capacity_bps for a in ats) == 200 * GBPS
        assert all(a.base_latency_us <= 5_000 for a in ats)
        assert m1.duration_s == 60 and sum(w.user_count for w in m1.workloads) == 20
        _, r1, _ = timed_run(m1)
        lat = [float(row[2]) for row in r1.sla_rows if row[1] == "latency"]
        assert len(lat) == 20 and max(lat) <= 20_000
        assert r1.summary["violated_slas"] == [] and r1.summary["violation_events"] == 0

        m2 = load_scenario(BUNDLED["m2_metaverse_saturated"])
        assert sum(a.build().capacity_bps for d in m2.domains for a in d.access_techs) == 80 * GBPS
        _, r2, _ = timed_run(m2)
        s = r2.summary
        assert s["violations_by_kpi"].get("throughput", 0) >= 1
        assert s["saturation_us"] is not None and s["first_throughput_violation_us"] is not None
        assert 0 <= s["first_throughput_violation_us"] - s["saturation_us"] <= 5_000_000


def test_criterion_5_shapley(criterion):
    with criterion(5, "Shapley efficiency on 1000 games and exact oracle match for n <= 6", budget_s=10):
        rng = random.Random(41)
        exact = 0
        for _ in range(1000):
            n = rng.randint(1, 10)
            small = n <= 6
            table = random_table(rng, n, rational=small)
            phi = shapley_exact(CharacteristicFn.from_table(n, table)).phi
            grand = table[frozenset(range(n))] - table[frozenset()]
            assert abs(float(sum(phi)) - float(grand)) <= 1e-9
            if small:
                assert list(phi) == permutation_oracle(n, lambda s: table[s])
                exact += 1
        assert exact > 300


def test_criterion_6_placement(criterion):
    with criterion(6, "placement cost equals the exhaustive oracle on 200 instances", budget_s=5):
        rng = random.Random(53)
        checked = 0
        while checked < 200:
            nodes, fns = random_instance(rng)
            chain = ServiceChain("c", tuple(ServiceFunction(c, m, 1) for c, m in fns))
            expected = placement_oracle(fns, nodes)
            if expected is None:
                with pytest.raises(NoFeasiblePlacement):
                    place_service(chain, nodes)
                continue
            assert place_service(chain, nodes).cost == expected
            checked += 1


def test_criterion_7_energy(criterion):
    with criterion(7, "energy ledger, sleep savings and 1 Tbit/J efficiency", budget_s=10):
        led = EnergyLedger()
        account_energy(led, 0, 10_000_000, {"at": [(0, 100.0)]})
        account_energy(led, 10_000_000, 14_000_000, {"node": [(10_000_000, 50.0), (12_000_000, 150.0)]})
        account_energy(led, 14_000_000, 14_500_000, {"at": [(14_000_000, 8.0), (14_250_000, 0.0)]})
        assert led.joules == {"at": 1000.0 + 2.0, "node": 100.0 + 300.0}

        _, on, _ = timed_run(load_scenario(BUNDLED["intermittent_always_on"]))
        _, off, _ = timed_run(load_scenario(BUNDLED["intermittent_sleep"]))
        e_on, e_off = on.summary["energy"], off.summary["energy"]
        assert e_off["total_j"] < e_on["total_j"]
        assert e_off["delivered_bits"] == e_on["delivered_bits"] > 0

        fixture = EnergyLedger()
        account_energy(fixture, 0, 2_000_000, {"at": [(0, 0.5)]}, delivered_bits=10**12)
        assert fixture.total() == 1.0 and fixture.efficiency_tbit_per_j() == 1.0


def test_criterion_8_estimators(criterion):
    with criterion(8, "percentile and jitter equal sort oracles on 500 windows; drift fixtures", budget_s=5):
        rng = random.Random(67)
        for _ in range(500):
            lat = [rng.randint(0, 50_000) for _ in range(rng.randint(1, 400))]
            p = rng.choice([0.5, 0.9, 0.95, 0.99, 0.999, 0.01, 0.29])
            assert nearest_rank(lat, p) == rank_oracle(lat, p)
            assert compute_kpi(window(lat), "latency", p) == rank_oracle(lat, p)
            assert compute_kpi(window(lat), "jitter") == jitter_oracle(lat)

        r = detect_drift([9, 11], [14])
        assert (r.mean_shift, r.threshold, r.drifted) == (4.0, 3.0, True)
        r = detect_drift([8, 12], [15.5])
        assert (r.mean_shift, r.threshold, r.drifted) == (5.5, 6.0, False)
        r = detect_drift([10, 10, 10], [10])
        assert (r.mean_shift, r.threshold, r.drifted) == (0.0, 0.0, False)


def test_criterion_9_handover_stability(criterion):
    with criterion(9, "oscillating scores give at most one handover per dwell and one attachment", budget_s=5):
        for dwell, step in ((100_000, 10_000), (50_000, 5_000), (20_000, 20_000), (1_000_000, 1_000)):
            horizon = 5_000_000
            times, m = run_oscillation(dwell, horizon, step)
            assert times
            assert all(b - a >= dwell for a, b in zip(times, times[1:]))
            assert len(times) <= math.ceil(horizon / dwell)
            assert sum(m.handovers.values()) == len(times)
