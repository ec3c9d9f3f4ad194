from __future__ import annotations

import itertools
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sixgsim.inter import (
    GBPS, MBPS, MS, VP_EDGE_KPI, DomainSla, E2eSla, InfeasibleBudget, InteractionClass, NoFeasibleDomain, Policy,
    Risk, TaskIntent, UnknownUseCase, UseCase, apply_policies, compose_requests, decompose_sla, path_cost, recompose,
    risk_for_path, select_controls, select_domains, translate_intent, vp_kpi,
)
from sixgsim.intra import CapabilityRecord
from sixgsim.kpi import KpiRequirementSet


def cap(d, lat=1_000, free=100 * GBPS, rel=0.99999, cost=1.0, zones=("z0",)):
    return CapabilityRecord(d, free, lat, rel, cost, tuple(zones))


def intent(kind, zone="z0", **kw):
    return TaskIntent(kind, kw.pop("users", 10), kw.pop("area", 1.0), zone, **kw)


# -- translation ---------------------------------------------------------------


def test_metaverse_preset():
    k = translate_intent(intent("metaverse"))
    assert k.latency_bound_us == 20 * MS and k.percentile == 0.99 and not k.latency_strict
    assert k.throughput_dl_bps == k.throughput_ul_bps == 5 * GBPS
    assert k.reliability_min == 0.999999
    assert k.positioning_cm == 1.0


def test_digital_twin_preset():
    k = translate_intent(intent("digital_twin"))
    assert k.latency_bound_us == 20 * MS
    assert (k.throughput_dl_bps, k.throughput_ul_bps) == (GBPS // 10, GBPS // 20)
    assert k.positioning_cm == 10.0


def test_factory_presets():
    r = translate_intent(intent("factory_robotics"))
    assert r.latency_bound_us == 20 * MS and r.latency_strict
    assert r.throughput_dl_bps == MBPS and r.positioning_cm == 1.0
    d = translate_intent(intent("factory_dt"))
    assert d.throughput_dl_bps == GBPS and d.positioning_cm == 10.0


def test_virtual_production_classes():
    assert (vp_kpi("remote_music").latency_bound_us, vp_kpi("remote_music").jitter_bound_us) == (15 * MS, 1 * MS)
    assert (vp_kpi("two_way").latency_bound_us, vp_kpi("two_way").jitter_bound_us) == (50 * MS, 25 * MS)
    assert (vp_kpi("multi_way").latency_bound_us, vp_kpi("multi_way").jitter_bound_us) == (150 * MS, 50 * MS)
    assert vp_kpi("near_live").latency_bound_us == 1700 * MS and vp_kpi("near_live").jitter_bound_us is None
    k = translate_intent(intent("virtual_production", interaction_class="two_way"))
    assert k.latency_bound_us == 50 * MS
    assert VP_EDGE_KPI.throughput_dl_bps == 10 * GBPS and VP_EDGE_KPI.latency_strict
    assert VP_EDGE_KPI.latency_bound_us == 50 * MS and VP_EDGE_KPI.jitter_bound_us == 10 * MS


def test_unknown_use_case():
    with pytest.raises(UnknownUseCase):
        intent("holodeck")


# -- decomposition ----------------------------------------------------------------

E2E = KpiRequirementSet(20 * MS, 5 * GBPS, 5 * GBPS, 0.999999, jitter_bound_us=4 * MS)


def test_single_domain_gets_full_budget():
    (p,) = decompose_sla(E2eSla("s", E2E, ("a",)), [cap("a")])
    assert p.kpi == E2E and p.id == "s.a"


def test_two_domain_split_proportional_to_minimum_latency():
    parts = decompose_sla(E2eSla("s", E2E, ("a", "b")), [cap("a", 1_000), cap("b", 3_000)])
    assert [p.kpi.latency_bound_us for p in parts] == [5_000, 15_000]
    assert [p.kpi.jitter_bound_us for p in parts] == [1_000, 3_000]
    for p in parts:
        assert p.kpi.reliability_min >= 0.999999 ** 0.5 - 1e-15
        assert p.kpi.throughput_dl_bps == 5 * GBPS
    assert abs(math.prod(p.kpi.reliability_min for p in parts) - 0.999999) <= 1e-12


def test_infeasible_budget():
    with pytest.raises(InfeasibleBudget):
        decompose_sla(E2eSla("s", E2E, ("a", "b")), [cap("a", 15_000), cap("b", 6_000)])
    with pytest.raises(InfeasibleBudget):
        decompose_sla(E2eSla("s", E2E, ("a", "zz")), [cap("a")])


@given(st.integers(1, 10**7), st.integers(0, 10**6), st.integers(0, 10**6),
       st.floats(0.5, 1.0), st.integers(1, 10**12), st.booleans())
def test_decomposition_is_sound(bound, m1, m2, rel, tput, two):
    path = ("a", "b") if two else ("a",)
    mins = {"a": m1, "b": m2}
    kpi = KpiRequirementSet(bound, tput, tput, rel)
    caps = [cap(d, mins[d]) for d in path]
    try:
        parts = decompose_sla(E2eSla("s", kpi, path), caps)
    except InfeasibleBudget:
        assert sum(mins[d] for d in path) > bound or two
        return
    assert sum(p.kpi.latency_bound_us for p in parts) == bound
    assert math.prod(p.kpi.reliability_min for p in parts) >= rel - 1e-12
    assert all(p.kpi.throughput_dl_bps == tput for p in parts)
    assert all(p.kpi.latency_bound_us >= mins[p.domain] for p in parts)
    back = recompose(parts)
    assert back.latency_bound_us == bound and abs(back.reliability_min - rel) <= 1e-12


def test_recompose_needs_parts():
    with pytest.raises(ValueError):
        recompose([])


def test_compose_requests_merges_equal_keys():
    reqs = compose_requests([
        intent("metaverse", users=3), intent("metaverse", users=4, area=2.0), intent("metaverse", "z1"),
        intent("digital_twin"),
    ])
    assert [(r.kind.value, r.zone, r.user_count, r.members) for r in reqs] == [
        ("metaverse", "z0", 7, (0, 1)), ("metaverse", "z1", 10, (2,)), ("digital_twin", "z0", 10, (3,)),
    ]
    assert reqs[0].area_m2 == 2.0
    assert reqs[0].as_intent().user_count == 7


# -- policies ----------------------------------------------------------------------


def test_policy_priority_and_default_allow():
    ps = [
        Policy("gov", "government", 100, "deny", domains=frozenset({"b"})),
        Policy("biz", "business", 10, "allow", domains=frozenset({"b"})),
        Policy("cust", "customer", 5, "deny", kinds=frozenset({"metaverse"}), domains=frozenset({"c"})),
    ]
    assert apply_policies(["a", "b", "c"], intent("metaverse"), ps) == ["a"]
    assert apply_policies(["a", "b", "c"], intent("digital_twin"), ps) == ["a", "c"]
    assert apply_policies(["a"], None, []) == ["a"]


def test_duplicate_priorities_rejected():
    with pytest.raises(ValueError):
        apply_policies(["a"], None, [Policy("x", "business", 1), Policy("y", "customer", 1)])


@given(st.permutations(range(4)), st.integers(0, 1000))
def test_policy_outcome_independent_of_list_order(perm, seed):
    rng = random.Random(seed)
    ps = [Policy(f"p{i}", "regulator", rng.randint(0, 10**6) * 4 + i, rng.choice(["allow", "deny"]),
                 domains=frozenset(rng.sample("abcd", rng.randint(1, 4)))) for i in range(4)]
    base = apply_policies(list("abcd"), intent("metaverse"), ps)
    assert apply_policies(list("abcd"), intent("metaverse"), [ps[i] for i in perm]) == base


# -- domain selection -----------------------------------------------------------------


def test_cheapest_single_domain():
    kpi = translate_intent(intent("metaverse"))
    choice = select_domains(kpi, [cap("a", rel=0.9999999, cost=2.0), cap("b", rel=0.9999999, cost=1.5)], zone="z0")
    assert choice.path == ("b",) and choice.cost == 1.5 * 5


def test_remote_zone_needs_transit_path():
    kpi = translate_intent(intent("digital_twin"))
    caps = [cap("a", rel=0.9999999, zones=("z0",)), cap("b", rel=0.9999999, zones=("z1",))]
    choice = select_domains(kpi, caps, intent=intent("digital_twin", remote_zone="z1"))
    assert choice.path == ("a", "b") and choice.latency_us == 2_000


def test_no_feasible_domain():
    kpi = translate_intent(intent("metaverse"))
    with pytest.raises(NoFeasibleDomain):
        select_domains(kpi, [cap("a", free=GBPS)], zone="z0")
    with pytest.raises(NoFeasibleDomain):
        select_domains(kpi, [cap("a", zones=("z9",))], zone="z0")
    with pytest.raises(NoFeasibleDomain):
        select_domains(kpi, [], zone="z0")


def domains_oracle(kpi, caps, policies, it):
    allowed = set(apply_policies(sorted(c.domain for c in caps), it, policies))
    pool = [c for c in caps if c.domain in allowed]
    best = None
    for k in (1, 2):
        for path in itertools.permutations(pool, k):
            if k == 2 and it.remote_zone is None:
                continue
            if it.zone not in path[0].prefixes:
                continue
            if (it.remote_zone or it.zone) not in path[-1].prefixes:
                continue
            lat = sum(c.min_latency_us for c in path)
            if (lat >= kpi.latency_bound_us) if kpi.latency_strict else (lat > kpi.latency_bound_us):
                continue
            if math.prod(c.reliability_floor for c in path) < kpi.reliability_min:
                continue
            if any(c.free_bps < kpi.throughput_dl_bps for c in path):
                continue
            cost = sum(c.unit_cost for c in path) * kpi.throughput_dl_bps / GBPS
            key = (round(cost, 9), tuple(c.domain for c in path))
            if best is None or key < best:
                best = key
    return best


def random_domains(rng, scale=1.0):
    caps = []
    for d in "abc":
        caps.append(cap(d, rng.choice([100, 1_000, 10_000, 25_000]), rng.choice([GBPS, 10 * GBPS, 100 * GBPS]),
                        rng.choice([0.9999, 0.99999, 0.9999999]), rng.choice([0.5, 1.0, 1.5, 3.0]) * scale,
                        rng.choice([("z0",), ("z1",), ("z0", "z1")])))
    return caps


def test_select_domains_matches_brute_force():
    rng = random.Random(23)
    found = 0
    for _ in range(500):
        caps = random_domains(rng)
        kind = rng.choice(["metaverse", "digital_twin", "factory_robotics"])
        it = intent(kind, rng.choice(["z0", "z1"]), remote_zone=rng.choice([None, "z0", "z1"]))
        ps = [Policy("p", "regulator", 1, "deny", domains=frozenset({rng.choice("abc")}))] if rng.random() < 0.3 else []
        kpi = translate_intent(it)
        expected = domains_oracle(kpi, caps, ps, it)
        if expected is None:
            with pytest.raises(NoFeasibleDomain):
                select_domains(kpi, caps, ps, intent=it)
            continue
        found += 1
        choice = select_domains(kpi, caps, ps, intent=it)
        assert choice.path == expected[1]
        assert choice.cost == pytest.approx(expected[0])
    assert found > 100


@given(st.integers(0, 10**6), st.sampled_from([0.5, 2.0, 10.0]))
def test_domain_choice_invariant_under_cost_scaling(seed, k):
    caps = random_domains(random.Random(seed))
    scaled = [CapabilityRecord(c.domain, c.free_bps, c.min_latency_us, c.reliability_floor,
                               c.unit_cost * k, c.prefixes) for c in caps]
    it = intent("digital_twin", remote_zone="z1")
    kpi = translate_intent(it)
    try:
        a = select_domains(kpi, caps, intent=it)
    except NoFeasibleDomain:
        with pytest.raises(NoFeasibleDomain):
            select_domains(kpi, scaled, intent=it)
        return
    assert select_domains(kpi, scaled, intent=it).path == a.path


def test_path_cost():
    assert path_cost([cap("a", cost=2.0), cap("b", cost=1.0)], 2 * GBPS) == 6.0


# -- security -----------------------------------------------------------------------


def test_controls_monotone_in_risk():
    ranks = [select_controls(r).rank() for r in (Risk.LOW, Risk.MEDIUM, Risk.HIGH)]
    assert ranks == sorted(ranks) and len(set(ranks)) == 3
    assert select_controls("high").did_layers >= 2  # defence in depth means layers


def test_risk_grows_with_path_length():
    assert risk_for_path(("a",)) is Risk.LOW
    assert risk_for_path(("a", "b")) is Risk.MEDIUM
    assert risk_for_path(("a", "b", "c", "d")) is Risk.HIGH


def test_sla_activation():
    s = E2eSla("s", E2E)
    assert s.state == "proposed"
    with pytest.raises(ValueError):
        s.activate(())
    s.activate(["a"])
    assert s.state == "active" and s.domain_path == ("a",)
    assert DomainSla("s", "a", E2E).id == "s.a"
