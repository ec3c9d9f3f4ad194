from __future__ import annotations

import statistics
import warnings
from dataclasses import replace

import pytest

from sixgsim.inter import GBPS, MBPS, MS, translate_intent
from sixgsim.kernel import RngStream
from sixgsim.workloads import (
    VP_ANCILLARY_RATE, Arrival, DensityWarning, KindMismatch, UseCaseSpec, arrival_times, gen_digital_twin,
    gen_factory, gen_metaverse, gen_virtual_production, generate,
)


def rng(name="w", seed=1):
    return RngStream(name, seed)


@pytest.mark.filterwarnings("ignore::sixgsim.workloads.DensityWarning")
def test_metaverse_one_symmetric_flow_per_user():
    wl = gen_metaverse(UseCaseSpec("metaverse", 10, 0.5, 1.0), rng())
    assert len(wl.flows) == 10 and len({f.ue for f in wl.flows}) == 10
    for f in wl.flows:
        assert 5 * GBPS <= f.demand_dl_bps <= 100 * GBPS
        assert f.demand_ul_bps == f.demand_dl_bps == f.kpi.throughput_dl_bps
        assert f.kpi.latency_bound_us == 20 * MS and f.kpi.positioning_cm == 1.0
        assert (f.start_us, f.stop_us) == (0, 1_000_000)


def test_virtual_production_streams():
    wl = gen_virtual_production(UseCaseSpec("virtual_production", 4, 10.0, 1.0), rng())
    assert len(wl.flows) == 12
    by = {}
    for f in wl.flows:
        by.setdefault(f.stream, []).append(f)
    assert all(f.demand_dl_bps == VP_ANCILLARY_RATE == 64_000 for f in by["ancillary"])
    assert all(20 * MBPS <= f.demand_dl_bps <= 50 * MBPS for f in by["uhd"])
    assert all(48_000 <= f.demand_dl_bps <= 3 * MBPS for f in by["audio"])
    assert all((f.kpi.latency_bound_us, f.kpi.jitter_bound_us) == (15 * MS, 1 * MS) for f in wl.flows)
    assert wl.edge_leg.throughput_dl_bps == 10 * GBPS
    assert wl.edge_leg.latency_bound_us == 50 * MS and wl.edge_leg.latency_strict


def test_virtual_production_class_selects_bounds():
    wl = gen_virtual_production(UseCaseSpec("virtual_production", 1, 10.0, 1.0, interaction_class="multi_way"), rng())
    assert {(f.kpi.latency_bound_us, f.kpi.jitter_bound_us) for f in wl.flows} == {(150 * MS, 50 * MS)}


@pytest.mark.filterwarnings("ignore::sixgsim.workloads.DensityWarning")
def test_digital_twin_ranges():
    wl = gen_digital_twin(UseCaseSpec("digital_twin", 200, 10.0, 1.0), rng())
    for f in wl.flows:
        assert GBPS // 10 <= f.demand_dl_bps <= 10 * GBPS
        assert GBPS // 20 <= f.demand_ul_bps <= 5 * GBPS
        assert f.kpi.positioning_cm == 10.0


def test_factory_flows():
    r = gen_factory(UseCaseSpec("factory_robotics", 5, 10.0, 1.0), rng())
    assert all(f.demand_dl_bps == MBPS and f.kpi.latency_strict and f.kpi.latency_bound_us == 20 * MS
               for f in r.flows)
    d = gen_factory(UseCaseSpec("factory_dt", 3, 10.0, 1.0), rng())
    assert all(f.demand_dl_bps == GBPS for f in d.flows)


@pytest.mark.filterwarnings("ignore::sixgsim.workloads.DensityWarning")
def test_generate_dispatch_and_determinism():
    spec = UseCaseSpec("metaverse", 10, 0.5, 1.0, Arrival("poisson", 100.0))
    a, b = generate(spec, rng("x", 7)), generate(spec, rng("x", 7))
    assert a.flows == b.flows
    assert generate(spec, rng("x", 8)).flows != a.flows


def test_kind_mismatch():
    with pytest.raises(KindMismatch):
        gen_metaverse(UseCaseSpec("digital_twin", 10, 1.0, 1.0), rng())
    with pytest.raises(KindMismatch):
        gen_factory(UseCaseSpec("metaverse", 10, 1.0, 1.0), rng())


def test_density_warning():
    with warnings.catch_warnings(record=True) as seen:
        warnings.simplefilter("always")
        gen_metaverse(UseCaseSpec("metaverse", 10, 100.0, 1.0), rng())
    assert [w for w in seen if w.category is DensityWarning and "density" in str(w.message)]
    with warnings.catch_warnings(record=True) as seen:
        warnings.simplefilter("always")
        gen_metaverse(UseCaseSpec("metaverse", 10, 0.5, 1.0), rng())
    assert not [w for w in seen if "density" in str(w.message)]


def test_areal_load_inconsistency_is_flagged():
    # per-user rates times in-range density exceed the areal capacity band
    with pytest.warns(DensityWarning, match="areal load"):
        gen_metaverse(UseCaseSpec("metaverse", 10, 0.5, 1.0), rng())
    light = translate_intent(UseCaseSpec("metaverse", 10, 0.5, 1.0).intent())
    light = replace(light, throughput_dl_bps=MBPS, throughput_ul_bps=MBPS)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        gen_metaverse(UseCaseSpec("metaverse", 10, 0.5, 1.0, kpi_override=light), rng())


def test_poisson_mean_interarrival():
    spec = UseCaseSpec("metaverse", 1, 1.0, 1.0, Arrival("poisson", 50.0))
    times = arrival_times(spec, rng("arr", 3), 10_000)
    gaps = [b - a for a, b in zip([0] + times, times)]
    assert all(g >= 0 for g in gaps)
    assert abs(statistics.fmean(gaps) - 20_000) <= 0.05 * 20_000


def test_spec_validation():
    with pytest.raises(ValueError):
        UseCaseSpec("metaverse", 0, 1.0, 1.0)
    with pytest.raises(ValueError):
        UseCaseSpec("metaverse", 1, 0.0, 1.0)
    with pytest.raises(ValueError):
        Arrival("poisson", 0.0)
    with pytest.raises(ValueError):
        Arrival("bursty")
