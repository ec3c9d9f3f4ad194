"""Use-case workload generators: intents, flow templates and arrival times."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

from .inter import (
    GBPS, MBPS, VP_EDGE_KPI, InteractionClass, TaskIntent, UseCase, translate_intent, vp_kpi,
)
from .kernel import RngStream, seconds
from .kpi import KpiRequirementSet

KBPS = 1_000

# Users per square metre.
DENSITY_RANGE = {
    UseCase.METAVERSE: (10.0, 100.0),
    UseCase.DIGITAL_TWIN: (1.0, 100.0),
}

# Areal network capacity in bps per square metre (Tbps/km2 and Gbps/km2 ranges).
AREAL_CAPACITY = {
    UseCase.METAVERSE: (1e12 / 1e6, 100e12 / 1e6),
    UseCase.DIGITAL_TWIN: (10e9 / 1e6, 100e9 / 1e6),
}

METAVERSE_RATE = (5 * GBPS, 100 * GBPS)
DT_DL_RATE = (GBPS // 10, 10 * GBPS)
DT_UL_RATE = (GBPS // 20, 5 * GBPS)
VP_UHD_RATE = (20 * MBPS, 50 * MBPS)
VP_AUDIO_RATE = (48 * KBPS, 3 * MBPS)
VP_ANCILLARY_RATE = 64 * KBPS
FACTORY_DT_RATE = GBPS
FACTORY_ROBOTICS_RATE = MBPS


class KindMismatch(ValueError):
    pass


class DensityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Arrival:
    kind: str = "all_at_start"  # or "poisson"
    rate: float = 0.0  # arrivals per second

    def __post_init__(self):
        if self.kind not in ("all_at_start", "poisson"):
            raise ValueError(f"unknown arrival process {self.kind!r}")
        if self.kind == "poisson" and self.rate <= 0:
            raise ValueError("poisson arrivals need a positive rate")


@dataclass(frozen=True)
class UseCaseSpec:
    """One workload. Every flow lives for ``duration_s`` from its arrival."""

    kind: UseCase
    user_count: int
    area_m2: float
    duration_s: float
    arrival: Arrival = Arrival()
    zone: str = "z0"
    interaction_class: Optional[InteractionClass] = None
    remote_zone: Optional[str] = None
    kpi_override: Optional[KpiRequirementSet] = None
    name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", UseCase(self.kind))
        if self.interaction_class is not None:
            object.__setattr__(self, "interaction_class", InteractionClass(self.interaction_class))
        if self.user_count < 1:
            raise ValueError("user_count must be at least 1")
        if self.area_m2 <= 0 or self.duration_s <= 0:
            raise ValueError("area_m2 and duration_s must be positive")

    @property
    def label(self) -> str:
        return self.name or f"{self.kind.value}.{self.zone}"

    def intent(self) -> TaskIntent:
        return TaskIntent(self.kind, self.user_count, self.area_m2, self.zone,
                          self.interaction_class, self.remote_zone)

    def check_density(self) -> None:
        rng = DENSITY_RANGE.get(self.kind)
        density = self.user_count / self.area_m2
        if rng is not None and not rng[0] <= density <= rng[1]:
            warnings.warn(f"{self.label}: density {density:g}/m2 outside {rng}", DensityWarning, stacklevel=3)


@dataclass(frozen=True)
class FlowTemplate:
    id: str
    ue: str
    zone: str
    stream: str
    demand_dl_bps: int
    demand_ul_bps: int
    kpi: KpiRequirementSet
    start_us: int
    stop_us: int
    remote_zone: Optional[str] = None


@dataclass
class Workload:
    spec: UseCaseSpec
    intents: list
    flows: list
    edge_leg: Optional[KpiRequirementSet] = None


def arrival_times(spec: UseCaseSpec, rng: RngStream, count: int) -> list[int]:
    if spec.arrival.kind == "all_at_start":
        return [0] * count
    t = 0.0
    out = []
    for _ in range(count):
        t += rng.exponential(1.0 / spec.arrival.rate)
        out.append(seconds(t))
    return out


def _uniform_int(rng: RngStream, lo: int, hi: int) -> int:
    return min(max(int(round(rng.uniform(lo, hi))), lo), hi)


def _check_kind(spec: UseCaseSpec, *kinds: UseCase) -> None:
    if spec.kind not in kinds:
        raise KindMismatch(f"{spec.kind.value} is not one of {[k.value for k in kinds]}")


def _flow(spec, idx, stream, dl, ul, kpi, start, suffix=""):
    ue = f"{spec.label}.u{idx}"
    return FlowTemplate(
        id=f"{ue}{suffix}", ue=ue, zone=spec.zone, stream=stream,
        demand_dl_bps=dl, demand_ul_bps=ul, kpi=kpi,
        start_us=start, stop_us=start + seconds(spec.duration_s), remote_zone=spec.remote_zone,
    )


def _areal_check(spec: UseCaseSpec, per_user_bps: float) -> None:
    band = AREAL_CAPACITY.get(spec.kind)
    if band is None:
        return
    load = per_user_bps * spec.user_count / spec.area_m2
    if load > band[1]:
        warnings.warn(
            f"{spec.label}: areal load {load:.3g} bps/m2 exceeds the network capacity range {band}",
            DensityWarning, stacklevel=3,
        )


def gen_metaverse(spec: UseCaseSpec, rng: RngStream) -> Workload:
    """One symmetric flow per user, rate uniform on 5-100 Gbps unless overridden."""
    _check_kind(spec, UseCase.METAVERSE)
    spec.check_density()
    kpi = spec.kpi_override or translate_intent(spec.intent())
    starts = arrival_times(spec, rng, spec.user_count)
    flows = []
    for u, start in enumerate(starts):
        if spec.kpi_override is not None:
            rate = spec.kpi_override.throughput_dl_bps
            ul = spec.kpi_override.throughput_ul_bps
        else:
            rate = _uniform_int(rng, *METAVERSE_RATE)
            ul = rate
        fkpi = replace(kpi, throughput_dl_bps=rate, throughput_ul_bps=ul)
        flows.append(_flow(spec, u, "xr", rate, ul, fkpi, start))
    _areal_check(spec, sum(f.demand_dl_bps for f in flows) / len(flows))
    return Workload(spec, [spec.intent()], flows)


def gen_virtual_production(spec: UseCaseSpec, rng: RngStream) -> Workload:
    """UHD, audio and ancillary streams per participant plus the edge/cloud leg bound."""
    _check_kind(spec, UseCase.VIRTUAL_PRODUCTION)
    cls = spec.interaction_class or InteractionClass.REMOTE_MUSIC
    base = spec.kpi_override or vp_kpi(cls)
    starts = arrival_times(spec, rng, spec.user_count)
    flows = []
    for u, start in enumerate(starts):
        uhd = _uniform_int(rng, *VP_UHD_RATE)
        audio = _uniform_int(rng, *VP_AUDIO_RATE)
        for stream, rate in (("uhd", uhd), ("audio", audio), ("ancillary", VP_ANCILLARY_RATE)):
            kpi = replace(base, throughput_dl_bps=rate, throughput_ul_bps=rate)
            flows.append(_flow(spec, u, stream, rate, rate, kpi, start, f".{stream}"))
    return Workload(spec, [spec.intent()], flows, edge_leg=VP_EDGE_KPI)


def gen_digital_twin(spec: UseCaseSpec, rng: RngStream) -> Workload:
    """One flow per twin, DL uniform on 0.1-10 Gbps and UL on 0.05-5 Gbps."""
    _check_kind(spec, UseCase.DIGITAL_TWIN)
    spec.check_density()
    kpi = spec.kpi_override or translate_intent(spec.intent())
    starts = arrival_times(spec, rng, spec.user_count)
    flows = []
    for u, start in enumerate(starts):
        if spec.kpi_override is not None:
            dl, ul = kpi.throughput_dl_bps, kpi.throughput_ul_bps
        else:
            dl = _uniform_int(rng, *DT_DL_RATE)
            ul = _uniform_int(rng, *DT_UL_RATE)
        flows.append(_flow(spec, u, "twin", dl, ul,
                           replace(kpi, throughput_dl_bps=dl, throughput_ul_bps=ul), start))
    _areal_check(spec, sum(f.demand_dl_bps for f in flows) / len(flows))
    return Workload(spec, [spec.intent()], flows)


def gen_factory(spec: UseCaseSpec, rng: RngStream) -> Workload:
    """Factory digital-twin flows at 1 Gbps or robot control flows at 1 Mbps."""
    _check_kind(spec, UseCase.FACTORY_DT, UseCase.FACTORY_ROBOTICS)
    kpi = spec.kpi_override or translate_intent(spec.intent())
    rate = kpi.throughput_dl_bps if spec.kpi_override else (
        FACTORY_DT_RATE if spec.kind is UseCase.FACTORY_DT else FACTORY_ROBOTICS_RATE
    )
    stream = "twin" if spec.kind is UseCase.FACTORY_DT else "control"
    starts = arrival_times(spec, rng, spec.user_count)
    flows = [_flow(spec, u, stream, rate, rate, kpi, s) for u, s in enumerate(starts)]
    return Workload(spec, [spec.intent()], flows)


GENERATORS = {
    UseCase.METAVERSE: gen_metaverse,
    UseCase.DIGITAL_TWIN: gen_digital_twin,
    UseCase.VIRTUAL_PRODUCTION: gen_virtual_production,
    UseCase.FACTORY_DT: gen_factory,
    UseCase.FACTORY_ROBOTICS: gen_factory,
}


def generate(spec: UseCaseSpec, rng: RngStream) -> Workload:
    return GENERATORS[spec.kind](spec, rng)
