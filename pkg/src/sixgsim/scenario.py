"""Scenario documents: strict JSON schema, loading and serialization."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import pydantic
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import access, inter, intra, workloads
from .kpi import KpiRequirementSet
from .matric import MobilityConfig, ScoreWeights


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


class ValidationError(ScenarioError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PowerCfg(_Strict):
    p_idle_w: float = Field(ge=0)
    p_max_w: float = Field(ge=0)
    p_sleep_w: float = Field(ge=0)

    @model_validator(mode="after")
    def _order(self):
        if not self.p_sleep_w <= self.p_idle_w <= self.p_max_w:
            raise ValueError("power model needs p_sleep_w <= p_idle_w <= p_max_w")
        return self

    def build(self) -> access.PowerModel:
        return access.PowerModel(self.p_idle_w, self.p_max_w, self.p_sleep_w)


class AtCfg(_Strict):
    id: str
    kind: Literal["cellular", "wifi", "lifi", "satellite", "fibre"]
    coverage: list[str] = ["z0"]
    capacity_bps: Optional[int] = Field(default=None, gt=0)
    base_latency_us: Optional[int] = Field(default=None, ge=0)
    jitter_span_us: Optional[int] = Field(default=None, ge=0)
    per_error_rate: Optional[float] = Field(default=None, ge=0, le=1)
    positioning_cm: Optional[float] = Field(default=None, gt=0)
    power: Optional[PowerCfg] = None

    def build(self) -> access.AccessTech:
        overrides = {
            k: v for k, v in self.model_dump(exclude={"id", "kind", "coverage", "power"}).items()
            if v is not None
        }
        if self.power is not None:
            overrides["power"] = self.power.build()
        return access.make_at(self.id, self.kind, self.coverage, **overrides)


class NodeCfg(_Strict):
    id: str
    tier: Literal["edge", "core"] = "edge"
    cpu_units: int = Field(gt=0)
    mem_mb: int = Field(gt=0)
    power: PowerCfg = PowerCfg(p_idle_w=100.0, p_max_w=300.0, p_sleep_w=10.0)

    def build(self) -> intra.ComputeNode:
        return intra.ComputeNode(self.id, self.tier, self.cpu_units, self.mem_mb, self.power.build())


class DomainCfg(_Strict):
    id: str
    unit_cost: float = Field(default=1.0, ge=0)
    access_techs: list[AtCfg] = Field(min_length=1)
    compute_nodes: list[NodeCfg] = []


class PolicyCfg(_Strict):
    id: str
    issuer: Literal["government", "regulator", "business", "customer"]
    priority: int
    effect: Literal["allow", "deny"] = "deny"
    domains: Optional[list[str]] = None
    kinds: Optional[list[str]] = None
    zones: Optional[list[str]] = None

    def build(self) -> inter.Policy:
        return inter.Policy(
            self.id, self.issuer, self.priority, self.effect,
            None if self.domains is None else frozenset(self.domains),
            None if self.kinds is None else frozenset(self.kinds),
            None if self.zones is None else frozenset(self.zones),
        )


class KpiCfg(_Strict):
    latency_bound_us: int = Field(gt=0)
    throughput_dl_bps: int = Field(gt=0)
    throughput_ul_bps: int = Field(gt=0)
    reliability_min: float = Field(gt=0, le=1)
    percentile: float = Field(default=0.99, gt=0, lt=1)
    jitter_bound_us: Optional[int] = Field(default=None, gt=0)
    positioning_cm: Optional[float] = Field(default=None, gt=0)
    sync_bound_us: Optional[int] = Field(default=None, gt=0)
    latency_strict: bool = False

    def build(self) -> KpiRequirementSet:
        return KpiRequirementSet(**self.model_dump())


class ArrivalCfg(_Strict):
    kind: Literal["all_at_start", "poisson"] = "all_at_start"
    rate: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _rate(self):
        if self.kind == "poisson" and self.rate <= 0:
            raise ValueError("poisson arrivals need rate > 0")
        return self


class WorkloadCfg(_Strict):
    kind: Literal["metaverse", "digital_twin", "virtual_production", "factory_dt", "factory_robotics"]
    user_count: int = Field(ge=1)
    area_m2: float = Field(gt=0)
    duration_s: float = Field(gt=0)
    arrival: ArrivalCfg = ArrivalCfg()
    zone: str = "z0"
    interaction_class: Optional[Literal["near_live", "two_way", "multi_way", "remote_music"]] = None
    remote_zone: Optional[str] = None
    kpi_override: Optional[KpiCfg] = None
    name: Optional[str] = None

    def build(self) -> workloads.UseCaseSpec:
        return workloads.UseCaseSpec(
            kind=self.kind, user_count=self.user_count, area_m2=self.area_m2,
            duration_s=self.duration_s,
            arrival=workloads.Arrival(self.arrival.kind, self.arrival.rate),
            zone=self.zone, interaction_class=self.interaction_class, remote_zone=self.remote_zone,
            kpi_override=None if self.kpi_override is None else self.kpi_override.build(),
            name=self.name,
        )


class TogglesCfg(_Strict):
    sleep_policy: bool = False
    explain: bool = False


class ParamsCfg(_Strict):
    sample_interval_us: int = Field(default=10_000, gt=0)
    window_us: int = Field(default=1_000_000, gt=0)
    w_latency: float = Field(default=0.5, ge=0)
    w_capacity: float = Field(default=0.3, ge=0)
    w_energy: float = Field(default=0.2, ge=0)
    hysteresis: float = Field(default=0.05, ge=0)
    min_dwell_us: int = Field(default=100_000, ge=0)
    telemetry_capacity: int = Field(default=1024, gt=0)
    placement_lambda: float = Field(default=intra.DEFAULT_LAMBDA, ge=0)
    hop_penalty_us: int = Field(default=intra.DEFAULT_HOP_PENALTY_US, ge=0)
    ewma_alpha: float = Field(default=0.5, gt=0, le=1)
    drift_k: float = Field(default=3.0, gt=0)

    @model_validator(mode="after")
    def _weights(self):
        if abs(self.w_latency + self.w_capacity + self.w_energy - 1.0) > 1e-9:
            raise ValueError("score weights must sum to 1")
        if self.window_us % self.sample_interval_us:
            raise ValueError("window_us must be a multiple of sample_interval_us")
        return self

    def weights(self) -> ScoreWeights:
        return ScoreWeights(self.w_latency, self.w_capacity, self.w_energy)

    def mobility(self) -> MobilityConfig:
        return MobilityConfig(self.hysteresis, self.min_dwell_us)


class Scenario(_Strict):
    seed: int = Field(ge=0, lt=2**64)
    duration_s: float = Field(gt=0)
    domains: list[DomainCfg] = Field(min_length=1)
    policies: list[PolicyCfg] = []
    workloads: list[WorkloadCfg] = []
    toggles: TogglesCfg = TogglesCfg()
    params: ParamsCfg = ParamsCfg()

    @model_validator(mode="after")
    def _unique_ids(self):
        def dupes(ids):
            seen, out = set(), []
            for i in ids:
                if i in seen and i not in out:
                    out.append(i)
                seen.add(i)
            return out

        if d := dupes(d.id for d in self.domains):
            raise ValueError(f"duplicate domain id {d[0]!r}")
        if d := dupes(a.id for dom in self.domains for a in dom.access_techs):
            raise ValueError(f"duplicate access tech id {d[0]!r}")
        if d := dupes(n.id for dom in self.domains for n in dom.compute_nodes):
            raise ValueError(f"duplicate compute node id {d[0]!r}")
        if d := dupes(p.priority for p in self.policies):
            raise ValueError(f"duplicate policy priority {d[0]!r}")
        if d := dupes(w.name for w in self.workloads if w.name):
            raise ValueError(f"duplicate workload name {d[0]!r}")
        return self

    def with_seed(self, seed: int) -> "Scenario":
        return self.model_copy(update={"seed": seed})

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def _field_path(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, e.colno) from None
    return validate_scenario(doc)


def validate_scenario(doc) -> Scenario:
    try:
        return Scenario.model_validate(doc)
    except pydantic.ValidationError as e:
        err = e.errors()[0]
        if err["type"] == "extra_forbidden":
            raise ValidationError(_field_path(err["loc"]), "unknown key") from None
        reason = err["msg"].removeprefix("Value error, ")
        raise ValidationError(_field_path(err["loc"]), reason) from None


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def bundled_scenarios() -> dict[str, Path]:
    """Scenario files shipped with the package, by stem."""
    root = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(root.glob("*.json"))}
