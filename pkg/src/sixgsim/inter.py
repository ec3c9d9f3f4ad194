"""Cross-domain orchestration.

Intent translation to KPI presets, SLA decomposition into per-domain budgets
and recomposition, request aggregation, policy filtering, domain path
selection and security-control planning.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .intra import CapabilityRecord
from .kpi import KpiRequirementSet

MS = 1_000
GBPS = 1_000_000_000
MBPS = 1_000_000


class UseCase(str, enum.Enum):
    METAVERSE = "metaverse"
    DIGITAL_TWIN = "digital_twin"
    VIRTUAL_PRODUCTION = "virtual_production"
    FACTORY_DT = "factory_dt"
    FACTORY_ROBOTICS = "factory_robotics"


class InteractionClass(str, enum.Enum):
    NEAR_LIVE = "near_live"
    TWO_WAY = "two_way"
    MULTI_WAY = "multi_way"
    REMOTE_MUSIC = "remote_music"


class OrchestrationError(RuntimeError):
    pass


class UnknownUseCase(OrchestrationError):
    pass


class InfeasibleBudget(OrchestrationError):
    pass


class NoFeasibleDomain(OrchestrationError):
    pass


@dataclass(frozen=True)
class TaskIntent:
    kind: UseCase
    user_count: int
    area_m2: float
    zone: str
    interaction_class: Optional[InteractionClass] = None
    remote_zone: Optional[str] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", UseCase(self.kind))
        except ValueError:
            raise UnknownUseCase(str(self.kind)) from None
        if self.interaction_class is not None:
            object.__setattr__(self, "interaction_class", InteractionClass(self.interaction_class))
        if self.user_count < 1:
            raise ValueError("user_count must be at least 1")
        if self.area_m2 <= 0:
            raise ValueError("area_m2 must be positive")


# Defaults for tables that give no reliability figure: 1 - 5G packet error rate.
DEFAULT_RELIABILITY = 1.0 - 1e-5

# (latency_us, jitter_us or None) per interaction class, ordered by interactivity.
VP_CLASS_BOUNDS = {
    InteractionClass.REMOTE_MUSIC: (15 * MS, 1 * MS),
    InteractionClass.TWO_WAY: (50 * MS, 25 * MS),
    InteractionClass.MULTI_WAY: (150 * MS, 50 * MS),
    InteractionClass.NEAR_LIVE: (1700 * MS, None),
}

_PRESETS = {
    UseCase.METAVERSE: KpiRequirementSet(
        latency_bound_us=20 * MS, throughput_dl_bps=5 * GBPS, throughput_ul_bps=5 * GBPS,
        reliability_min=0.999999, positioning_cm=1.0,
    ),
    UseCase.DIGITAL_TWIN: KpiRequirementSet(
        latency_bound_us=20 * MS, throughput_dl_bps=GBPS // 10, throughput_ul_bps=GBPS // 20,
        reliability_min=DEFAULT_RELIABILITY, positioning_cm=10.0,
    ),
    UseCase.FACTORY_DT: KpiRequirementSet(
        latency_bound_us=20 * MS, throughput_dl_bps=GBPS, throughput_ul_bps=GBPS,
        reliability_min=DEFAULT_RELIABILITY, positioning_cm=10.0,
    ),
    UseCase.FACTORY_ROBOTICS: KpiRequirementSet(
        latency_bound_us=20 * MS, throughput_dl_bps=MBPS, throughput_ul_bps=MBPS,
        reliability_min=DEFAULT_RELIABILITY, positioning_cm=1.0, latency_strict=True,
    ),
}


def vp_kpi(cls: InteractionClass | str, throughput_bps: int = 20 * MBPS) -> KpiRequirementSet:
    latency, jitter = VP_CLASS_BOUNDS[InteractionClass(cls)]
    return KpiRequirementSet(
        latency_bound_us=latency, jitter_bound_us=jitter,
        throughput_dl_bps=throughput_bps, throughput_ul_bps=throughput_bps,
        reliability_min=DEFAULT_RELIABILITY, sync_bound_us=1,
    )


# Edge/cloud leg of a virtual production.
VP_EDGE_KPI = KpiRequirementSet(
    latency_bound_us=50 * MS, jitter_bound_us=10 * MS, latency_strict=True,
    throughput_dl_bps=10 * GBPS, throughput_ul_bps=10 * GBPS,
    reliability_min=DEFAULT_RELIABILITY, sync_bound_us=1,
)


def translate_intent(i: TaskIntent) -> KpiRequirementSet:
    """KPI preset for an intent's use case."""
    if i.kind is UseCase.VIRTUAL_PRODUCTION:
        return vp_kpi(i.interaction_class or InteractionClass.REMOTE_MUSIC)
    try:
        return _PRESETS[i.kind]
    except KeyError:
        raise UnknownUseCase(str(i.kind)) from None


# -- SLAs ------------------------------------------------------------------------


@dataclass
class E2eSla:
    id: str
    kpi: KpiRequirementSet
    domain_path: tuple = ()
    state: str = "proposed"

    def activate(self, path: Sequence[str]) -> None:
        if not path:
            raise ValueError("an active SLA needs a domain path")
        self.domain_path = tuple(path)
        self.state = "active"


@dataclass
class DomainSla:
    parent: str
    domain: str
    kpi: KpiRequirementSet
    state: str = "active"

    @property
    def id(self) -> str:
        return f"{self.parent}.{self.domain}"


def _split(total: int, weights: Sequence[int]) -> list[int]:
    """Integer proportional split; the remainder goes to the last share."""
    wsum = sum(weights)
    if wsum == 0:
        weights = [1] * len(weights)
        wsum = len(weights)
    shares = [total * w // wsum for w in weights]
    shares[-1] += total - sum(shares)
    return shares


def decompose_sla(e: E2eSla, caps: Sequence[CapabilityRecord]) -> list[DomainSla]:
    """Per-domain KPI budgets along ``e.domain_path``.

    Latency (and jitter) split in proportion to each domain's advertised
    minimum latency, reliability as the k-th root, throughput copied.
    """
    path = list(e.domain_path) or [c.domain for c in caps]
    by_domain = {c.domain: c for c in caps}
    missing = [d for d in path if d not in by_domain]
    if missing:
        raise InfeasibleBudget(f"no capability record for {missing}")
    mins = [by_domain[d].min_latency_us for d in path]
    kpi = e.kpi
    if sum(mins) > kpi.latency_bound_us:
        raise InfeasibleBudget(
            f"{e.id}: path minimum {sum(mins)} us exceeds bound {kpi.latency_bound_us} us"
        )
    k = len(path)
    if k == 1:
        return [DomainSla(e.id, path[0], kpi)]
    lat = _split(kpi.latency_bound_us, mins)
    jit = _split(kpi.jitter_bound_us, mins) if kpi.jitter_bound_us is not None else [None] * k
    rel = kpi.reliability_min ** (1.0 / k)
    out = []
    for d, l, j in zip(path, lat, jit):
        if l <= 0 or (j is not None and j <= 0):
            raise InfeasibleBudget(f"{e.id}: zero budget for {d}")
        out.append(DomainSla(e.id, d, replace(kpi, latency_bound_us=l, jitter_bound_us=j, reliability_min=rel)))
    return out


def recompose(parts: Sequence[DomainSla]) -> KpiRequirementSet:
    """Inverse of :func:`decompose_sla`: sum latency/jitter, multiply reliability."""
    if not parts:
        raise ValueError("nothing to recompose")
    first = parts[0].kpi
    jit = None if first.jitter_bound_us is None else sum(p.kpi.jitter_bound_us for p in parts)
    return replace(
        first,
        latency_bound_us=sum(p.kpi.latency_bound_us for p in parts),
        jitter_bound_us=jit,
        reliability_min=math.prod(p.kpi.reliability_min for p in parts),
    )


# -- request aggregation ------------------------------------------------------------


@dataclass(frozen=True)
class AggregatedRequest:
    kind: UseCase
    zone: str
    interaction_class: Optional[InteractionClass]
    user_count: int
    area_m2: float
    members: tuple = ()

    def as_intent(self) -> TaskIntent:
        return TaskIntent(self.kind, self.user_count, self.area_m2, self.zone, self.interaction_class)


def compose_requests(intents: Sequence[TaskIntent]) -> list[AggregatedRequest]:
    """Merge intents with equal (kind, zone, interaction class), summing users."""
    groups: dict[tuple, list[int]] = {}
    for idx, i in enumerate(intents):
        groups.setdefault((i.kind, i.zone, i.interaction_class), []).append(idx)
    out = []
    for (kind, zone, cls), members in groups.items():
        out.append(AggregatedRequest(
            kind, zone, cls,
            user_count=sum(intents[m].user_count for m in members),
            area_m2=max(intents[m].area_m2 for m in members),
            members=tuple(members),
        ))
    return out


# -- policies ----------------------------------------------------------------------


class Issuer(str, enum.Enum):
    GOVERNMENT = "government"
    REGULATOR = "regulator"
    BUSINESS = "business"
    CUSTOMER = "customer"


@dataclass(frozen=True)
class Policy:
    """Allow or deny rule over (intent, domain) pairs.

    A ``None`` selector matches anything; otherwise the intent kind, zone or
    domain must be in the given set.
    """

    id: str
    issuer: Issuer
    priority: int
    effect: str = "deny"
    domains: Optional[frozenset] = None
    kinds: Optional[frozenset] = None
    zones: Optional[frozenset] = None

    def __post_init__(self):
        object.__setattr__(self, "issuer", Issuer(self.issuer))
        if self.effect not in ("allow", "deny"):
            raise ValueError("effect must be 'allow' or 'deny'")
        for name in ("domains", "kinds", "zones"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, frozenset(str(getattr(x, "value", x)) for x in v))

    def matches(self, intent: Optional[TaskIntent], domain: str) -> bool:
        if self.domains is not None and domain not in self.domains:
            return False
        if intent is not None:
            if self.kinds is not None and intent.kind.value not in self.kinds:
                return False
            if self.zones is not None and intent.zone not in self.zones:
                return False
        return True


def apply_policies(candidates: Sequence[str], i: Optional[TaskIntent], ps: Sequence[Policy]) -> list[str]:
    """Filter domain ids; the highest-priority matching rule decides, default allow."""
    prios = [p.priority for p in ps]
    if len(set(prios)) != len(prios):
        raise ValueError("policy priorities must be unique")
    ordered = sorted(ps, key=lambda p: -p.priority)
    out = []
    for d in candidates:
        verdict = "allow"
        for p in ordered:
            if p.matches(i, d):
                verdict = p.effect
                break
        if verdict == "allow":
            out.append(d)
    return out


# -- domain selection -----------------------------------------------------------------


@dataclass(frozen=True)
class DomainChoice:
    path: tuple
    cost: float
    latency_us: int


def path_cost(path: Sequence[CapabilityRecord], throughput_bps: int) -> float:
    gbps = throughput_bps / GBPS
    return sum(c.unit_cost * gbps for c in path)


def _path_feasible(path: Sequence[CapabilityRecord], kpi: KpiRequirementSet) -> bool:
    lat = sum(c.min_latency_us for c in path)
    lat_ok = lat < kpi.latency_bound_us if kpi.latency_strict else lat <= kpi.latency_bound_us
    rel = math.prod(c.reliability_floor for c in path)
    return lat_ok and rel >= kpi.reliability_min and all(c.free_bps >= kpi.throughput_dl_bps for c in path)


def select_domains(kpi: KpiRequirementSet, caps: Sequence[CapabilityRecord], policies: Sequence[Policy] = (),
                   zone: Optional[str] = None, intent: Optional[TaskIntent] = None,
                   remote_zone: Optional[str] = None) -> DomainChoice:
    """Cheapest feasible domain path of length one or two.

    The first domain must cover ``zone``; with ``remote_zone`` the last
    domain must cover it. Cost is the sum of unit cost times throughput in
    Gbps; ties go to the lexicographically smallest path.
    """
    if not caps:
        raise NoFeasibleDomain("no capability records")
    zone = zone if zone is not None else (intent.zone if intent is not None else None)
    remote_zone = remote_zone if remote_zone is not None else (intent.remote_zone if intent is not None else None)
    by_id = {c.domain: c for c in caps}
    admissible = apply_policies(sorted(by_id), intent, policies)
    paths = [(d,) for d in admissible] + list(itertools.permutations(admissible, 2))
    best = None
    for path in paths:
        recs = [by_id[d] for d in path]
        if zone is not None and zone not in recs[0].prefixes:
            continue
        dest = remote_zone if remote_zone is not None else zone
        if dest is not None and dest not in recs[-1].prefixes:
            continue
        if len(path) == 2 and remote_zone is None:
            continue  # transit only when traffic leaves the access domain
        if not _path_feasible(recs, kpi):
            continue
        cost = path_cost(recs, kpi.throughput_dl_bps)
        key = (cost, path)
        if best is None or key < best[0]:
            best = (key, sum(c.min_latency_us for c in recs))
    if best is None:
        raise NoFeasibleDomain(f"no admissible domain path for zone {zone}")
    (cost, path), lat = best
    return DomainChoice(path, cost, lat)


# -- trust and security ------------------------------------------------------------------


class Risk(str, enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


SOC_LEVELS = ("baseline", "hardened", "rigorous")


@dataclass(frozen=True)
class SecurityControlPlan:
    did_layers: int
    soc_level: str

    def __post_init__(self):
        if self.did_layers < 1 or self.soc_level not in SOC_LEVELS:
            raise ValueError("invalid security control plan")

    def rank(self) -> tuple:
        return (self.did_layers, SOC_LEVELS.index(self.soc_level))


_CONTROLS = {
    Risk.LOW: SecurityControlPlan(1, "baseline"),
    Risk.MEDIUM: SecurityControlPlan(2, "hardened"),
    Risk.HIGH: SecurityControlPlan(3, "rigorous"),
}


def select_controls(risk: Risk | str) -> SecurityControlPlan:
    return _CONTROLS[Risk(risk)]


def risk_for_path(path: Sequence[str]) -> Risk:
    """Single-domain services are low risk; every extra domain raises it a step."""
    return (Risk.LOW, Risk.MEDIUM, Risk.HIGH)[min(len(path) - 1, 2)]
