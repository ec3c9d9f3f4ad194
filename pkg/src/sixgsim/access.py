"""Access technologies, flows over them, link sampling and per-AT power."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

from .kernel import RngStream
from .kpi import KpiRequirementSet

QUEUEING_CAP = 5.0
MAX_ATTACHMENTS = 2


class AtKind(str, enum.Enum):
    CELLULAR = "cellular"
    WIFI = "wifi"
    LIFI = "lifi"
    SATELLITE = "satellite"
    FIBRE = "fibre"


class AtState(str, enum.Enum):
    ACTIVE = "active"
    SLEEPING = "sleeping"


class AccessError(RuntimeError):
    pass


class AtSleeping(AccessError):
    pass


class AtBusy(AccessError):
    pass


class InsufficientCapacity(AccessError):
    pass


class NotAttached(AccessError):
    pass


@dataclass(frozen=True)
class PowerModel:
    p_idle_w: float
    p_max_w: float
    p_sleep_w: float

    def __post_init__(self):
        if not 0 <= self.p_sleep_w <= self.p_idle_w <= self.p_max_w:
            raise ValueError("power model needs 0 <= p_sleep <= p_idle <= p_max")


@dataclass
class AccessTech:
    id: str
    kind: AtKind
    capacity_bps: int
    base_latency_us: int
    jitter_span_us: int
    per_error_rate: float
    coverage: frozenset
    power: PowerModel
    positioning_cm: Optional[float] = None
    state: AtState = AtState.ACTIVE
    shares: dict = field(default_factory=dict)
    committed_bps: int = field(default=0, init=False)

    def __post_init__(self):
        self.kind = AtKind(self.kind)
        self.state = AtState(self.state)
        self.coverage = frozenset(self.coverage)
        if self.capacity_bps <= 0:
            raise ValueError(f"{self.id}: capacity_bps must be positive")
        if not 0.0 <= self.per_error_rate <= 1.0:
            raise ValueError(f"{self.id}: per_error_rate must be in [0, 1]")
        if self.jitter_span_us < 0 or self.base_latency_us < 0:
            raise ValueError(f"{self.id}: latency parameters must be non-negative")

    @property
    def headroom_bps(self) -> int:
        return self.capacity_bps - self.committed_bps

    @property
    def load_fraction(self) -> float:
        return self.committed_bps / self.capacity_bps

    @property
    def active(self) -> bool:
        return self.state is AtState.ACTIVE


# Scenario-overridable defaults per kind.
PRESETS: dict[AtKind, dict] = {
    AtKind.CELLULAR: dict(
        capacity_bps=20_000_000_000, base_latency_us=1_000, jitter_span_us=100,
        per_error_rate=1e-7, positioning_cm=1.0,
        power=PowerModel(p_idle_w=260.0, p_max_w=780.0, p_sleep_w=25.0),
    ),
    AtKind.WIFI: dict(
        capacity_bps=10_000_000_000, base_latency_us=2_000, jitter_span_us=500,
        per_error_rate=1e-6, positioning_cm=10.0,
        power=PowerModel(p_idle_w=12.0, p_max_w=30.0, p_sleep_w=2.0),
    ),
    AtKind.LIFI: dict(
        capacity_bps=100_000_000_000, base_latency_us=500, jitter_span_us=50,
        per_error_rate=1e-7, positioning_cm=0.1,
        power=PowerModel(p_idle_w=8.0, p_max_w=20.0, p_sleep_w=0.5),
    ),
    AtKind.SATELLITE: dict(
        capacity_bps=1_000_000_000, base_latency_us=20_000, jitter_span_us=20_000,
        per_error_rate=1e-5, positioning_cm=None,
        power=PowerModel(p_idle_w=60.0, p_max_w=150.0, p_sleep_w=10.0),
    ),
    AtKind.FIBRE: dict(
        capacity_bps=400_000_000_000, base_latency_us=100, jitter_span_us=10,
        per_error_rate=1e-9, positioning_cm=None,
        power=PowerModel(p_idle_w=15.0, p_max_w=25.0, p_sleep_w=1.0),
    ),
}


def make_at(id: str, kind: str | AtKind, coverage=(), **overrides) -> AccessTech:
    """Build an access technology from its kind preset plus overrides."""
    kind = AtKind(kind)
    params = dict(PRESETS[kind])
    power = overrides.pop("power", None)
    if isinstance(power, dict):
        power = replace(params["power"], **power)
    if power is not None:
        params["power"] = power
    params.update(overrides)
    return AccessTech(id=id, kind=kind, coverage=frozenset(coverage), **params)


@dataclass
class Flow:
    """A user flow. ``attachments`` maps AT id to allocated bps, in attach order."""

    id: str
    ue: str
    demand_bps: int
    kpi: KpiRequirementSet
    zone: str = "z0"
    attachments: dict = field(default_factory=dict)
    attached_at_us: int = 0

    @property
    def allocated_bps(self) -> int:
        return sum(self.attachments.values())

    @property
    def primary(self) -> Optional[str]:
        return next(iter(self.attachments), None)


class LinkSample(NamedTuple):
    """One link measurement; a tuple because millions are created per run."""

    t: int
    flow: str
    latency_us: int
    delivered_bits: int
    lost: bool


def queueing_factor(load_fraction: float) -> float:
    if load_fraction >= 1.0:
        return QUEUEING_CAP
    return min(1.0 / (1.0 - load_fraction), QUEUEING_CAP)


def loaded_latency(at: AccessTech, load_fraction: float) -> int:
    """Deterministic part of the latency: base inflated by the queueing factor."""
    if not at.active:
        raise AtSleeping(at.id)
    if not 0.0 <= load_fraction < 1.0:
        raise ValueError("load_fraction must be in [0, 1)")
    return int(at.base_latency_us * queueing_factor(load_fraction))


def sample_latency(at: AccessTech, load_fraction: float, rng: RngStream) -> int:
    """One-way latency draw in microseconds.

    Base latency is inflated by a ``1/(1-u)`` queueing factor capped at 5x, then
    a uniform integer jitter on ``[0, jitter_span_us]`` is added.
    """
    base = loaded_latency(at, load_fraction)
    jitter = rng.integers(0, at.jitter_span_us) if at.jitter_span_us else 0
    return base + jitter


def sample_loss(at: AccessTech, rng: RngStream) -> bool:
    return rng.bernoulli(at.per_error_rate)


def _check_capacity(at: AccessTech) -> None:
    assert at.committed_bps == sum(at.shares.values()), f"share accounting broken on {at.id}"
    assert 0 <= at.committed_bps <= at.capacity_bps, f"capacity violated on {at.id}"


def admit_flow(at: AccessTech, f: Flow, share_bps: int) -> int:
    """Commit ``share_bps`` of ``at`` to ``f``. Returns the AT's new committed sum."""
    if share_bps <= 0:
        raise ValueError("share_bps must be positive")
    if not at.active:
        raise AtSleeping(at.id)
    if f.id in at.shares:
        raise AccessError(f"flow {f.id} already attached to {at.id}")
    if at.committed_bps + share_bps > at.capacity_bps:
        raise InsufficientCapacity(
            f"{at.id}: {share_bps} bps requested, {at.headroom_bps} bps free"
        )
    if f.id not in at.shares and len(f.attachments) >= MAX_ATTACHMENTS:
        raise AccessError(f"flow {f.id} already has {MAX_ATTACHMENTS} attachments")
    at.shares[f.id] = share_bps
    at.committed_bps += share_bps
    f.attachments[at.id] = share_bps
    _check_capacity(at)
    return at.committed_bps


def release_flow(at: AccessTech, f: Flow) -> int:
    if f.id not in at.shares:
        raise NotAttached(f"flow {f.id} is not attached to {at.id}")
    at.committed_bps -= at.shares.pop(f.id)
    f.attachments.pop(at.id, None)
    _check_capacity(at)
    return at.committed_bps


def resize_share(at: AccessTech, f: Flow, new_share_bps: int) -> None:
    """Change an existing share in place."""
    if f.id not in at.shares:
        raise NotAttached(f"flow {f.id} is not attached to {at.id}")
    if new_share_bps <= 0:
        raise ValueError("share must stay positive")
    if at.committed_bps - at.shares[f.id] + new_share_bps > at.capacity_bps:
        raise InsufficientCapacity(at.id)
    at.committed_bps += new_share_bps - at.shares[f.id]
    at.shares[f.id] = new_share_bps
    f.attachments[at.id] = new_share_bps
    _check_capacity(at)


def at_power(at: AccessTech, load_fraction: float) -> float:
    if not at.active:
        return at.power.p_sleep_w
    u = min(max(load_fraction, 0.0), 1.0)
    return at.power.p_idle_w + (at.power.p_max_w - at.power.p_idle_w) * u


def set_sleep(at: AccessTech, sleeping: bool) -> None:
    if sleeping and at.committed_bps > 0:
        raise AtBusy(f"{at.id} carries {at.committed_bps} bps")
    at.state = AtState.SLEEPING if sleeping else AtState.ACTIVE
