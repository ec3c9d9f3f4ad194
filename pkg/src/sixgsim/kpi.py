"""Quantitative KPI bounds shared by intents, flows and SLAs."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Optional


@dataclass(frozen=True)
class KpiRequirementSet:
    """KPI bounds for one service.

    Latency and jitter are upper bounds in microseconds, evaluated at
    ``percentile`` (nearest rank). When ``latency_strict`` is set, latency and
    jitter bounds are exclusive (``<``) instead of inclusive (``<=``).
    Positioning is a strict upper bound on the access technology's accuracy.
    """

    latency_bound_us: int
    throughput_dl_bps: int
    throughput_ul_bps: int
    reliability_min: float
    percentile: float = 0.99
    jitter_bound_us: Optional[int] = None
    positioning_cm: Optional[float] = None
    sync_bound_us: Optional[int] = None
    latency_strict: bool = False

    def __post_init__(self):
        if self.latency_bound_us <= 0:
            raise ValueError("latency_bound_us must be positive")
        if self.throughput_dl_bps <= 0 or self.throughput_ul_bps <= 0:
            raise ValueError("throughput bounds must be positive")
        if not 0.0 < self.reliability_min <= 1.0:
            raise ValueError("reliability_min must be in (0, 1]")
        if not 0.0 < self.percentile < 1.0:
            raise ValueError("percentile must be in (0, 1)")
        for name in ("jitter_bound_us", "positioning_cm", "sync_bound_us"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")

    def with_(self, **changes) -> "KpiRequirementSet":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KpiRequirementSet":
        return cls(**d)
