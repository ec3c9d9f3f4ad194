"""Monitoring plane: pipeline ads and subscriptions, windowed KPIs, SLA checks, energy."""

from __future__ import annotations

import functools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .access import LinkSample

UNITS = ("us", "bps", "watts", "bool", "fraction")


class MonitoringError(RuntimeError):
    pass


class DuplicateTopic(MonitoringError):
    pass


class UnknownTopic(MonitoringError):
    pass


class SchemaMismatch(MonitoringError):
    pass


class EmptyWindow(MonitoringError):
    pass


class MissingKpi(MonitoringError):
    pass


class NonMonotonicInterval(MonitoringError):
    pass


@dataclass(frozen=True)
class MetricSample:
    t: int
    topic: str
    value: float
    unit: str


@dataclass(frozen=True)
class PipelineAd:
    topic: str
    producer: str
    schema: str

    def __post_init__(self):
        if self.schema not in UNITS:
            raise ValueError(f"unknown unit {self.schema!r}")


Consumer = Callable[[MetricSample], None]


@dataclass
class Subscription:
    topic: str
    consumer: Consumer
    active: bool = True


class Broker:
    """Synchronous publish/subscribe broker.

    Producers advertise a topic with a unit schema before publishing.
    Subscribers receive every sample published after they subscribe, in
    publish order, inside the publishing call.
    """

    def __init__(self):
        self._ads: dict[str, PipelineAd] = {}
        self._subs: dict[str, list[Subscription]] = defaultdict(list)
        self.published = 0

    def advertise(self, ad: PipelineAd) -> None:
        if ad.topic in self._ads:
            raise DuplicateTopic(ad.topic)
        self._ads[ad.topic] = ad

    def ensure(self, topic: str, producer: str, schema: str) -> None:
        """Advertise ``topic`` unless already advertised with the same schema."""
        ad = self._ads.get(topic)
        if ad is None:
            self.advertise(PipelineAd(topic, producer, schema))
        elif ad.schema != schema:
            raise SchemaMismatch(f"{topic} is {ad.schema}, not {schema}")

    def advertised(self, prefix: str = "") -> list[PipelineAd]:
        return [ad for t, ad in sorted(self._ads.items()) if t.startswith(prefix)]

    def subscribe(self, topic: str, consumer: Consumer) -> Subscription:
        if topic not in self._ads:
            raise UnknownTopic(topic)
        sub = Subscription(topic, consumer)
        self._subs[topic].append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        sub.active = False
        self._subs[sub.topic] = [s for s in self._subs[sub.topic] if s is not sub]

    def publish(self, sample: MetricSample) -> None:
        ad = self._ads.get(sample.topic)
        if ad is None:
            raise UnknownTopic(sample.topic)
        if sample.unit != ad.schema:
            raise SchemaMismatch(f"{sample.topic} expects {ad.schema}, got {sample.unit}")
        self.published += 1
        for sub in list(self._subs.get(sample.topic, ())):
            sub.consumer(sample)


# -- windowed KPI estimation -------------------------------------------------


@dataclass
class KpiWindow:
    flow: str
    samples: list
    span_us: int = 1_000_000
    t_end: Optional[int] = None

    @classmethod
    def from_samples(cls, flow: str, samples: Iterable[LinkSample], t_end: int,
                     span_us: int = 1_000_000) -> "KpiWindow":
        """Keep samples with ``t_end - span_us < t <= t_end``."""
        lo = t_end - span_us
        kept = [s for s in samples if lo < s.t <= t_end]
        return cls(flow, kept, span_us, t_end)


@functools.lru_cache(maxsize=4096)
def _rank(p: float, n: int) -> int:
    # Exact decimal arithmetic so that e.g. 0.99 * 100 is 99, not 99.00000000000001.
    return min(max(math.ceil(Fraction(str(p)) * n), 1), n)


def nearest_rank(values: Sequence, p: float):
    """Nearest-rank percentile: the sorted value at 1-based index ceil(p*n)."""
    n = len(values)
    if n == 0:
        raise EmptyWindow("no values")
    return sorted(values)[_rank(p, n) - 1]


def _parse_kind(kind: str) -> tuple[str, Optional[float]]:
    if kind.startswith("latency_p"):
        return "latency", float(kind[len("latency_p"):]) / 100.0
    return kind, None


def compute_kpi(w: KpiWindow, kind: str, percentile: Optional[float] = None) -> float:
    """KPI estimate over a window.

    ``kind`` is one of ``latency_pXX`` (e.g. ``latency_p99``), ``latency``
    (with ``percentile``), ``jitter``, ``throughput`` or ``reliability``.
    Jitter is the 99th nearest-rank percentile of the absolute deviation from
    the (lower) median latency. Throughput is in bits per second over the
    window span.
    """
    if not w.samples:
        raise EmptyWindow(w.flow)
    kind, p = _parse_kind(kind)
    if kind == "latency":
        p = percentile if p is None else p
        if p is None:
            raise ValueError("latency needs a percentile")
        return nearest_rank([s.latency_us for s in w.samples], p)
    if kind == "jitter":
        lat = [s.latency_us for s in w.samples]
        med = nearest_rank(lat, 0.5)
        return nearest_rank([abs(x - med) for x in lat], 0.99)
    if kind == "throughput":
        return sum(s.delivered_bits for s in w.samples) * 1_000_000 / w.span_us
    if kind == "reliability":
        lost = sum(1 for s in w.samples if s.lost)
        return 1.0 - lost / len(w.samples)
    raise ValueError(f"unknown KPI kind {kind!r}")


def window_kpis(w: KpiWindow, kpi) -> dict[str, float]:
    """Every KPI a requirement set asks for, estimated on ``w``."""
    out = {
        "latency": compute_kpi(w, "latency", kpi.percentile),
        "throughput": compute_kpi(w, "throughput"),
        "reliability": compute_kpi(w, "reliability"),
    }
    if kpi.jitter_bound_us is not None:
        out["jitter"] = compute_kpi(w, "jitter")
    return out


# -- SLA evaluation ------------------------------------------------------------


@dataclass(frozen=True)
class ComplianceRow:
    sla_id: str
    kpi: str
    measured: float
    bound: float
    passed: bool


@dataclass
class ComplianceReport:
    sla_id: str
    rows: list

    @property
    def compliant(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def failed(self) -> list:
        return [r.kpi for r in self.rows if not r.passed]


def whole_bit_rate(rate_bps: float, span_us: int) -> float:
    """Largest rate a window of ``span_us`` can report without exceeding ``rate_bps``.

    Delivered traffic is counted in whole bits, so over a short window the
    measured rate moves in steps of ``1e6 / span_us`` bps.
    """
    bits = math.floor(Fraction(rate_bps) * span_us / 1_000_000)
    return bits * 1_000_000 / span_us


def required_kpis(kpi, span_us: Optional[int] = None) -> list[tuple[str, float, str]]:
    """(name, bound, direction) triples; direction is ``le``, ``lt`` or ``ge``.

    With ``span_us`` the throughput bound is rounded down to the window's
    whole-bit resolution (see :func:`whole_bit_rate`).
    """
    upper = "lt" if kpi.latency_strict else "le"
    req = [("latency", kpi.latency_bound_us, upper)]
    if kpi.jitter_bound_us is not None:
        req.append(("jitter", kpi.jitter_bound_us, upper))
    tput = kpi.throughput_dl_bps if span_us is None else whole_bit_rate(kpi.throughput_dl_bps, span_us)
    req.append(("throughput", tput, "ge"))
    req.append(("reliability", kpi.reliability_min, "ge"))
    return req


def _passes(measured: float, bound: float, direction: str) -> bool:
    if direction == "le":
        return measured <= bound
    if direction == "lt":
        return measured < bound
    return measured >= bound


def evaluate_sla(sla, kpis: Mapping[str, float], t: int = 0,
                 broker: Optional[Broker] = None, span_us: Optional[int] = None) -> ComplianceReport:
    """Per-KPI pass/fail of measured values against an SLA's bounds.

    A failure moves ``sla.state`` to ``"violated"`` and, when a broker is
    given, publishes a violation sample on ``orch.sla.<id>``. ``span_us`` is
    the window the KPIs were measured over, if any.
    """
    rows = []
    for name, bound, direction in required_kpis(sla.kpi, span_us):
        if name not in kpis:
            raise MissingKpi(f"{sla.id}: {name}")
        measured = kpis[name]
        rows.append(ComplianceRow(sla.id, name, measured, bound, _passes(measured, bound, direction)))
    report = ComplianceReport(sla.id, rows)
    if not report.compliant:
        sla.state = "violated"
        if broker is not None:
            topic = f"orch.sla.{sla.id}"
            broker.ensure(topic, "monitoring", "bool")
            broker.publish(MetricSample(t, topic, 1.0, "bool"))
    return report


# -- energy --------------------------------------------------------------------


@dataclass
class EnergyLedger:
    joules: dict = field(default_factory=dict)
    delivered_bits: int = 0

    def add(self, component: str, joules: float) -> None:
        if joules < 0:
            raise ValueError("energy increments must be non-negative")
        self.joules[component] = self.joules.get(component, 0.0) + joules

    def total(self) -> float:
        return sum(self.joules.values())

    def efficiency(self) -> float:
        """Delivered bits per joule."""
        total = self.total()
        return self.delivered_bits / total if total > 0 else math.inf

    def efficiency_tbit_per_j(self) -> float:
        return self.efficiency() / 1e12


def account_energy(ledger: EnergyLedger, t0: int, t1: int,
                   power_readings: Mapping[str, Sequence[tuple[int, float]]],
                   delivered_bits: int = 0) -> dict[str, float]:
    """Integrate piecewise-constant power over ``[t0, t1]`` (microseconds).

    Each component's readings are ``(t_us, watts)`` pairs; a reading holds
    until the next one. The first reading must be at or before ``t0``.
    Returns the per-component joules added.
    """
    if t1 <= t0:
        raise NonMonotonicInterval(f"t1={t1} <= t0={t0}")
    delta: dict[str, float] = {}
    for comp, readings in power_readings.items():
        if not readings or readings[0][0] > t0:
            raise NonMonotonicInterval(f"{comp}: readings do not cover t0={t0}")
        times = [t for t, _ in readings]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise NonMonotonicInterval(f"{comp}: reading times must increase")
        j = 0.0
        for k, (t, w) in enumerate(readings):
            seg_start = max(t, t0)
            seg_end = min(readings[k + 1][0], t1) if k + 1 < len(readings) else t1
            if seg_end > seg_start:
                j += w * ((seg_end - seg_start) / 1_000_000)
        ledger.add(comp, j)
        delta[comp] = j
    ledger.delivered_bits += delivered_bits
    return delta
